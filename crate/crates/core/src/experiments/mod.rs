//! Synthetic benchmarks and data loading: generate datasets with known
//! truth, run Monte-Carlo suites that estimate error rates per method, and
//! ingest real CSV data into the multi-task model.

pub mod generate;
pub mod ingest;
pub mod suite;

pub use generate::{generate, GroundTruth, NoiseFamily, Scenario, SyntheticSpec};
pub use ingest::{export_csv, ingest_csv, DomainSpec, IngestOptions, IngestReport};
pub use suite::{
    estimate_fpr, estimate_tpr, run_suite, truth_for_trial, Method, MethodSummary, RateEstimate,
    SuiteConfig, SuiteOutcome, TrialTiming,
};
