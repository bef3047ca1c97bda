//! Selective inference for L1-based transfer learning on the target task.
//!
//! The crate fits a two-stage transfer estimator (TransFusion, or the
//! pooled-source Oracle Trans-Lasso), records the selection it makes, and
//! computes p-values for the selected target coefficients that are valid
//! conditional on that selection — by characterizing, along the line of
//! responses that move a single test statistic, exactly which statistic
//! values reproduce the observed selection.

pub mod data_model;
pub mod driver;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod kkt_regions;
pub mod linalg;
pub mod normal;
pub mod parametric_search;
pub mod pipelines;
pub mod stats;
pub mod weighted_lasso;

pub use data_model::{
    active_set, build_eta, build_stacked, hypothesis_for, Hypothesis, Interval, MultiTaskData,
    SelectionTrace, StackedProblem, TaskData, TruncationRegion, ZERO_THRESHOLD,
};
pub use driver::{
    run_ptlsi, run_ptlsi_oc, BaselineOptions, ConditioningMode, FeatureInference, FeatureOutcome,
    InferenceConfig, InferenceResult,
};
pub use error::{CoreError, Result};
pub use experiments::{
    estimate_fpr, estimate_tpr, generate, ingest_csv, run_suite, DomainSpec, GroundTruth,
    IngestOptions, IngestReport, Method, MethodSummary, NoiseFamily, RateEstimate, Scenario,
    SuiteConfig, SuiteOutcome, SyntheticSpec, TrialTiming,
};
pub use inference::{
    bonferroni_p, decompose, naive_p, split_inference, truncated_p, LineSlice, PValueReport,
    SplitInference,
};
pub use kkt_regions::{
    traces_match, Feasibility, GramCache, LinearSystem1D, RegionAssembler, RegionMatrices,
};
pub use parametric_search::{
    advance, divide_and_conquer, region_at, LineSegment, SearchOptions, SearchStats, SweepOutcome,
};
pub use pipelines::{
    oracle_translasso_fit, transfusion_fit, FitSettings, OracleTransLassoConfig, PipelineConfig,
    PipelineSystem, TransFusionConfig, WarmState,
};
pub use weighted_lasso::{solve, solve_view, L1Problem, L1Solution, L1View, SolveOptions};
