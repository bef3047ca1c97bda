//! Monte-Carlo harness: run many independent trials of
//! generate-fit-infer and tally rejection rates per method.
//!
//! Trials are embarrassingly parallel. Each trial seeds its own generator
//! from the master seed plus the trial index (stream splitting), so the
//! results are bit-identical at any thread count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::driver::{run_ptlsi, FeatureOutcome, InferenceConfig, InferenceResult};
use crate::error::{CoreError, Result};
use crate::parametric_search::SearchOptions;
use crate::pipelines::{OracleTransLassoConfig, PipelineConfig, TransFusionConfig};
use crate::stats::wilson_ci;

use super::generate::{generate, GroundTruth, Scenario, SyntheticSpec};

/// Inference method whose rejection behavior is being measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Selective p-value from the full matching region.
    Selective,
    /// Selective p-value from the observed segment only.
    OverConditioned,
    /// Naive two-sided z-test ignoring selection.
    Naive,
    /// Naive p-value with Bonferroni multiplicity correction.
    Bonferroni,
    /// Sample-splitting baseline with its own selection.
    DataSplit,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Selective,
        Method::OverConditioned,
        Method::Naive,
        Method::Bonferroni,
        Method::DataSplit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Selective => "selective",
            Method::OverConditioned => "oc",
            Method::Naive => "naive",
            Method::Bonferroni => "bonferroni",
            Method::DataSplit => "datasplit",
        }
    }
}

/// One suite: a synthetic configuration, a pipeline, and how many trials.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteConfig {
    pub spec: SyntheticSpec,
    pub pipeline: PipelineConfig,
    pub trials: usize,
    pub alpha: f64,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub search: SearchOptions,
    /// Print a progress line to stderr every few trials.
    pub progress: bool,
}

impl SuiteConfig {
    /// A TransFusion suite with the default pipeline hyperparameters.
    pub fn transfusion(spec: SyntheticSpec, trials: usize, master_seed: u64) -> Self {
        SuiteConfig {
            spec,
            pipeline: PipelineConfig::TransFusion(TransFusionConfig::default()),
            trials,
            alpha: 0.05,
            master_seed,
            methods: vec![Method::Selective],
            search: SearchOptions::default(),
            progress: false,
        }
    }

    /// An Oracle Trans-Lasso suite; the pipeline is told which sources are
    /// informative, matching the generator (the leading ones).
    pub fn oracle(spec: SyntheticSpec, trials: usize, master_seed: u64) -> Self {
        let informative = (0..spec.informative).collect();
        SuiteConfig {
            pipeline: PipelineConfig::OracleTransLasso(OracleTransLassoConfig::with_informative(
                informative,
            )),
            spec,
            trials,
            alpha: 0.05,
            master_seed,
            methods: vec![Method::Selective],
            search: SearchOptions::default(),
            progress: false,
        }
    }

    pub fn with_methods(mut self, methods: Vec<Method>) -> Self {
        self.methods = methods;
        self
    }

    fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.trials == 0 {
            return Err(CoreError::validation("need at least one trial"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) && self.alpha != 0.0 {
            return Err(CoreError::validation("alpha must lie in [0, 1)"));
        }
        if self.methods.is_empty() {
            return Err(CoreError::validation("need at least one method"));
        }
        Ok(())
    }
}

/// Rejection-rate estimate with a 95% score confidence interval.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateEstimate {
    pub rejections: usize,
    pub tests: usize,
    pub rate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl RateEstimate {
    fn from_counts(rejections: usize, tests: usize) -> Option<Self> {
        if tests == 0 {
            return None;
        }
        let (ci_lower, ci_upper) = wilson_ci(rejections, tests);
        Some(RateEstimate {
            rejections,
            tests,
            rate: rejections as f64 / tests as f64,
            ci_lower,
            ci_upper,
        })
    }
}

/// Pooled results for one method across all trials.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub null_tests: usize,
    pub null_rejections: usize,
    pub nonnull_tests: usize,
    pub nonnull_rejections: usize,
    /// Features the method could not test (numeric skip, or a feature the
    /// over-conditioned report was unavailable for).
    pub skipped: usize,
    /// P-values of truly-null tested features, in trial order.
    pub null_pvalues: Vec<f64>,
    /// P-values of truly-nonnull tested features, in trial order.
    pub nonnull_pvalues: Vec<f64>,
}

impl MethodSummary {
    fn new(method: Method) -> Self {
        MethodSummary {
            method,
            null_tests: 0,
            null_rejections: 0,
            nonnull_tests: 0,
            nonnull_rejections: 0,
            skipped: 0,
            null_pvalues: Vec::new(),
            nonnull_pvalues: Vec::new(),
        }
    }

    /// Share of tested truly-null features that were rejected.
    pub fn fpr(&self) -> Option<RateEstimate> {
        RateEstimate::from_counts(self.null_rejections, self.null_tests)
    }

    /// Share of tested truly-nonnull features that were rejected.
    pub fn tpr(&self) -> Option<RateEstimate> {
        RateEstimate::from_counts(self.nonnull_rejections, self.nonnull_tests)
    }
}

/// Wall time and scan size of one trial (inference only, generation
/// excluded).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrialTiming {
    pub trial: usize,
    pub secs: f64,
    /// Segments visited, summed over the trial's features.
    pub segments: usize,
    /// Number of selected features the trial tested.
    pub features: usize,
}

/// Everything a suite run produced.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub trials: usize,
    pub alpha: f64,
    /// Trials whose observed selection was empty (they contribute no tests).
    pub empty_trials: usize,
    /// Trials whose sample-splitting baseline was degenerate.
    pub degenerate_splits: usize,
    pub methods: Vec<MethodSummary>,
    pub timings: Vec<TrialTiming>,
}

impl SuiteOutcome {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn fpr(&self, method: Method) -> Option<RateEstimate> {
        self.summary(method).and_then(|m| m.fpr())
    }

    pub fn tpr(&self, method: Method) -> Option<RateEstimate> {
        self.summary(method).and_then(|m| m.tpr())
    }
}

struct MethodTrial {
    null_p: Vec<f64>,
    nonnull_p: Vec<f64>,
    skipped: usize,
}

struct TrialData {
    per_method: Vec<MethodTrial>,
    empty: bool,
    degenerate_split: bool,
    timing: TrialTiming,
}

fn method_pvalue(result: &InferenceResult, feature_pos: usize, method: Method) -> Option<f64> {
    let f = &result.features[feature_pos];
    let report = match &f.outcome {
        FeatureOutcome::Report(r) => r,
        FeatureOutcome::Skipped { .. } => return None,
    };
    match method {
        Method::Selective => Some(report.p_selective),
        Method::OverConditioned => f.p_selective_oc,
        Method::Naive => Some(report.p_naive),
        Method::Bonferroni => report.p_bonferroni,
        Method::DataSplit => None,
    }
}

fn run_trial(cfg: &SuiteConfig, trial: usize) -> Result<TrialData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(trial as u64 + 1);
    let (data, truth) = generate(&cfg.spec, &mut rng)?;
    let split_seed: u64 = rng.random();

    let wants = |m: Method| cfg.methods.contains(&m);
    let inference_cfg = InferenceConfig {
        pipeline: cfg.pipeline.clone(),
        mode: crate::driver::ConditioningMode::Full,
        baselines: crate::driver::BaselineOptions {
            bonferroni: wants(Method::Bonferroni),
            datasplit: wants(Method::DataSplit).then_some(split_seed),
        },
        compute_oc: wants(Method::OverConditioned),
        search: cfg.search,
    };
    let started = Instant::now();
    let result = run_ptlsi(&data, &inference_cfg)?;
    let secs = started.elapsed().as_secs_f64();
    let segments: usize = result.features.iter().map(|f| f.stats.segments_visited).sum();

    let mut per_method = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let mut mt = MethodTrial { null_p: Vec::new(), nonnull_p: Vec::new(), skipped: 0 };
        if method == Method::DataSplit {
            // The splitting baseline tests its own selection, not the
            // pipeline's.
            if let Some(split) = &result.split {
                for (pos, &j) in split.selected.iter().enumerate() {
                    let p = split.p_values[pos];
                    if truth.is_nonnull(j) {
                        mt.nonnull_p.push(p);
                    } else {
                        mt.null_p.push(p);
                    }
                }
            }
        } else {
            for (pos, &j) in result.selected.iter().enumerate() {
                match method_pvalue(&result, pos, method) {
                    Some(p) => {
                        if truth.is_nonnull(j) {
                            mt.nonnull_p.push(p);
                        } else {
                            mt.null_p.push(p);
                        }
                    }
                    None => mt.skipped += 1,
                }
            }
        }
        per_method.push(mt);
    }
    Ok(TrialData {
        per_method,
        empty: result.selected.is_empty(),
        degenerate_split: result.split.as_ref().is_some_and(|s| s.degenerate),
        timing: TrialTiming { trial, secs, segments, features: result.selected.len() },
    })
}

/// Run every trial of the suite and pool the results.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteOutcome> {
    cfg.validate()?;
    let done = AtomicUsize::new(0);
    let step = (cfg.trials / 20).max(1);
    let trials: Vec<TrialData> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let out = run_trial(cfg, t);
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if cfg.progress && (n % step == 0 || n == cfg.trials) {
                eprintln!("suite progress: {n}/{} trials", cfg.trials);
            }
            out
        })
        .collect::<Result<Vec<_>>>()?;

    let mut methods: Vec<MethodSummary> =
        cfg.methods.iter().map(|&m| MethodSummary::new(m)).collect();
    let mut empty_trials = 0;
    let mut degenerate_splits = 0;
    let mut timings = Vec::with_capacity(cfg.trials);
    for trial in &trials {
        if trial.empty {
            empty_trials += 1;
        }
        if trial.degenerate_split {
            degenerate_splits += 1;
        }
        timings.push(trial.timing);
        for (summary, mt) in methods.iter_mut().zip(trial.per_method.iter()) {
            summary.null_tests += mt.null_p.len();
            summary.nonnull_tests += mt.nonnull_p.len();
            summary.skipped += mt.skipped;
            summary.null_rejections += mt.null_p.iter().filter(|&&p| p <= cfg.alpha).count();
            summary.nonnull_rejections +=
                mt.nonnull_p.iter().filter(|&&p| p <= cfg.alpha).count();
            summary.null_pvalues.extend_from_slice(&mt.null_p);
            summary.nonnull_pvalues.extend_from_slice(&mt.nonnull_p);
        }
    }
    Ok(SuiteOutcome {
        trials: cfg.trials,
        alpha: cfg.alpha,
        empty_trials,
        degenerate_splits,
        methods,
        timings,
    })
}

/// Run a null-scenario suite and report the false positive rate of one
/// method.
pub fn estimate_fpr(cfg: &SuiteConfig, method: Method) -> Result<RateEstimate> {
    if cfg.spec.scenario != Scenario::Null {
        return Err(CoreError::validation(
            "false-positive-rate estimation needs the null scenario",
        ));
    }
    rate_of(cfg, method, |o, m| o.fpr(m))
}

/// Run a signal-scenario suite and report the true positive rate of one
/// method.
pub fn estimate_tpr(cfg: &SuiteConfig, method: Method) -> Result<RateEstimate> {
    if cfg.spec.scenario != Scenario::Signal {
        return Err(CoreError::validation(
            "true-positive-rate estimation needs the signal scenario",
        ));
    }
    rate_of(cfg, method, |o, m| o.tpr(m))
}

fn rate_of(
    cfg: &SuiteConfig,
    method: Method,
    pick: impl Fn(&SuiteOutcome, Method) -> Option<RateEstimate>,
) -> Result<RateEstimate> {
    let mut cfg = cfg.clone();
    if !cfg.methods.contains(&method) {
        cfg.methods.push(method);
    }
    let outcome = run_suite(&cfg)?;
    pick(&outcome, method).ok_or_else(|| {
        CoreError::degenerate("no hypotheses were tested: every trial selected nothing")
    })
}

/// Ground truth accessor reused by calibration checks.
pub fn truth_for_trial(cfg: &SuiteConfig, trial: usize) -> Result<GroundTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(trial as u64 + 1);
    Ok(generate(&cfg.spec, &mut rng)?.1)
}
