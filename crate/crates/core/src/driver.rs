//! End-to-end run: fit the pipeline once, then, for every selected feature,
//! scan its statistic line and compute the selective p-value plus the
//! requested baselines. Features are processed independently (in parallel
//! when a thread pool is available) and a failure in one feature downgrades
//! that feature to a skip instead of aborting the run.

use rayon::prelude::*;
use serde::Serialize;

use crate::data_model::{hypothesis_for, Interval, MultiTaskData, TruncationRegion};
use crate::error::Result;
use crate::inference::{
    bonferroni_p, decompose, naive_p, split_inference, truncated_p, PValueReport, SplitInference,
};
use crate::parametric_search::{divide_and_conquer, region_at, SearchOptions, SearchStats};
use crate::pipelines::{PipelineConfig, PipelineSystem};

/// What the truncation region conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConditioningMode {
    /// Scan the whole window and keep every segment reproducing the observed
    /// outcome.
    Full,
    /// Keep only the single segment of the observed outcome.
    OverConditioning,
}

/// Optional baseline p-values to report alongside the selective one.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineOptions {
    /// Report the multiplicity-corrected naive p-value.
    pub bonferroni: bool,
    /// Run the sample-splitting baseline with this shuffle seed.
    pub datasplit: Option<u64>,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions { bonferroni: true, datasplit: None }
    }
}

/// Full configuration of one inference run.
#[derive(Debug, Clone, Serialize)]
pub struct InferenceConfig {
    pub pipeline: PipelineConfig,
    pub mode: ConditioningMode,
    pub baselines: BaselineOptions,
    /// In `Full` mode, also report the p-value of the observed segment alone
    /// (it falls out of the scan for free).
    pub compute_oc: bool,
    pub search: SearchOptions,
}

impl InferenceConfig {
    pub fn new(pipeline: PipelineConfig) -> Self {
        InferenceConfig {
            pipeline,
            mode: ConditioningMode::Full,
            baselines: BaselineOptions::default(),
            compute_oc: false,
            search: SearchOptions::default(),
        }
    }
}

/// Inference outcome for one selected feature.
#[derive(Debug, Clone, Serialize)]
pub enum FeatureOutcome {
    Report(PValueReport),
    Skipped { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureInference {
    pub feature_index: usize,
    pub sign: f64,
    pub outcome: FeatureOutcome,
    /// P-value of the observed segment alone, when requested and available.
    pub p_selective_oc: Option<f64>,
    pub stats: SearchStats,
}

/// Result of a full run. Serializes to a stable, reproducible document.
#[derive(Debug, Clone, Serialize)]
pub struct InferenceResult {
    pub pipeline: String,
    pub mode: ConditioningMode,
    pub selected: Vec<usize>,
    pub selected_signs: Vec<f64>,
    pub features: Vec<FeatureInference>,
    pub split: Option<SplitInference>,
}

fn clip_region(region: &TruncationRegion, window: &Interval) -> TruncationRegion {
    let intervals = region
        .intervals
        .iter()
        .filter_map(|iv| {
            Interval::new(
                iv.lower.max(window.lower).min(window.upper),
                iv.upper.min(window.upper).max(window.lower),
            )
        })
        .collect();
    TruncationRegion { intervals }
}

/// Run the configured pipeline and compute p-values for every selected
/// feature.
pub fn run_ptlsi(data: &MultiTaskData, cfg: &InferenceConfig) -> Result<InferenceResult> {
    let sys = PipelineSystem::build(data, &cfg.pipeline)?;
    let settings = cfg.search.fit_settings();
    let trace = sys.fit_observed(&settings)?;
    let split = match cfg.baselines.datasplit {
        Some(seed) => Some(split_inference(data, &cfg.pipeline, seed, &settings)?),
        None => None,
    };
    let p_count = sys.p();
    let y_obs = sys.response().clone();
    let features: Vec<FeatureInference> = trace
        .selected
        .par_iter()
        .zip(trace.selected_signs.par_iter())
        .map(|(&j, &sign)| {
            let (outcome, p_oc, stats) = infer_feature(&sys, &trace, &y_obs, j, cfg, p_count, &split);
            FeatureInference { feature_index: j, sign, outcome, p_selective_oc: p_oc, stats }
        })
        .collect();
    Ok(InferenceResult {
        pipeline: cfg.pipeline.name().to_string(),
        mode: cfg.mode,
        selected: trace.selected.clone(),
        selected_signs: trace.selected_signs.clone(),
        features,
        split,
    })
}

/// [`run_ptlsi`] conditioning on the observed segment alone.
pub fn run_ptlsi_oc(data: &MultiTaskData, cfg: &InferenceConfig) -> Result<InferenceResult> {
    let mut c = cfg.clone();
    c.mode = ConditioningMode::OverConditioning;
    run_ptlsi(data, &c)
}

fn infer_feature(
    sys: &PipelineSystem,
    trace: &crate::data_model::SelectionTrace,
    y_obs: &nalgebra::DVector<f64>,
    j: usize,
    cfg: &InferenceConfig,
    p_count: usize,
    split: &Option<SplitInference>,
) -> (FeatureOutcome, Option<f64>, SearchStats) {
    let attempt = || -> Result<(PValueReport, Option<f64>, SearchStats)> {
        let hyp = hypothesis_for(
            sys.target_design(),
            &trace.selected,
            j,
            sys.zero_prefix(),
            sys.covariance(),
            y_obs,
        )?;
        let line = decompose(y_obs, &hyp, sys.covariance())?;
        let (region, p_oc, stats) = match cfg.mode {
            ConditioningMode::Full => {
                let out = divide_and_conquer(sys, &line, trace, &cfg.search)?;
                if !out.region.contains(line.z_obs, 1e-9 * line.sigma) {
                    return Err(crate::error::CoreError::inconsistency(format!(
                        "matching region for feature {j} does not contain the observed statistic"
                    )));
                }
                let p_oc = if cfg.compute_oc {
                    let own = out
                        .segments
                        .iter()
                        .find(|s| {
                            s.matches_observed && s.interval.contains(line.z_obs, 1e-9 * line.sigma)
                        })
                        .map(|s| TruncationRegion { intervals: vec![s.interval] });
                    match own {
                        Some(r) => Some(truncated_p(&r, line.z_obs, line.sigma)?),
                        None => None,
                    }
                } else {
                    None
                };
                (out.region, p_oc, out.stats)
            }
            ConditioningMode::OverConditioning => {
                let (region, _mats) = region_at(sys, &line, trace, &cfg.search)?;
                let stats = SearchStats {
                    segments_visited: 1,
                    matching_segments: 1,
                    ..SearchStats::default()
                };
                (region, None, stats)
            }
        };
        let p_selective = truncated_p(&region, line.z_obs, line.sigma)?;
        let p_naive = naive_p(line.z_obs, line.sigma);
        let p_bonferroni =
            cfg.baselines.bonferroni.then(|| bonferroni_p(p_naive, p_count));
        let p_datasplit = split.as_ref().and_then(|s| {
            s.selected.iter().position(|&f| f == j).map(|pos| s.p_values[pos])
        });
        let report = PValueReport {
            feature_index: j,
            z_obs: line.z_obs,
            sigma: line.sigma,
            region: clip_region(&region, &line.window),
            p_selective,
            p_naive,
            p_bonferroni,
            p_datasplit,
        };
        Ok((report, p_oc, stats))
    };
    match attempt() {
        Ok((report, p_oc, stats)) => (FeatureOutcome::Report(report), p_oc, stats),
        Err(e) => (
            FeatureOutcome::Skipped { reason: e.to_string() },
            None,
            SearchStats::default(),
        ),
    }
}
