//! The two transfer estimators.
//!
//! **TransFusion**: a single weighted solve over the stacked co-training
//! system estimates per-source offsets and a shared component jointly; the
//! sample-size-weighted combination of the implied per-task coefficients is
//! then debiased by a second solve on the target residual.
//!
//! **Oracle Trans-Lasso**: a plain solve pooling a known informative subset
//! of the sources, debiased the same way.
//!
//! Both end with the same selection rule: features whose final target
//! coefficient clears the zero threshold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_model::{
    active_set, build_stacked, MultiTaskData, SelectionTrace, StackedProblem,
};
use crate::error::{CoreError, Result};
use crate::linalg::BlockDiag;
use crate::weighted_lasso::{solve_view, L1View, SolveOptions};

/// Settings for the TransFusion pipeline. `None` penalty levels resolve to
/// `lambda_scale * sqrt(ln p / n)` with the `n` of the respective solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransFusionConfig {
    /// Per-source penalty factors for the offset blocks (default all 1).
    pub source_weights: Option<Vec<f64>>,
    /// Penalty level of the stacked co-training solve.
    pub lambda_stacked: Option<f64>,
    /// Penalty level of the target debias solve.
    pub lambda_debias: Option<f64>,
    /// Multiplier applied to the default penalty formulas.
    pub lambda_scale: f64,
}

impl Default for TransFusionConfig {
    fn default() -> Self {
        TransFusionConfig {
            source_weights: None,
            lambda_stacked: None,
            lambda_debias: None,
            lambda_scale: 1.0,
        }
    }
}

/// Settings for the Oracle Trans-Lasso pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleTransLassoConfig {
    /// Indices of the sources known to be informative, in stacking order.
    pub informative: Vec<usize>,
    /// Penalty level of the pooled-source solve.
    pub lambda_pooled: Option<f64>,
    /// Penalty level of the target debias solve.
    pub lambda_debias: Option<f64>,
    /// Multiplier applied to the default penalty formulas.
    pub lambda_scale: f64,
}

impl OracleTransLassoConfig {
    pub fn with_informative(informative: Vec<usize>) -> Self {
        OracleTransLassoConfig {
            informative,
            lambda_pooled: None,
            lambda_debias: None,
            lambda_scale: 1.0,
        }
    }
}

/// Which pipeline to run, with its settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PipelineConfig {
    TransFusion(TransFusionConfig),
    OracleTransLasso(OracleTransLassoConfig),
}

impl PipelineConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PipelineConfig::TransFusion(_) => "transfusion",
            PipelineConfig::OracleTransLasso(_) => "oracle-translasso",
        }
    }
}

/// Starting points carried between consecutive fits of nearby responses.
#[derive(Debug, Clone)]
pub struct WarmState {
    pub stage_one: DVector<f64>,
    pub delta: DVector<f64>,
}

impl WarmState {
    pub fn from_trace(trace: &SelectionTrace) -> Self {
        WarmState { stage_one: trace.stage_one.clone(), delta: trace.delta_hat.clone() }
    }
}

/// Solver controls shared by both stages of a fit.
#[derive(Debug, Clone, Copy)]
pub struct FitSettings {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings { tol: 1e-8, max_sweeps: 100_000 }
    }
}

/// A fully resolved pipeline: designs, observed response, covariance, and
/// penalty levels, ready to be fit at the observed response or at any other
/// response on the same row layout.
#[derive(Debug, Clone)]
pub enum PipelineSystem {
    TransFusion {
        stacked: StackedProblem,
        target_design: DMatrix<f64>,
        target_units: DVector<f64>,
        lambda_stacked: f64,
        lambda_debias: f64,
    },
    OracleTransLasso {
        /// Row-stacked designs of the informative sources (`n_I` by `p`).
        source_design: DMatrix<f64>,
        target_design: DMatrix<f64>,
        /// Observed stacked response: informative sources, then target.
        obs_response: DVector<f64>,
        covariance: BlockDiag,
        unit_weights: DVector<f64>,
        informative: Vec<usize>,
        n_i: usize,
        n_t: usize,
        lambda_pooled: f64,
        lambda_debias: f64,
    },
}

fn default_lambda(p: usize, n: usize, scale: f64) -> f64 {
    scale * ((p as f64).ln() / (n as f64)).sqrt()
}

fn resolve_lambda(explicit: Option<f64>, p: usize, n: usize, scale: f64, what: &str) -> Result<f64> {
    let lam = explicit.unwrap_or_else(|| default_lambda(p, n, scale));
    if !(lam > 0.0) || !lam.is_finite() {
        return Err(CoreError::validation(format!(
            "{what} penalty level must be positive and finite, got {lam} \
             (give an explicit level when the feature count is 1)"
        )));
    }
    Ok(lam)
}

impl PipelineSystem {
    pub fn build(data: &MultiTaskData, cfg: &PipelineConfig) -> Result<PipelineSystem> {
        match cfg {
            PipelineConfig::TransFusion(tf) => {
                if !(tf.lambda_scale > 0.0) || !tf.lambda_scale.is_finite() {
                    return Err(CoreError::validation(format!(
                        "lambda_scale must be positive, got {}",
                        tf.lambda_scale
                    )));
                }
                let k = data.k();
                let p = data.feature_count();
                let weights = match &tf.source_weights {
                    Some(w) => w.clone(),
                    None => vec![1.0; k],
                };
                let stacked = build_stacked(data, &weights)?;
                let big_n = stacked.big_n();
                let lambda_stacked =
                    resolve_lambda(tf.lambda_stacked, p, big_n, tf.lambda_scale, "stacked")?;
                let lambda_debias =
                    resolve_lambda(tf.lambda_debias, p, data.n_t(), tf.lambda_scale, "debias")?;
                Ok(PipelineSystem::TransFusion {
                    stacked,
                    target_design: data.target.design.clone(),
                    target_units: DVector::from_element(p, 1.0),
                    lambda_stacked,
                    lambda_debias,
                })
            }
            PipelineConfig::OracleTransLasso(oc) => {
                if !(oc.lambda_scale > 0.0) || !oc.lambda_scale.is_finite() {
                    return Err(CoreError::validation(format!(
                        "lambda_scale must be positive, got {}",
                        oc.lambda_scale
                    )));
                }
                let k = data.k();
                let p = data.feature_count();
                if oc.informative.is_empty() {
                    return Err(CoreError::validation("informative source set is empty"));
                }
                let mut seen = vec![false; k];
                for &i in &oc.informative {
                    if i >= k {
                        return Err(CoreError::validation(format!(
                            "informative source index {i} out of range for {k} sources"
                        )));
                    }
                    if seen[i] {
                        return Err(CoreError::validation(format!(
                            "informative source index {i} listed twice"
                        )));
                    }
                    seen[i] = true;
                }
                let n_s = data.n_s();
                let n_t = data.n_t();
                let n_i = oc.informative.len() * n_s;
                let mut source_design = DMatrix::<f64>::zeros(n_i, p);
                let mut obs_response = DVector::<f64>::zeros(n_i + n_t);
                let mut blocks = Vec::with_capacity(oc.informative.len() + 1);
                for (pos, &src) in oc.informative.iter().enumerate() {
                    let task = &data.sources[src];
                    source_design.view_mut((pos * n_s, 0), (n_s, p)).copy_from(&task.design);
                    obs_response.rows_mut(pos * n_s, n_s).copy_from(&task.response);
                    blocks.push(task.covariance.clone());
                }
                obs_response.rows_mut(n_i, n_t).copy_from(&data.target.response);
                blocks.push(data.target.covariance.clone());
                let lambda_pooled =
                    resolve_lambda(oc.lambda_pooled, p, n_i, oc.lambda_scale, "pooled")?;
                let lambda_debias =
                    resolve_lambda(oc.lambda_debias, p, n_t, oc.lambda_scale, "debias")?;
                Ok(PipelineSystem::OracleTransLasso {
                    source_design,
                    target_design: data.target.design.clone(),
                    obs_response,
                    covariance: BlockDiag::new(blocks)?,
                    unit_weights: DVector::from_element(p, 1.0),
                    informative: oc.informative.clone(),
                    n_i,
                    n_t,
                    lambda_pooled,
                    lambda_debias,
                })
            }
        }
    }

    /// Feature count of the target problem.
    pub fn p(&self) -> usize {
        self.target_design().ncols()
    }

    /// Total stacked row count.
    pub fn big_n(&self) -> usize {
        match self {
            PipelineSystem::TransFusion { stacked, .. } => stacked.big_n(),
            PipelineSystem::OracleTransLasso { n_i, n_t, .. } => n_i + n_t,
        }
    }

    /// Rows preceding the target block in the stacked response.
    pub fn zero_prefix(&self) -> usize {
        match self {
            PipelineSystem::TransFusion { stacked, .. } => stacked.k * stacked.n_s,
            PipelineSystem::OracleTransLasso { n_i, .. } => *n_i,
        }
    }

    /// Target sample size.
    pub fn n_t(&self) -> usize {
        match self {
            PipelineSystem::TransFusion { stacked, .. } => stacked.n_t,
            PipelineSystem::OracleTransLasso { n_t, .. } => *n_t,
        }
    }

    /// Observed stacked response.
    pub fn response(&self) -> &DVector<f64> {
        match self {
            PipelineSystem::TransFusion { stacked, .. } => &stacked.response,
            PipelineSystem::OracleTransLasso { obs_response, .. } => obs_response,
        }
    }

    /// Covariance of the stacked response.
    pub fn covariance(&self) -> &BlockDiag {
        match self {
            PipelineSystem::TransFusion { stacked, .. } => &stacked.covariance,
            PipelineSystem::OracleTransLasso { covariance, .. } => covariance,
        }
    }

    pub fn target_design(&self) -> &DMatrix<f64> {
        match self {
            PipelineSystem::TransFusion { target_design, .. } => target_design,
            PipelineSystem::OracleTransLasso { target_design, .. } => target_design,
        }
    }

    /// Rows of the stacked response seen by the first stage.
    pub fn stage_one_row_range(&self) -> std::ops::Range<usize> {
        match self {
            PipelineSystem::TransFusion { stacked, .. } => 0..stacked.big_n(),
            PipelineSystem::OracleTransLasso { n_i, .. } => 0..*n_i,
        }
    }

    /// First-stage design.
    pub fn stage_one_design(&self) -> &DMatrix<f64> {
        match self {
            PipelineSystem::TransFusion { stacked, .. } => &stacked.design,
            PipelineSystem::OracleTransLasso { source_design, .. } => source_design,
        }
    }

    /// First-stage per-coordinate penalty weights.
    pub fn stage_one_weights(&self) -> &DVector<f64> {
        match self {
            PipelineSystem::TransFusion { stacked, .. } => &stacked.penalty_weights,
            PipelineSystem::OracleTransLasso { unit_weights, .. } => unit_weights,
        }
    }

    /// `lambda * n` of the first stage — the penalty on the unnormalized
    /// (sum-of-squares) objective.
    pub fn stage_one_lambda_n(&self) -> f64 {
        match self {
            PipelineSystem::TransFusion { stacked, lambda_stacked, .. } => {
                lambda_stacked * stacked.big_n() as f64
            }
            PipelineSystem::OracleTransLasso { n_i, lambda_pooled, .. } => {
                lambda_pooled * *n_i as f64
            }
        }
    }

    /// `lambda * n` of the debias stage.
    pub fn stage_two_lambda_n(&self) -> f64 {
        match self {
            PipelineSystem::TransFusion { stacked, lambda_debias, .. } => {
                lambda_debias * stacked.n_t as f64
            }
            PipelineSystem::OracleTransLasso { n_t, lambda_debias, .. } => {
                lambda_debias * *n_t as f64
            }
        }
    }

    /// Map a first-stage coefficient index to its target feature and the
    /// multiplier it contributes to the transferred estimate.
    pub fn combine_coeff(&self, index: usize) -> (usize, f64) {
        match self {
            PipelineSystem::TransFusion { stacked, .. } => {
                let block = index / stacked.p;
                let feature = index % stacked.p;
                let mult = if block < stacked.k {
                    stacked.n_s as f64 / stacked.big_n() as f64
                } else {
                    1.0
                };
                (feature, mult)
            }
            PipelineSystem::OracleTransLasso { .. } => (index, 1.0),
        }
    }

    /// Transferred estimate implied by a first-stage solution.
    pub fn combine(&self, stage_one: &DVector<f64>) -> DVector<f64> {
        let mut w = DVector::zeros(self.p());
        for i in 0..stage_one.len() {
            if stage_one[i] != 0.0 {
                let (f, m) = self.combine_coeff(i);
                w[f] += m * stage_one[i];
            }
        }
        w
    }

    /// Run both stages at response `y` (which must use this system's row
    /// layout) and record every intermediate needed downstream.
    pub fn fit(
        &self,
        y: &DVector<f64>,
        warm: Option<&WarmState>,
        settings: &FitSettings,
    ) -> Result<SelectionTrace> {
        if y.len() != self.big_n() {
            return Err(CoreError::validation(format!(
                "response length {} does not match stacked row count {}",
                y.len(),
                self.big_n()
            )));
        }
        let opts1 = SolveOptions {
            tol: settings.tol,
            max_sweeps: settings.max_sweeps,
            warm_start: warm.map(|w| w.stage_one.clone()),
        };
        let opts2 = SolveOptions {
            tol: settings.tol,
            max_sweeps: settings.max_sweeps,
            warm_start: warm.map(|w| w.delta.clone()),
        };
        let (stage_one, w_hat, delta_hat) = match self {
            PipelineSystem::TransFusion {
                stacked,
                target_design,
                target_units,
                lambda_stacked,
                lambda_debias,
            } => {
                let sol1 = solve_view(
                    L1View {
                        design: &stacked.design,
                        response: y,
                        lambda: *lambda_stacked,
                        weights: &stacked.penalty_weights,
                        scale: stacked.big_n() as f64,
                    },
                    &opts1,
                )?;
                let theta = sol1.beta;
                let w_hat = self.combine(&theta);
                let y_t = y.rows(stacked.k * stacked.n_s, stacked.n_t).clone_owned();
                let resid = y_t - target_design * &w_hat;
                let sol2 = solve_view(
                    L1View {
                        design: target_design,
                        response: &resid,
                        lambda: *lambda_debias,
                        weights: target_units,
                        scale: stacked.n_t as f64,
                    },
                    &opts2,
                )?;
                (theta, w_hat, sol2.beta)
            }
            PipelineSystem::OracleTransLasso {
                source_design,
                target_design,
                unit_weights,
                n_i,
                n_t,
                lambda_pooled,
                lambda_debias,
                ..
            } => {
                let y_src = y.rows(0, *n_i).clone_owned();
                let sol1 = solve_view(
                    L1View {
                        design: source_design,
                        response: &y_src,
                        lambda: *lambda_pooled,
                        weights: unit_weights,
                        scale: *n_i as f64,
                    },
                    &opts1,
                )?;
                let w_hat = sol1.beta.clone();
                let y_t = y.rows(*n_i, *n_t).clone_owned();
                let resid = y_t - target_design * &w_hat;
                let sol2 = solve_view(
                    L1View {
                        design: target_design,
                        response: &resid,
                        lambda: *lambda_debias,
                        weights: unit_weights,
                        scale: *n_t as f64,
                    },
                    &opts2,
                )?;
                (sol1.beta, w_hat, sol2.beta)
            }
        };
        let beta_hat = &w_hat + &delta_hat;
        let (co_active, co_signs) = active_set(&stage_one);
        let (debias_active, debias_signs) = active_set(&delta_hat);
        let (selected, selected_signs) = active_set(&beta_hat);
        Ok(SelectionTrace {
            stage_one,
            co_active,
            co_signs,
            w_hat,
            delta_hat,
            debias_active,
            debias_signs,
            beta_hat,
            selected,
            selected_signs,
        })
    }

    /// Fit at the observed response.
    pub fn fit_observed(&self, settings: &FitSettings) -> Result<SelectionTrace> {
        let y = self.response().clone();
        self.fit(&y, None, settings)
    }
}

/// Convenience: build the TransFusion system and fit the observed data.
pub fn transfusion_fit(data: &MultiTaskData, cfg: &TransFusionConfig) -> Result<SelectionTrace> {
    let sys = PipelineSystem::build(data, &PipelineConfig::TransFusion(cfg.clone()))?;
    sys.fit_observed(&FitSettings::default())
}

/// Convenience: build the Oracle Trans-Lasso system and fit the observed data.
pub fn oracle_translasso_fit(
    data: &MultiTaskData,
    cfg: &OracleTransLassoConfig,
) -> Result<SelectionTrace> {
    let sys = PipelineSystem::build(data, &PipelineConfig::OracleTransLasso(cfg.clone()))?;
    sys.fit_observed(&FitSettings::default())
}
