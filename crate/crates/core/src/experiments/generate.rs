//! Synthetic multi-task regression data with known ground truth, used to
//! measure false/true positive rates of the inference methods.
//!
//! Designs are iid standard normal. The target coefficient vector is either
//! all zero (null scenario) or has its first five entries set to the signal
//! level (signal scenario). Every source task starts from the fixed pattern
//! (-gamma, gamma, gamma, gamma, gamma, 0, ...) and is then perturbed with
//! centered Gaussian noise: lightly on the first 25 coordinates for the
//! informative sources, ten times as strongly on the first 50 coordinates
//! for the remaining ones. Noise families other than Gaussian are
//! standardized to zero mean and unit variance so the unit-variance noise
//! model stays honest.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{SkewNormal, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data_model::{MultiTaskData, TaskData, ZERO_THRESHOLD};
use crate::error::{CoreError, Result};

/// Scale of a standard Laplace distribution with unit variance (1/sqrt(2)).
const LAPLACE_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Mean of a skew-normal(location 0, scale 1, shape 10) variate.
const SKEW_MEAN: f64 = 0.793_924_811_493_214_4;
/// Standard deviation of the same skew-normal variate.
const SKEW_SD: f64 = 0.608_015_948_553_542_5;
/// sqrt(18/20): rescales a Student-t(20) variate to unit variance.
const T20_SCALE: f64 = 0.948_683_298_050_513_8;

/// Noise distribution for the regression errors; every family is
/// standardized to zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseFamily {
    Gaussian,
    Laplace,
    /// Skew-normal with shape parameter 10.
    SkewNormal10,
    /// Student-t with 20 degrees of freedom.
    StudentT20,
}

impl NoiseFamily {
    pub const ALL: [NoiseFamily; 4] = [
        NoiseFamily::Gaussian,
        NoiseFamily::Laplace,
        NoiseFamily::SkewNormal10,
        NoiseFamily::StudentT20,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Laplace => "laplace",
            NoiseFamily::SkewNormal10 => "skewnormal10",
            NoiseFamily::StudentT20 => "t20",
        }
    }

    /// One standardized draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseFamily::Gaussian => rng.sample::<f64, _>(StandardNormal),
            NoiseFamily::Laplace => {
                let u: f64 = rng.random::<f64>() - 0.5;
                let t = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
                -LAPLACE_SCALE * u.signum() * t.ln()
            }
            NoiseFamily::SkewNormal10 => {
                let d = SkewNormal::new(0.0, 1.0, 10.0).expect("valid skew-normal parameters");
                (rng.sample::<f64, _>(d) - SKEW_MEAN) / SKEW_SD
            }
            NoiseFamily::StudentT20 => {
                let d = StudentT::new(20.0).expect("valid degrees of freedom");
                rng.sample::<f64, _>(d) * T20_SCALE
            }
        }
    }
}

/// Whether the target coefficients carry signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// All target coefficients zero: every rejection is a false positive.
    Null,
    /// First five target coefficients at the signal level.
    Signal,
}

/// Shape and signal parameters of one synthetic configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub p: usize,
    pub n_t: usize,
    pub n_s: usize,
    /// Number of informative sources (listed first).
    pub informative: usize,
    /// Number of uninformative sources (listed after the informative ones).
    pub uninformative: usize,
    /// Signal level of the coefficient patterns.
    pub gamma: f64,
    /// Scale of the source-coefficient perturbations.
    pub upsilon: f64,
    pub scenario: Scenario,
    pub noise: NoiseFamily,
}

impl SyntheticSpec {
    /// Large configuration matching the published experiments.
    pub fn paper_default(scenario: Scenario) -> Self {
        SyntheticSpec {
            p: 300,
            n_t: 50,
            n_s: 100,
            informative: 3,
            uninformative: 2,
            gamma: 0.5,
            upsilon: 0.01,
            scenario,
            noise: NoiseFamily::Gaussian,
        }
    }

    /// Small configuration sized for continuous-integration runs.
    pub fn desk_default(scenario: Scenario) -> Self {
        SyntheticSpec {
            p: 50,
            n_t: 30,
            n_s: 40,
            informative: 2,
            uninformative: 1,
            gamma: 0.5,
            upsilon: 0.01,
            scenario,
            noise: NoiseFamily::Gaussian,
        }
    }

    /// Total number of source tasks.
    pub fn k(&self) -> usize {
        self.informative + self.uninformative
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n_t == 0 || self.n_s == 0 {
            return Err(CoreError::validation(
                "feature count and sample sizes must be positive",
            ));
        }
        if self.k() == 0 {
            return Err(CoreError::validation("need at least one source task"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(CoreError::validation("signal level must be finite and >= 0"));
        }
        if !(self.upsilon.is_finite() && self.upsilon >= 0.0) {
            return Err(CoreError::validation(
                "perturbation scale must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// The coefficients the generator actually used.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub target_beta: DVector<f64>,
    pub source_betas: Vec<DVector<f64>>,
    /// Indices of the informative sources (always the leading ones).
    pub informative: Vec<usize>,
}

impl GroundTruth {
    /// Whether target feature `j` truly has a nonzero coefficient.
    pub fn is_nonnull(&self, j: usize) -> bool {
        self.target_beta[j].abs() > ZERO_THRESHOLD
    }
}

fn signal_support(p: usize) -> usize {
    p.min(5)
}

fn draw_task<R: Rng + ?Sized>(
    rows: usize,
    beta: &DVector<f64>,
    noise: NoiseFamily,
    rng: &mut R,
) -> Result<TaskData> {
    let p = beta.len();
    let x = DMatrix::from_fn(rows, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eps = DVector::from_fn(rows, |_, _| noise.sample(rng));
    let y = &x * beta + eps;
    TaskData::with_iso_noise(x, y, 1.0)
}

/// Draw one dataset (and its ground truth) from the configuration.
///
/// The draw order is fixed — source coefficients, then the target task, then
/// each source task — so a given generator state always produces the same
/// dataset.
pub fn generate<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    rng: &mut R,
) -> Result<(MultiTaskData, GroundTruth)> {
    spec.validate()?;
    let p = spec.p;
    let mut target_beta = DVector::zeros(p);
    if spec.scenario == Scenario::Signal {
        for j in 0..signal_support(p) {
            target_beta[j] = spec.gamma;
        }
    }
    let mut source_betas = Vec::with_capacity(spec.k());
    for k in 0..spec.k() {
        let mut beta = DVector::zeros(p);
        if p > 0 {
            beta[0] = -spec.gamma;
        }
        for j in 1..signal_support(p) {
            beta[j] = spec.gamma;
        }
        let (span, var) = if k < spec.informative {
            (p.min(25), spec.upsilon * 0.5)
        } else {
            (p.min(50), spec.upsilon * 0.5 * 10.0)
        };
        let sd = var.sqrt();
        for j in 0..span {
            beta[j] += sd * rng.sample::<f64, _>(StandardNormal);
        }
        source_betas.push(beta);
    }
    let target = draw_task(spec.n_t, &target_beta, spec.noise, rng)?;
    let mut sources = Vec::with_capacity(spec.k());
    for beta in &source_betas {
        sources.push(draw_task(spec.n_s, beta, spec.noise, rng)?);
    }
    let data = MultiTaskData::new(target, sources)?;
    let truth = GroundTruth {
        target_beta,
        source_betas,
        informative: (0..spec.informative).collect(),
    };
    Ok((data, truth))
}
