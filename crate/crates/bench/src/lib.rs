//! Shared fixtures for the criterion benchmarks.

use nalgebra::{DMatrix, DVector};
use ptlsi_core::experiments::{generate, Scenario, SyntheticSpec};
use ptlsi_core::pipelines::{FitSettings, PipelineConfig, PipelineSystem, TransFusionConfig};
use ptlsi_core::weighted_lasso::L1Problem;
use ptlsi_core::MultiTaskData;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A random weighted L1 problem with a planted sparse signal.
pub fn random_l1(p: usize, n: usize, seed: u64) -> L1Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut beta = DVector::zeros(p);
    for j in 0..p.min(5) {
        beta[j] = if j % 2 == 0 { 1.0 } else { -0.7 };
    }
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let response = &design * beta + noise * 0.5;
    let lambda = (f64::ln(p as f64) / n as f64).sqrt();
    L1Problem::new(design, response, lambda, DVector::from_element(p, 1.0), n as f64)
        .expect("well-formed problem")
}

/// Desk-scale synthetic data with a planted signal.
pub fn desk_signal_data(seed: u64) -> MultiTaskData {
    let spec = SyntheticSpec::desk_default(Scenario::Signal);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, _) = generate(&spec, &mut rng).expect("valid spec");
    data
}

/// A fitted pipeline system plus its observed selection.
pub fn fitted_system(
    data: &MultiTaskData,
) -> (PipelineSystem, ptlsi_core::data_model::SelectionTrace) {
    let cfg = PipelineConfig::TransFusion(TransFusionConfig::default());
    let sys = PipelineSystem::build(data, &cfg).expect("system builds");
    let trace = sys.fit_observed(&FitSettings::default()).expect("observed fit converges");
    (sys, trace)
}
