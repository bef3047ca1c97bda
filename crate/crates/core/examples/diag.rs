//! Scratch diagnostic: verify region endpoints by refitting around them.

use nalgebra::DVector;
use ptlsi_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let spec = SyntheticSpec::desk_default(Scenario::Null);
    let pin = 3.0 * ((50.0f64).ln() / 150.0).sqrt();
    let pipe = PipelineConfig::TransFusion(TransFusionConfig {
        lambda_stacked: Some(pin),
        ..Default::default()
    });
    let mut cfg = InferenceConfig::new(pipe.clone());
    cfg.baselines.bonferroni = false;
    let settings = FitSettings::default();
    let mut bad = 0usize;
    let mut checked = 0usize;
    let mut small_p = 0usize;
    let mut tests = 0usize;
    for trial in 0..60u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        rng.set_stream(trial + 1);
        let (data, _) = generate(&spec, &mut rng).unwrap();
        let result = run_ptlsi(&data, &cfg).unwrap();
        let sys = PipelineSystem::build(&data, &pipe).unwrap();
        let y_obs = sys.response().clone();
        for f in &result.features {
            let FeatureOutcome::Report(r) = &f.outcome else { continue };
            tests += 1;
            if r.p_selective <= 0.05 {
                small_p += 1;
            }
            // verify each finite endpoint of the region by cold refits
            let hyp = hypothesis_for(
                sys.target_design(),
                &result.selected,
                f.feature_index,
                sys.zero_prefix(),
                sys.covariance(),
                &y_obs,
            )
            .unwrap();
            let line = decompose(&y_obs, &hyp, sys.covariance()).unwrap();
            let probe = |z: f64| -> bool {
                let y: DVector<f64> = line.response_at(z);
                let tr = sys.fit(&y, None, &settings).unwrap();
                tr.selected == result.selected
            };
            let d = 2e-3 * line.sigma;
            for iv in &r.region.intervals {
                for (end, inward) in [(iv.lower, d), (iv.upper, -d)] {
                    if end.abs() >= 19.0 * line.sigma {
                        continue; // window edge, not a real boundary
                    }
                    checked += 1;
                    let inside = probe(end + inward);
                    let outside = probe(end - inward);
                    if !inside || outside {
                        bad += 1;
                        if bad <= 8 {
                            println!(
                                "trial {trial} j={} endpoint {:.4} (z/s {:.3}): inside={} outside={} p={:.4}",
                                f.feature_index,
                                end,
                                end / line.sigma,
                                inside,
                                outside,
                                r.p_selective
                            );
                        }
                    }
                }
            }
        }
    }
    println!("tests {tests}, p<=0.05 {small_p}, endpoints checked {checked}, bad {bad}");
}
