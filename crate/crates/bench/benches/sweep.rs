//! Full line-scan cost for one selected feature at desk scale.

use criterion::{criterion_group, criterion_main, Criterion};
use ptlsi_bench::{desk_signal_data, fitted_system};
use ptlsi_core::data_model::hypothesis_for;
use ptlsi_core::inference::decompose;
use ptlsi_core::parametric_search::{divide_and_conquer, SearchOptions};
use std::hint::black_box;

fn bench_sweep(c: &mut Criterion) {
    let data = desk_signal_data(7);
    let (sys, trace) = fitted_system(&data);
    let j = *trace.selected.first().expect("signal trial selects features");
    let y_obs = sys.response().clone();
    let hyp = hypothesis_for(
        sys.target_design(),
        &trace.selected,
        j,
        sys.zero_prefix(),
        sys.covariance(),
        &y_obs,
    )
    .unwrap();
    let line = decompose(&y_obs, &hyp, sys.covariance()).unwrap();
    let opts = SearchOptions::default();
    c.bench_function("line_scan_desk_feature", |b| {
        b.iter(|| divide_and_conquer(black_box(&sys), &line, &trace, &opts).unwrap())
    });
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
