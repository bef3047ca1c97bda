//! Truncated-normal tail evaluation over many-interval regions.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ptlsi_core::data_model::{Interval, TruncationRegion};
use ptlsi_core::inference::truncated_p;
use std::hint::black_box;

fn region_with(pieces: usize) -> TruncationRegion {
    let intervals: Vec<Interval> = (0..pieces)
        .map(|i| {
            let lo = -10.0 + (20.0 / pieces as f64) * i as f64;
            Interval::new(lo, lo + 8.0 / pieces as f64).unwrap()
        })
        .collect();
    TruncationRegion::from_intervals(intervals, 0.0)
}

fn bench_pvalue(c: &mut Criterion) {
    let mut group = c.benchmark_group("truncated_p");
    for &pieces in &[1usize, 16, 256] {
        let region = region_with(pieces);
        group.bench_with_input(
            BenchmarkId::from_parameter(pieces),
            &region,
            |b, region| b.iter(|| truncated_p(black_box(region), 1.3, 1.0).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_pvalue);
criterion_main!(benches);
