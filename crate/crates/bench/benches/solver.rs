//! Coordinate-descent solver throughput at a few problem shapes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ptlsi_bench::random_l1;
use ptlsi_core::weighted_lasso::{solve, SolveOptions};
use std::hint::black_box;

fn bench_solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("weighted_lasso_solve");
    for &(p, n) in &[(50usize, 40usize), (100, 80), (300, 100)] {
        let problem = random_l1(p, n, 7);
        let opts = SolveOptions::default();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("p{p}_n{n}")),
            &problem,
            |b, problem| b.iter(|| solve(black_box(problem), &opts).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_solver);
criterion_main!(benches);
