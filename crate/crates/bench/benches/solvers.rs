use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lapwg_core::contour::{build_contour, DeltaPolicy};
use lapwg_core::dispersion::band_eigenvalues;
use lapwg_core::fullguide::{solve_full_many, SolveConfig};
use lapwg_core::{CellOperator, CellProblem, Complex64, SourceSpec};

fn operator(h: f64, k2: f64) -> CellOperator {
    CellOperator::new(CellProblem::ring(h, k2).unwrap()).unwrap()
}

fn cell(c: &mut Criterion) {
    let op = operator(0.02, 5.0);
    let source = SourceSpec::ring();
    let z = Complex64::from_polar(1.0, 0.7);
    c.bench_function("cell_solve h=0.02", |b| {
        b.iter(|| op.solve(&source, black_box(z)).unwrap())
    });
    c.bench_function("indicator h=0.02", |b| {
        b.iter(|| op.singularity_indicator(black_box(z)).unwrap())
    });
}

fn bands(c: &mut Criterion) {
    let op = operator(0.02, 5.0);
    c.bench_function("band_eigenvalues h=0.02 6 bands", |b| {
        b.iter(|| band_eigenvalues(&op, black_box(1.1), 6).unwrap())
    });
}

fn full(c: &mut Criterion) {
    let op = operator(0.05, 5.0);
    let contour = build_contour(&[], DeltaPolicy::default()).unwrap();
    let config = SolveConfig::new(16, 6, (-2, 2));
    let sources = [SourceSpec::ring()];
    let mut group = c.benchmark_group("solve_full");
    group.sample_size(10);
    group.bench_function("h=0.05 N=16", |b| {
        b.iter(|| solve_full_many(&op, &sources, &contour, &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, cell, bands, full);
criterion_main!(benches);
