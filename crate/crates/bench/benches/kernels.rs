use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fpk_core::lyapunov::{solve_eta, GrowthFunction};
use fpk_core::solver::{project_initial_measure, step};
use fpk_core::{
    certify_dissipativity, CoefficientField, Grid, InitialMeasure, LyapunovExpression, Region, Sampling, SolverConfig,
    TimeStep,
};
use nalgebra::DVector;

fn cubic_field(dimension: usize) -> CoefficientField {
    CoefficientField::isotropic(
        dimension,
        |x, _| 1.0 + 0.2 * x[0].sin(),
        |x, _| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            DVector::from_iterator(x.len(), x.iter().map(|v| -v * r2))
        },
        |_, _| 0.0,
    )
}

fn solver_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("solver_step");
    for (dimension, cells) in [(1, 512), (2, 64)] {
        let grid = Grid::cube(dimension, 3.0, cells).unwrap();
        let field = cubic_field(dimension);
        let (state, _) = project_initial_measure(&InitialMeasure::standard_gaussian(dimension), &grid).unwrap();
        let config = SolverConfig::new(TimeStep::Cfl(0.5), 1.0);
        let dt = 1e-5;
        group.bench_with_input(BenchmarkId::new(format!("{dimension}d"), cells), &state, |b, s| {
            b.iter(|| step(black_box(s), &field, &config, dt).unwrap())
        });
    }
    group.finish();
}

fn eta_root(c: &mut Criterion) {
    let g = GrowthFunction::log_power(2.0, 1.5).unwrap();
    c.bench_function("solve_eta_log_power", |b| {
        b.iter(|| solve_eta(&g, 0.5, black_box(0.3)).unwrap())
    });
}

fn certification(c: &mut Criterion) {
    let field = cubic_field(2);
    let region = Region::new(vec![0.0, 0.0], 4.0, (0.0, 1.0)).unwrap();
    let sampling = Sampling::new(41, 2);
    c.bench_function("certify_power_2d", |b| {
        b.iter(|| certify_dissipativity(LyapunovExpression::Power { r: 2.0 }, &field, 4.0, &region, sampling).unwrap())
    });
}

criterion_group!(kernels, solver_step, eta_root, certification);
criterion_main!(kernels);
