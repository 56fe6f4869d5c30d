use fpk_core::solver::{
    mass_balance_residual, project_initial_measure, run, step, weak_identity_residual, Boundary, FluxScheme, Reaction,
};
use fpk_core::testfn::{Bump, Constant};
use fpk_core::{CoefficientField, DensityField, Error, Grid, InitialMeasure, SolverConfig, TimeStep};
use nalgebra::DVector;

fn field_1d(
    a: impl Fn(f64) -> f64 + Send + Sync + 'static,
    b: impl Fn(f64) -> f64 + Send + Sync + 'static,
    c: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> CoefficientField {
    CoefficientField::isotropic(
        1,
        move |x, _| a(x[0]),
        move |x, _| DVector::from_element(1, b(x[0])),
        move |x, _| c(x[0]),
    )
}

fn ou() -> CoefficientField {
    field_1d(|_| 1.0, |x| -x, |_| 0.0)
}

fn gaussian(grid: &Grid, mean: f64, std: f64) -> DensityField {
    project_initial_measure(&InitialMeasure::gaussian_isotropic(vec![mean], std), grid)
        .unwrap()
        .0
}

#[test]
fn uniform_field_is_stationary_without_drift() {
    let grid = Grid::cube(2, 1.0, 12).unwrap();
    let heat = CoefficientField::isotropic(2, |_, _| 1.0, |_, _| DVector::zeros(2), |_, _| 0.0);
    let state = DensityField::new(grid.clone(), vec![0.25; grid.len()], 0.0).unwrap();
    let config = SolverConfig::new(TimeStep::Cfl(0.9), 0.05);
    let out = run(&state, &heat, &config).unwrap();
    assert!(out.final_state.values.iter().all(|v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn ou_relaxes_to_the_standard_gaussian() {
    let grid = Grid::cube(1, 8.0, 512).unwrap();
    let state = gaussian(&grid, 2.0, 0.5);
    let out = run(&state, &ou(), &SolverConfig::new(TimeStep::Cfl(0.9), 10.0)).unwrap();
    let h = grid.spacing(0);
    let l1: f64 = out
        .final_state
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = grid.center(i)[0];
            (v - (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs() * h
        })
        .sum();
    assert!(l1 < 1e-3, "L1 error {l1}");
    let second = out.final_state.weighted_moment(&|x| x[0] * x[0]).unwrap();
    assert!((second - 1.0).abs() < 2e-3, "second moment {second}");
}

#[test]
fn constant_killing_decays_exactly() {
    let grid = Grid::cube(1, 6.0, 64).unwrap();
    let field = field_1d(|_| 1.0, |_| 0.0, |_| -1.0);
    let state = gaussian(&grid, 0.0, 1.0);
    let out = run(&state, &field, &SolverConfig::new(TimeStep::Cfl(0.5), 1.0)).unwrap();
    assert!((out.final_state.mass() - (-1.0f64).exp()).abs() < 1e-8);
}

#[test]
fn mass_is_conserved_over_many_steps() {
    let grid = Grid::cube(1, 4.0, 64).unwrap();
    let field = field_1d(|x| 1.0 + 0.5 * x.sin(), |x| -x * x * x, |_| 0.0);
    let state = gaussian(&grid, 1.0, 0.7);
    let limit = fpk_core::solver::Stepper::new(
        &field,
        &grid,
        FluxScheme::Fitted,
        Boundary::NoFlux,
        Reaction::Exponential,
    )
    .unwrap()
    .stability_limit(0.0)
    .unwrap();
    let config = SolverConfig::new(TimeStep::Fixed(0.9 * limit), 10_000.0 * 0.9 * limit);
    let out = run(&state, &field, &config).unwrap();
    assert_eq!(out.steps, 10_000);
    assert!((out.final_state.mass() - 1.0).abs() < 1e-9);
    let residual = mass_balance_residual(&out.ledger);
    assert!(residual.iter().all(|r| r.residual.abs() < 1e-10));
}

#[test]
fn killing_makes_mass_non_increasing() {
    let grid = Grid::cube(1, 4.0, 64).unwrap();
    let field = field_1d(|_| 1.0, |x| -x, |x| -x.powi(4));
    for scheme in [FluxScheme::Fitted, FluxScheme::Upwind] {
        for reaction in [Reaction::Exponential, Reaction::Explicit] {
            let config = SolverConfig::new(TimeStep::Cfl(0.9), 0.5)
                .with_scheme(scheme)
                .with_reaction(reaction);
            let out = run(&gaussian(&grid, 1.0, 0.5), &field, &config).unwrap();
            for w in out.ledger.entries.windows(2) {
                assert!(w[1].mass <= w[0].mass);
            }
        }
    }
}

#[test]
fn positivity_holds_for_steep_drift() {
    let grid = Grid::cube(1, 5.0, 40).unwrap();
    let field = field_1d(|_| 0.01, |x| -x * x.abs().powi(3), |_| 0.0);
    for scheme in [FluxScheme::Fitted, FluxScheme::Upwind] {
        let config = SolverConfig::new(TimeStep::Cfl(1.0), 0.2).with_scheme(scheme);
        let out = run(&gaussian(&grid, 3.0, 0.5), &field, &config).unwrap();
        assert!(out.final_state.values.iter().all(|v| *v >= 0.0));
        assert!(out.max_clamped <= 1e-12);
    }
}

#[test]
fn oversized_fixed_step_is_a_stability_error() {
    let grid = Grid::cube(1, 4.0, 64).unwrap();
    let state = gaussian(&grid, 0.0, 1.0);
    let config = SolverConfig::new(TimeStep::Fixed(1.0), 1.0);
    assert!(matches!(
        step(&state, &ou(), &config, 1.0),
        Err(Error::Stability { .. })
    ));
}

#[test]
fn off_diagonal_diffusion_is_unsupported() {
    let grid = Grid::cube(2, 1.0, 8).unwrap();
    let field = CoefficientField::new(
        2,
        |_, _| nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]),
        |_, _| DVector::zeros(2),
        |_, _| 0.0,
    );
    let state = DensityField::zeros(grid, 0.0);
    assert!(matches!(
        run(&state, &field, &SolverConfig::new(TimeStep::Cfl(0.5), 0.1)),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn absorbing_boundary_reports_leakage() {
    let grid = Grid::cube(1, 2.0, 32).unwrap();
    let heat = field_1d(|_| 1.0, |_| 0.0, |_| 0.0);
    let config = SolverConfig::new(TimeStep::Cfl(0.9), 0.5).with_boundary(Boundary::Absorbing);
    let out = run(&gaussian(&grid, 0.0, 0.5), &heat, &config).unwrap();
    let last = *mass_balance_residual(&out.ledger).last().unwrap();
    assert!(last.leakage > 0.1);
    assert!((last.residual + last.leakage).abs() < 1e-12);
}

#[test]
fn zero_step_run_returns_the_initial_snapshot() {
    let grid = Grid::cube(1, 4.0, 32).unwrap();
    let state = gaussian(&grid, 0.0, 1.0);
    let config = SolverConfig::new(TimeStep::Cfl(0.5), 0.0).with_snapshots(vec![0.0]);
    let out = run(&state, &ou(), &config).unwrap();
    assert_eq!(out.steps, 0);
    assert_eq!(out.snapshots, vec![state]);
    assert_eq!(mass_balance_residual(&out.ledger)[0].residual, 0.0);
}

#[test]
fn snapshots_are_ordered_and_nearest() {
    let grid = Grid::cube(1, 4.0, 32).unwrap();
    let config = SolverConfig::new(TimeStep::Fixed(0.01), 0.1).with_snapshots(vec![0.1, 0.033, 0.0, 0.5]);
    let out = run(&gaussian(&grid, 0.0, 1.0), &ou(), &config).unwrap();
    let times: Vec<f64> = out.snapshots.iter().map(|s| s.time).collect();
    assert_eq!(times.len(), 4);
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
    assert!((times[1] - 0.03).abs() < 1e-12);
    assert_eq!(times[3], 0.1);
}

fn killing_residual(dt: f64) -> f64 {
    let grid = Grid::cube(1, 3.0, 96).unwrap();
    let field = field_1d(|_| 1.0, |x| -x, |x| -x.powi(4));
    let config = SolverConfig::new(TimeStep::Fixed(dt), 1.0);
    let out = run(&gaussian(&grid, 0.5, 0.5), &field, &config).unwrap();
    mass_balance_residual(&out.ledger)
        .iter()
        .map(|r| r.residual.abs())
        .fold(0.0, f64::max)
}

#[test]
fn mass_balance_residual_is_second_order_in_time() {
    let (r1, r2) = (killing_residual(5e-4), killing_residual(2.5e-4));
    assert!(r1 < 1e-6, "residual {r1}");
    let ratio = r1 / r2;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio} ({r1:e} / {r2:e})");
}

#[test]
fn weak_identity_vanishes_for_zero_test_function() {
    let grid = Grid::cube(1, 4.0, 64).unwrap();
    let config = SolverConfig::new(TimeStep::Fixed(0.001), 0.1).with_uniform_snapshots(10);
    let out = run(&gaussian(&grid, 0.0, 1.0), &ou(), &config).unwrap();
    let zero = Bump::new(vec![0.0], 1.0, 0.0);
    assert_eq!(
        weak_identity_residual(&out.snapshots, &ou(), &zero, (0.0, 0.1)).unwrap(),
        0.0
    );
    let wide = Bump::new(vec![0.0], 4.0, 1.0);
    assert!(matches!(
        weak_identity_residual(&out.snapshots, &ou(), &wide, (0.0, 0.1)),
        Err(Error::Support(_))
    ));
    let global = Constant {
        dimension: 1,
        value: 1.0,
    };
    assert!(matches!(
        weak_identity_residual(&out.snapshots, &ou(), &global, (0.0, 0.1)),
        Err(Error::Support(_))
    ));
    assert!(matches!(
        weak_identity_residual(&out.snapshots, &ou(), &zero, (0.0, 0.2)),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn weak_identity_is_small_at_ou_stationarity() {
    let grid = Grid::cube(1, 8.0, 128).unwrap();
    let state = gaussian(&grid, 0.0, 1.0);
    let config = SolverConfig::new(TimeStep::Cfl(0.9), 1.0).with_uniform_snapshots(1);
    let out = run(&state, &ou(), &config).unwrap();
    let u = Bump::new(vec![0.5], 2.0, 1.0);
    let r = weak_identity_residual(&out.snapshots, &ou(), &u, (0.0, 1.0)).unwrap();
    let h = grid.spacing(0);
    assert!(r < h * h, "residual {r}");
}
