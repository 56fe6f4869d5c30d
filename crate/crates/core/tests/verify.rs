use std::f64::consts::PI;

use fpk_core::testfn::{Bump, RadialExponential};
use fpk_core::verify::{
    envelope_channel, local_ellipticity, phi_transform, phi_transformed_field, reliable_start, EllipticityWindow,
    FitOptions, PhiWeight,
};
use fpk_core::{
    check_envelope, decay_exponent_estimate, fit_envelope_constants, CoefficientField, DecayModel, DensityField,
    EnvelopeSpec, Grid,
};
use nalgebra::DVector;
use proptest::prelude::*;

/// Law at time `t` of the OU process started from `N(m0, s0²)`.
fn ou_law(grid: &Grid, m0: f64, s0: f64, t: f64) -> DensityField {
    let mean = m0 * (-t).exp();
    let var = 1.0 + (s0 * s0 - 1.0) * (-2.0 * t).exp();
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.center(i)[0];
            (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
        })
        .collect();
    DensityField::new(grid.clone(), values, t).unwrap()
}

fn ou_snapshots() -> Vec<DensityField> {
    let grid = Grid::cube(1, 8.0, 256).unwrap();
    (1..=20).map(|i| ou_law(&grid, 1.0, 0.5, 0.1 * i as f64)).collect()
}

#[test]
fn ou_law_satisfies_a_gaussian_envelope() {
    let snaps = ou_snapshots();
    let options = FitOptions::default();
    let spec = EnvelopeSpec::blowup(0.4, 2.0, 1.0).unwrap();
    let fitted = fit_envelope_constants(&snaps, &spec, &options).unwrap();
    let report = check_envelope(&snaps, &fitted, 0.25, &options).unwrap();
    assert!(report.pass, "max ratio {}", report.max_ratio);
    assert!(report.max_ratio <= 1.0 + 1e-9);

    // The weighted maximum sup ρ e^{0.4 x²} is attained near x = 0 here.
    let channel = envelope_channel(&snaps, &spec, &options).unwrap();
    assert_eq!(channel.len(), snaps.len());
    assert!(channel.iter().all(|p| p.argmax[0].abs() < 3.0));
}

#[test]
fn inflated_snapshot_breaks_the_envelope() {
    let mut snaps = ou_snapshots();
    let options = FitOptions::default();
    let spec = EnvelopeSpec::blowup(0.4, 2.0, 1.0).unwrap();
    let fitted = fit_envelope_constants(&snaps, &spec, &options).unwrap();
    for v in &mut snaps[7].values {
        *v *= 2.0;
    }
    let report = check_envelope(&snaps, &fitted, 0.25, &options).unwrap();
    assert!(!report.pass);
    let witness = report.witness.expect("witness");
    assert!((witness.t - snaps[7].time).abs() < 1e-12);
    // Doubling can only lift a ratio of at most one to at most two.
    assert!(report.max_ratio > 1.25 && report.max_ratio <= 2.0 + 1e-9);
}

#[test]
fn unfitted_envelope_is_rejected() {
    let spec = EnvelopeSpec::blowup(0.4, 2.0, 1.0).unwrap();
    assert!(check_envelope(&ou_snapshots(), &spec, 0.25, &FitOptions::default()).is_err());
    assert!(fit_envelope_constants(&ou_snapshots()[..2], &spec, &FitOptions::default()).is_err());
}

#[test]
fn reliable_start_is_the_first_time_of_lasting_agreement() {
    let times: Vec<f64> = (1..=10).map(|i| 0.1 * i as f64).collect();
    let fine: Vec<(f64, f64)> = times.iter().map(|&t| (t, 1.0)).collect();
    let coarse: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| (t, if t < 0.35 || (t > 0.5 && t < 0.65) { 1.1 } else { 1.001 }))
        .collect();
    let start = reliable_start(&coarse, &fine, 0.01).unwrap();
    assert!((start - 0.7).abs() < 1e-12);
    assert_eq!(reliable_start(&coarse, &fine, 1e-4), None);
}

#[test]
fn ellipticity_floor_of_a_varying_diffusion() {
    let field = CoefficientField::isotropic(1, |x, _| 1.5 + x[0].sin(), |_, _| DVector::zeros(1), |_, _| 0.0);
    let window = EllipticityWindow::Fixed {
        radius: 1.0,
        start: 0.5,
    };
    // On [-π/2 - 1, -π/2 + 1] the minimum 0.5 sits at the centre.
    let floor = local_ellipticity(&field, &[-PI / 2.0], 1.0, window).unwrap();
    assert!(floor >= 0.5 - 1e-12 && floor < 0.5 + 5e-3, "{floor}");
}

fn variable_field() -> CoefficientField {
    CoefficientField::isotropic(
        1,
        |x, _| 1.0 + 0.3 * x[0].sin(),
        |x, _| DVector::from_element(1, -x[0] + 0.2 * x[0].cos()),
        |x, _| -0.5 * x[0] * x[0],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_and_its_reciprocal_cancel(alpha in 0.05f64..0.5, x in -3.0f64..3.0) {
        let field = variable_field();
        let phi = PhiWeight::new(RadialExponential { alpha, r: 2.0 });
        let there = phi_transformed_field(&field, &phi);
        let (c_back, b_back) = phi_transform(&there, &phi.reciprocal(), &[x], 0.0).unwrap();
        let b = field.drift(&[x], 0.0).unwrap()[0] - field.diffusion_divergence(&[x], 0.0).unwrap()[0];
        let c = field.potential(&[x], 0.0).unwrap();
        prop_assert!((c_back - c).abs() < 1e-6 * (1.0 + c.abs()), "{c_back} vs {c}");
        prop_assert!((b_back[0] - b).abs() < 1e-6 * (1.0 + b.abs()), "{} vs {b}", b_back[0]);
    }

    #[test]
    fn phi_transform_of_a_constant_weight_is_the_identity(x in -3.0f64..3.0) {
        let field = variable_field();
        let phi = PhiWeight::new(Bump::new(vec![0.0], 100.0, 1.0));
        let (c, b) = phi_transform(&field, &phi, &[x * 1e-3], 0.0).unwrap();
        let p = [x * 1e-3];
        let expected_b = field.drift(&p, 0.0).unwrap()[0] - field.diffusion_divergence(&p, 0.0).unwrap()[0];
        // A bump of radius 100 is flat to O(|x|²/100²) near the origin.
        prop_assert!((c - field.potential(&p, 0.0).unwrap()).abs() < 1e-3);
        prop_assert!((b[0] - expected_b).abs() < 1e-3);
    }

    #[test]
    fn power_regression_recovers_the_exponent(p in 0.1f64..4.0, scale in 0.01f64..100.0) {
        let series: Vec<(f64, f64)> = (0..20).map(|i| {
            let t = 1e-3 * 1.4f64.powi(i);
            (t, scale * t.powf(-p))
        }).collect();
        let est = decay_exponent_estimate(&series, DecayModel::Power, (1e-3, 1.0)).unwrap();
        prop_assert!((est.estimate - p).abs() < 1e-9);
    }

    #[test]
    fn loglog_regression_recovers_the_exponent(q in 0.2f64..3.0, a in 0.5f64..5.0) {
        let series: Vec<(f64, f64)> = (0..20).map(|i| {
            let t = 0.2 + 0.04 * i as f64;
            (t, (a * t.powf(-q)).exp())
        }).collect();
        let est = decay_exponent_estimate(&series, DecayModel::LogLog, (0.2, 1.0)).unwrap();
        prop_assert!((est.estimate - q).abs() < 1e-9);
    }
}
