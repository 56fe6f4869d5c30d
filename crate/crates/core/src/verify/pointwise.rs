use super::{local_ellipticity, EllipticityWindow};
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::solver::DensityField;

/// Shape of the local pointwise bound with unit constant:
/// `(1 + 1/λ)^γ ∫∫_{window} (1 + ‖A‖^γ + s|c⁺|^γ + s|√A⁻¹ B|^{2γ}) ρ dy dτ`,
/// where `s = 1` for a fixed window, and for the parabolic window
/// `s = t^γ` and the whole expression carries `t^{-(d+2)/2}`.
pub fn pointwise_bound_rhs(
    field: &CoefficientField,
    snapshots: &[DensityField],
    x: &[f64],
    t: f64,
    gamma: f64,
    window: EllipticityWindow,
) -> Result<f64> {
    let d = field.dimension();
    if !(gamma > (d as f64 + 2.0) / 2.0) {
        return Err(Error::Parameter(format!("gamma must exceed (d + 2) / 2, got {gamma}")));
    }
    let (radius, (lo, hi)) = window.resolve(t)?;
    let Some(first) = snapshots.first() else {
        return Err(Error::Precondition("no snapshots".into()));
    };
    if !first.grid.contains_ball(x, radius) {
        return Err(Error::Domain(format!(
            "window of radius {radius} around {x:?} leaves the grid"
        )));
    }
    let slack = 1e-9 * hi.abs().max(1.0);
    let inside: Vec<&DensityField> = snapshots
        .iter()
        .filter(|s| s.time >= lo - slack && s.time <= hi + slack)
        .collect();
    let covers = |target: f64| inside.iter().any(|s| (s.time - target).abs() <= slack);
    if inside.len() < 2 || !covers(lo) || !covers(hi) {
        return Err(Error::Precondition(format!("snapshots do not cover [{lo}, {hi}]")));
    }

    let (scale, prefactor) = match window {
        EllipticityWindow::Fixed { .. } => (1.0, 1.0),
        EllipticityWindow::Parabolic { .. } => (t.powf(gamma), t.powf(-(d as f64 + 2.0) / 2.0)),
    };
    let local_mass = |state: &DensityField| -> Result<f64> {
        let grid = &state.grid;
        let mut acc = 0.0;
        for (i, &rho) in state.values.iter().enumerate() {
            if rho == 0.0 {
                continue;
            }
            let y = grid.center(i);
            let dist2: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist2 > radius * radius {
                continue;
            }
            let a = field.diffusion(&y, state.time)?;
            let norm = field.matrix_norm(&y, state.time)?;
            let c_plus = field.potential(&y, state.time)?.max(0.0);
            let drift = field.divergence_correction(&y, state.time)?;
            let inv = a
                .try_inverse()
                .ok_or_else(|| Error::Domain(format!("diffusion matrix is singular at {y:?}")))?;
            let weighted_drift = drift.dot(&(&inv * &drift));
            let weight = 1.0 + norm.powf(gamma) + scale * c_plus.powf(gamma) + scale * weighted_drift.powf(gamma);
            acc += weight * rho;
        }
        Ok(acc * grid.cell_volume())
    };

    let mut integral = 0.0;
    let mut prev = (inside[0].time, local_mass(inside[0])?);
    for state in &inside[1..] {
        let m = local_mass(state)?;
        integral += 0.5 * (state.time - prev.0) * (m + prev.1);
        prev = (state.time, m);
    }
    if integral == 0.0 {
        return Ok(0.0);
    }
    let lambda = local_ellipticity(field, x, t, window)?;
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("ellipticity floor vanishes near {x:?}")));
    }
    Ok((1.0 + 1.0 / lambda).powf(gamma) * prefactor * integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Grid;
    use nalgebra::DVector;

    fn heat() -> CoefficientField {
        CoefficientField::isotropic(1, |_, _| 1.0, |_, _| DVector::zeros(1), |_, _| 0.0)
    }

    fn flat(times: &[f64], value: f64) -> Vec<DensityField> {
        let grid = Grid::cube(1, 4.0, 80).unwrap();
        times
            .iter()
            .map(|&t| DensityField::new(grid.clone(), vec![value; 80], t).unwrap())
            .collect()
    }

    #[test]
    fn zero_density_gives_zero() {
        let snaps = flat(&[0.25, 0.5, 1.0], 0.0);
        let w = EllipticityWindow::Fixed {
            radius: 1.0,
            start: 0.5,
        };
        assert_eq!(pointwise_bound_rhs(&heat(), &snaps, &[0.0], 1.0, 2.0, w).unwrap(), 0.0);
    }

    #[test]
    fn unit_coefficients_reduce_to_weighted_local_mass() {
        let snaps = flat(&[0.25, 0.5, 0.75, 1.0], 0.1);
        let w = EllipticityWindow::Fixed {
            radius: 1.0,
            start: 0.5,
        };
        let rhs = pointwise_bound_rhs(&heat(), &snaps, &[0.0], 1.0, 2.0, w).unwrap();
        // Cells with centres in [-1, 1]: 20 cells of width 0.1, over [0.25, 1].
        let local = 20.0 * 0.1 * 0.1 * 0.75;
        assert!((rhs - 2f64.powi(2) * 2.0 * local).abs() < 1e-12, "{rhs}");
    }

    #[test]
    fn window_must_stay_inside_the_grid() {
        let snaps = flat(&[0.25, 1.0], 0.1);
        let w = EllipticityWindow::Fixed {
            radius: 1.0,
            start: 0.5,
        };
        assert!(matches!(
            pointwise_bound_rhs(&heat(), &snaps, &[3.5], 1.0, 2.0, w),
            Err(Error::Domain(_))
        ));
        assert!(pointwise_bound_rhs(&heat(), &snaps, &[0.0], 1.0, 1.0, w).is_err());
    }
}
