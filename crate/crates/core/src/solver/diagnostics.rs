use serde::Serialize;

use super::density::DensityField;
use super::MassLedger;
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::testfn::TestFunction;

/// `mass(t) - mass(0) - ∫_0^t ∫ cρ dx ds` with the time integral taken by
/// the trapezoidal rule over ledger rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub t: f64,
    pub residual: f64,
    /// Cumulative outflow through absorbing boundaries, contained in
    /// `residual` and reported on its own.
    pub leakage: f64,
}

pub fn mass_balance_residual(ledger: &MassLedger) -> Vec<ResidualPoint> {
    let Some(first) = ledger.entries.first() else {
        return Vec::new();
    };
    let mut integral = 0.0;
    let mut prev = first;
    ledger
        .entries
        .iter()
        .map(|e| {
            integral += 0.5 * (e.t - prev.t) * (e.c_integral + prev.c_integral);
            prev = e;
            ResidualPoint {
                t: e.t,
                residual: e.mass - first.mass - integral,
                leakage: e.leaked,
            }
        })
        .collect()
}

fn midpoint_integral(state: &DensityField, f: impl Fn(&[f64]) -> Result<f64>) -> Result<f64> {
    let mut acc = 0.0;
    for (i, &rho) in state.values.iter().enumerate() {
        if rho != 0.0 {
            acc += f(&state.grid.center(i))? * rho;
        }
    }
    Ok(acc * state.grid.cell_volume())
}

/// `|∫u dμ_t - ∫u dμ_s - ∫_s^t ∫(∂_τ u + Lu) dμ_τ dτ|` evaluated with the
/// midpoint rule in space and the trapezoidal rule over the snapshots in
/// `[s, t]`, which must include both endpoints.
pub fn weak_identity_residual(
    snapshots: &[DensityField],
    field: &CoefficientField,
    u: &dyn TestFunction,
    interval: (f64, f64),
) -> Result<f64> {
    let (s, t) = interval;
    if !(s < t) {
        return Err(Error::Parameter(format!("interval [{s}, {t}] is empty")));
    }
    let Some(first) = snapshots.first() else {
        return Err(Error::Precondition("no snapshots".into()));
    };
    let (center, radius) = u
        .support()
        .ok_or_else(|| Error::Support("must be compact and declared".into()))?;
    if !first.grid.contains_ball(&center, radius) {
        return Err(Error::Support(format!(
            "ball at {center:?} of radius {radius} touches the grid boundary"
        )));
    }
    let slack = 1e-9 * t.abs().max(1.0);
    let window: Vec<&DensityField> = snapshots
        .iter()
        .filter(|sn| sn.time >= s - slack && sn.time <= t + slack)
        .collect();
    let covers = |target: f64| window.iter().any(|sn| (sn.time - target).abs() <= slack);
    if window.len() < 2 || !covers(s) || !covers(t) {
        return Err(Error::Precondition(format!(
            "snapshots do not include both ends of [{s}, {t}]"
        )));
    }

    let pairing = |sn: &DensityField| {
        midpoint_integral(sn, |x| {
            let lu = field.apply_generator(u, x, sn.time)?;
            Ok(lu + u.time_derivative(x, sn.time))
        })
    };
    let mut generator_term = 0.0;
    let mut prev = (window[0].time, pairing(window[0])?);
    for sn in &window[1..] {
        let g = pairing(sn)?;
        generator_term += 0.5 * (sn.time - prev.0) * (g + prev.1);
        prev = (sn.time, g);
    }
    let value = |sn: &DensityField| midpoint_integral(sn, |x| Ok(u.value(x, sn.time)));
    let lhs = value(window[window.len() - 1])? - value(window[0])?;
    Ok((lhs - generator_term).abs())
}

#[cfg(test)]
mod tests {
    use super::super::LedgerEntry;
    use super::*;

    #[test]
    fn empty_and_single_row_ledgers() {
        assert!(mass_balance_residual(&MassLedger::default()).is_empty());
        let ledger = MassLedger {
            entries: vec![LedgerEntry {
                t: 0.0,
                mass: 1.0,
                c_integral: -1.0,
                leaked: 0.0,
            }],
        };
        assert_eq!(mass_balance_residual(&ledger)[0].residual, 0.0);
    }

    #[test]
    fn exact_exponential_decay_has_second_order_trapezoid_error() {
        let ledger = |n: usize| MassLedger {
            entries: (0..=n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    LedgerEntry {
                        t,
                        mass: (-t).exp(),
                        c_integral: -(-t).exp(),
                        leaked: 0.0,
                    }
                })
                .collect(),
        };
        let r1 = mass_balance_residual(&ledger(20)).last().unwrap().residual.abs();
        let r2 = mass_balance_residual(&ledger(40)).last().unwrap().residual.abs();
        assert!((r1 / r2 - 4.0).abs() < 0.05);
    }
}
