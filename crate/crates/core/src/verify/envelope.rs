use serde::Serialize;

use super::regression::ExponentEstimate;
use crate::coefficients::euclidean_norm;
use crate::error::{Error, Result};
use crate::solver::{DensityField, Grid};

/// Time dependence of a density envelope `ln C4 - rate w(t) |x|^power + θ τ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalForm {
    /// `exp(C5 t^{-q})`, spatial weight 1.
    Blowup { q: f64 },
    /// `t^{-p}`, spatial weight `t^beta`.
    TimeWeighted { beta: f64 },
}

impl TemporalForm {
    /// `τ(t)`, the coefficient of the fitted temporal constant in the log envelope.
    fn feature(&self, t: f64) -> f64 {
        match *self {
            TemporalForm::Blowup { q } => t.powf(-q),
            TemporalForm::TimeWeighted { .. } => -t.ln(),
        }
    }

    fn spatial_weight(&self, t: f64) -> f64 {
        match *self {
            TemporalForm::Blowup { .. } => 1.0,
            TemporalForm::TimeWeighted { beta } => t.powf(beta),
        }
    }

    fn exponent(&self) -> f64 {
        match *self {
            TemporalForm::Blowup { q } => q,
            TemporalForm::TimeWeighted { beta } => beta,
        }
    }
}

/// Fitted constants: `C4 = exp(ln_scale)` and the temporal constant (`C5`
/// for blow-up, `p` for time-weighted forms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeConstants {
    pub ln_scale: f64,
    pub temporal: f64,
    /// Largest `ln envelope - ln ρ` margin left at the per-snapshot maxima.
    pub max_log_gap: f64,
    /// Largest `ln ρ - ln envelope` after fitting; zero up to rounding.
    pub max_log_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeSpec {
    pub spatial_rate: f64,
    pub spatial_power: f64,
    pub temporal: TemporalForm,
    pub constants: Option<EnvelopeConstants>,
}

impl EnvelopeSpec {
    fn checked(spatial_rate: f64, spatial_power: f64, temporal: TemporalForm) -> Result<Self> {
        for (name, v) in [
            ("spatial rate", spatial_rate),
            ("spatial power", spatial_power),
            ("temporal exponent", temporal.exponent()),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            spatial_rate,
            spatial_power,
            temporal,
            constants: None,
        })
    }

    /// `C4 exp(-rate |x|^power) exp(C5 t^{-q})`.
    pub fn blowup(spatial_rate: f64, spatial_power: f64, q: f64) -> Result<Self> {
        Self::checked(spatial_rate, spatial_power, TemporalForm::Blowup { q })
    }

    /// `C4 t^{-p} exp(-rate t^beta |x|^power)`.
    pub fn time_weighted(spatial_rate: f64, spatial_power: f64, beta: f64) -> Result<Self> {
        Self::checked(spatial_rate, spatial_power, TemporalForm::TimeWeighted { beta })
    }

    pub fn with_constants(mut self, ln_scale: f64, temporal: f64) -> Self {
        self.constants = Some(EnvelopeConstants {
            ln_scale,
            temporal,
            max_log_gap: 0.0,
            max_log_violation: 0.0,
        });
        self
    }

    fn spatial_term(&self, x: &[f64], t: f64) -> f64 {
        self.spatial_rate * self.temporal.spatial_weight(t) * euclidean_norm(x).powf(self.spatial_power)
    }

    /// Logarithm of the envelope at `(x, t)`, `t > 0`.
    pub fn ln_value(&self, x: &[f64], t: f64) -> Result<f64> {
        let k = self
            .constants
            .ok_or_else(|| Error::Precondition("envelope constants have not been fitted".into()))?;
        if !(t > 0.0) {
            return Err(Error::Domain(format!("envelope is defined for t > 0, got {t}")));
        }
        Ok(k.ln_scale + k.temporal * self.temporal.feature(t) - self.spatial_term(x, t))
    }
}

/// Which cells count as resolved data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    /// Cells below this fraction of the snapshot peak are ignored.
    pub core_fraction: f64,
    /// Cells this close to the grid boundary are ignored.
    pub boundary_cells: usize,
    /// Absolute floor below which a value is treated as absent.
    pub floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            core_fraction: 1e-12,
            boundary_cells: 2,
            floor: 1e-250,
        }
    }
}

/// Indices of the core cells of a snapshot.
pub fn core_cells(state: &DensityField, options: &FitOptions) -> Vec<usize> {
    let grid = &state.grid;
    let threshold = (options.core_fraction * state.peak()).max(options.floor);
    let m = options.boundary_cells;
    (0..grid.len())
        .filter(|&i| state.values[i] > threshold)
        .filter(|&i| {
            grid.multi_index(i)
                .iter()
                .zip(grid.cells())
                .all(|(&k, &n)| k >= m && k + m < n)
        })
        .collect()
}

/// Per-snapshot maximum of `ln ρ + rate w(t)|x|^power` over the core cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelPoint {
    pub t: f64,
    pub max_log: f64,
    /// Cell centre where the maximum is attained.
    pub argmax: Vec<f64>,
}

/// The weighted log-density maxima that the fit works on, one per snapshot
/// with `t > 0`. Constants in `spec` are ignored.
pub fn envelope_channel(
    snapshots: &[DensityField],
    spec: &EnvelopeSpec,
    options: &FitOptions,
) -> Result<Vec<ChannelPoint>> {
    let mut out = Vec::new();
    for state in snapshots.iter().filter(|s| s.time > 0.0) {
        let mut best = (f64::NEG_INFINITY, None);
        for i in core_cells(state, options) {
            let x = state.grid.center(i);
            let v = state.values[i].ln() + spec.spatial_term(&x, state.time);
            if v > best.0 {
                best = (v, Some(x));
            }
        }
        let (max_log, Some(argmax)) = best else {
            return Err(Error::Precondition(format!(
                "snapshot at t = {} has no core cells",
                state.time
            )));
        };
        out.push(ChannelPoint {
            t: state.time,
            max_log,
            argmax,
        });
    }
    Ok(out)
}

/// `(τ_j, M_j)` per usable snapshot.
fn snapshot_maxima(snapshots: &[DensityField], spec: &EnvelopeSpec, options: &FitOptions) -> Result<Vec<(f64, f64)>> {
    Ok(envelope_channel(snapshots, spec, options)?
        .into_iter()
        .map(|p| (spec.temporal.feature(p.t), p.max_log))
        .collect())
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Edge slopes of the upper and lower convex hulls of points sorted by abscissa.
fn hull_slopes(points: &[(f64, f64)]) -> Vec<f64> {
    let mut slopes = Vec::new();
    for upper in [true, false] {
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for &p in points {
            while hull.len() >= 2 {
                let turn = cross(hull[hull.len() - 2], hull[hull.len() - 1], p);
                if (upper && turn >= 0.0) || (!upper && turn <= 0.0) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        slopes.extend(
            hull.windows(2)
                .filter(|w| w[1].0 > w[0].0)
                .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)),
        );
    }
    slopes
}

/// `(max, min)` of `M_j - θ τ_j`.
fn residual_range(points: &[(f64, f64)], theta: f64) -> (f64, f64) {
    points
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &(tau, m)| {
            let r = m - theta * tau;
            (hi.max(r), lo.min(r))
        })
}

/// Fits `ln C4` and the temporal constant with the exponents held fixed, so
/// that the envelope majorizes every core cell of every snapshot with `t > 0`
/// while the largest margin at the per-snapshot maxima is as small as
/// possible. The temporal constant is constrained to be nonnegative.
pub fn fit_envelope_constants(
    snapshots: &[DensityField],
    spec: &EnvelopeSpec,
    options: &FitOptions,
) -> Result<EnvelopeSpec> {
    if snapshots.len() < 3 {
        return Err(Error::Precondition(format!(
            "fitting needs at least 3 snapshots, got {}",
            snapshots.len()
        )));
    }
    let mut points = snapshot_maxima(snapshots, spec, options)?;
    if points.len() < 3 {
        return Err(Error::Precondition(
            "fitting needs at least 3 snapshots with t > 0".into(),
        ));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if points.first().map(|p| p.0) == points.last().map(|p| p.0) {
        return Err(Error::Precondition("snapshots share a single time".into()));
    }

    let mut candidates: Vec<f64> = hull_slopes(&points).into_iter().filter(|s| *s >= 0.0).collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for theta in candidates {
        let (hi, lo) = residual_range(&points, theta);
        let width = hi - lo;
        if best.is_none_or(|(w, _)| width < w) {
            best = Some((width, theta));
        }
    }
    let (width, theta) = best.expect("candidate list is never empty");
    let (ln_scale, _) = residual_range(&points, theta);

    let mut fitted = *spec;
    fitted.constants = Some(EnvelopeConstants {
        ln_scale,
        temporal: theta,
        max_log_gap: width,
        max_log_violation: 0.0,
    });
    let mut violation = f64::NEG_INFINITY;
    for state in snapshots.iter().filter(|s| s.time > 0.0) {
        for i in core_cells(state, options) {
            let gap = state.values[i].ln() - fitted.ln_value(&state.grid.center(i), state.time)?;
            violation = violation.max(gap);
        }
    }
    if let Some(k) = fitted.constants.as_mut() {
        k.max_log_violation = violation.max(0.0);
    }
    Ok(fitted)
}

/// Location of the largest density-to-envelope ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub density: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeExponents {
    pub spatial_power: f64,
    pub spatial_rate: f64,
    /// `q` for blow-up forms, `beta` for time-weighted forms.
    pub temporal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub envelope: EnvelopeSpec,
    pub constants: Option<EnvelopeConstants>,
    pub exponents: EnvelopeExponents,
    pub max_ratio: f64,
    pub witness: Option<Witness>,
    pub regressions: Vec<ExponentEstimate>,
    /// Set by the caller to identify the problem configuration.
    pub config_digest: Option<String>,
    pub grid: Grid,
    pub snapshot_count: usize,
    pub time_window: (f64, f64),
    pub slack: f64,
    pub pass: bool,
}

/// Largest `ρ / envelope` over the core cells of every snapshot with
/// `t > 0`; passes iff it is at most `1 + slack`. Ties keep the earliest
/// `(t, x)` in scan order.
pub fn check_envelope(
    snapshots: &[DensityField],
    fitted: &EnvelopeSpec,
    slack: f64,
    options: &FitOptions,
) -> Result<VerificationReport> {
    if fitted.constants.is_none() {
        return Err(Error::Precondition("envelope constants have not been fitted".into()));
    }
    if !(slack >= 0.0) {
        return Err(Error::Parameter(format!("slack must be nonnegative, got {slack}")));
    }
    let used: Vec<&DensityField> = snapshots.iter().filter(|s| s.time > 0.0).collect();
    let Some(first) = used.first() else {
        return Err(Error::Precondition("no snapshots with t > 0".into()));
    };
    let mut witness: Option<Witness> = None;
    for state in &used {
        for i in core_cells(state, options) {
            let x = state.grid.center(i);
            let ratio = (state.values[i].ln() - fitted.ln_value(&x, state.time)?).exp();
            if witness.as_ref().is_none_or(|w| ratio > w.ratio) {
                witness = Some(Witness {
                    t: state.time,
                    x,
                    density: state.values[i],
                    ratio,
                });
            }
        }
    }
    let max_ratio = witness.as_ref().map_or(0.0, |w| w.ratio);
    let times = used.iter().map(|s| s.time);
    let window = (
        times.clone().fold(f64::INFINITY, f64::min),
        times.fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(VerificationReport {
        envelope: *fitted,
        constants: fitted.constants,
        exponents: EnvelopeExponents {
            spatial_power: fitted.spatial_power,
            spatial_rate: fitted.spatial_rate,
            temporal: fitted.temporal.exponent(),
        },
        max_ratio,
        witness,
        regressions: Vec::new(),
        config_digest: None,
        grid: first.grid.clone(),
        snapshot_count: used.len(),
        time_window: window,
        slack,
        pass: max_ratio <= 1.0 + slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn envelope_snapshots(spec: &EnvelopeSpec, factor: f64) -> Vec<DensityField> {
        let grid = Grid::cube(1, 4.0, 64).unwrap();
        [0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|&t| {
                let values = grid
                    .centers()
                    .iter()
                    .map(|x| factor * spec.ln_value(x, t).unwrap().exp())
                    .collect();
                DensityField::new(grid.clone(), values, t).unwrap()
            })
            .collect()
    }

    #[test]
    fn exact_envelope_round_trips() {
        let truth = EnvelopeSpec::blowup(0.5, 2.0, 1.0)
            .unwrap()
            .with_constants(2f64.ln(), 3.0);
        let data = envelope_snapshots(&truth, 1.0);
        let opts = FitOptions::default();
        let fitted = fit_envelope_constants(&data, &EnvelopeSpec::blowup(0.5, 2.0, 1.0).unwrap(), &opts).unwrap();
        let k = fitted.constants.unwrap();
        assert!((k.ln_scale.exp() - 2.0).abs() < 1e-6);
        assert!((k.temporal - 3.0).abs() < 1e-6);
        let again = fit_envelope_constants(&envelope_snapshots(&fitted, 1.0), &fitted, &opts).unwrap();
        assert!((again.constants.unwrap().ln_scale - k.ln_scale).abs() < 1e-9);
        assert!((again.constants.unwrap().temporal - k.temporal).abs() < 1e-9);
        let report = check_envelope(&data, &fitted, 0.0, &opts).unwrap();
        assert!((report.max_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn halved_data_halves_the_scale() {
        let truth = EnvelopeSpec::time_weighted(0.3, 2.0, 0.5)
            .unwrap()
            .with_constants(0.0, 1.5);
        let data = envelope_snapshots(&truth, 0.5);
        let fitted = fit_envelope_constants(&data, &truth, &FitOptions::default()).unwrap();
        let k = fitted.constants.unwrap();
        assert!((k.ln_scale.exp() - 0.5).abs() < 1e-9);
        assert!((k.temporal - 1.5).abs() < 1e-9);
        let report = check_envelope(&data, &fitted, 0.0, &FitOptions::default()).unwrap();
        assert!(report.max_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn doubled_data_fails_with_ratio_two() {
        let truth = EnvelopeSpec::blowup(0.5, 2.0, 1.0).unwrap().with_constants(0.0, 1.0);
        let report = check_envelope(&envelope_snapshots(&truth, 2.0), &truth, 0.5, &FitOptions::default()).unwrap();
        assert!(!report.pass);
        assert!((report.max_ratio - 2.0).abs() < 1e-9);
        assert_eq!(report.witness.unwrap().t, 0.2);
    }

    #[test]
    fn fitting_preconditions() {
        let truth = EnvelopeSpec::blowup(0.5, 2.0, 1.0).unwrap().with_constants(0.0, 1.0);
        let data = envelope_snapshots(&truth, 1.0);
        assert!(matches!(
            fit_envelope_constants(&data[..1], &truth, &FitOptions::default()),
            Err(Error::Precondition(_))
        ));
        let bare = EnvelopeSpec::blowup(0.5, 2.0, 1.0).unwrap();
        assert!(check_envelope(&data, &bare, 0.0, &FitOptions::default()).is_err());
        assert!(EnvelopeSpec::blowup(0.5, 2.0, 0.0).is_err());
    }

    #[test]
    fn core_region_skips_boundary_and_tails() {
        let grid = Grid::cube(1, 1.0, 10).unwrap();
        let mut values = vec![1.0; 10];
        values[5] = 1e-13;
        let state = DensityField::new(grid, values, 1.0).unwrap();
        assert_eq!(core_cells(&state, &FitOptions::default()), vec![2, 3, 4, 6, 7]);
    }
}
