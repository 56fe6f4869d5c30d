use serde::Serialize;

use crate::error::{Error, Result};

/// Linearized decay models in `ln t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `value ~ t^{-p}`: regress `ln value` on `ln t`.
    Power,
    /// `ln value ~ t^{-q}`: regress `ln ln value` on `ln t`.
    LogLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentEstimate {
    pub model: DecayModel,
    /// Magnitude of the fitted slope.
    pub estimate: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Ordinary least squares of the linearized model over the points with
/// `t` in `window`.
pub fn decay_exponent_estimate(
    series: &[(f64, f64)],
    model: DecayModel,
    window: (f64, f64),
) -> Result<ExponentEstimate> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::Parameter(format!(
            "window [{lo}, {hi}] must satisfy 0 < lo < hi"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, v) in series.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        if !(v > 0.0) {
            return Err(Error::Domain(format!("value {v} at t = {t} is not positive")));
        }
        let y = match model {
            DecayModel::Power => v.ln(),
            DecayModel::LogLog => {
                let l = v.ln();
                if !(l > 0.0) {
                    return Err(Error::Domain(format!("ln value {l} at t = {t} is not positive")));
                }
                l.ln()
            }
        };
        xs.push(t.ln());
        ys.push(y);
    }
    let n = xs.len();
    if n < 5 {
        return Err(Error::Precondition(format!(
            "regression needs at least 5 points in the window, got {n}"
        )));
    }
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Precondition("all points share one time".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (ssr / (n - 2) as f64 / sxx).sqrt();
    Ok(ExponentEstimate {
        model,
        estimate: -slope,
        stderr,
        intercept,
        window,
        points: n,
    })
}

/// Earliest time from which a coarse-step series agrees with a fine-step
/// series to relative `tolerance` at every later common time.
pub fn reliable_start(coarse: &[(f64, f64)], fine: &[(f64, f64)], tolerance: f64) -> Option<f64> {
    let mut paired: Vec<(f64, f64, f64)> = coarse
        .iter()
        .filter_map(|&(t, c)| {
            fine.iter()
                .find(|(tf, _)| (tf - t).abs() <= 1e-9 * t.abs().max(1.0))
                .map(|&(_, f)| (t, c, f))
        })
        .collect();
    paired.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut start = None;
    for &(t, c, f) in paired.iter().rev() {
        if (c - f).abs() <= tolerance * f.abs() {
            start = Some(t);
        } else {
            break;
        }
    }
    start
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn times() -> Vec<f64> {
        (0..20).map(|i| 0.01 * 1.25f64.powi(i)).collect()
    }

    #[test]
    fn exact_power_law() {
        let s: Vec<_> = times().into_iter().map(|t| (t, t.powf(-1.5))).collect();
        let e = decay_exponent_estimate(&s, DecayModel::Power, (0.01, 1.0)).unwrap();
        assert!((e.estimate - 1.5).abs() < 1e-9);
    }

    #[test]
    fn exact_loglog_law() {
        let s: Vec<_> = times().into_iter().map(|t| (t, (2.0 / t).exp())).collect();
        let e = decay_exponent_estimate(&s, DecayModel::LogLog, (0.01, 1.0)).unwrap();
        assert!((e.estimate - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noisy_power_law_is_within_three_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s: Vec<_> = times()
            .into_iter()
            .map(|t| (t, t.powf(-0.8) * (1.0 + rng.random_range(-0.01..0.01))))
            .collect();
        let e = decay_exponent_estimate(&s, DecayModel::Power, (0.01, 1.0)).unwrap();
        assert!((e.estimate - 0.8).abs() <= 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn domain_and_precondition_errors() {
        let s: Vec<_> = times().into_iter().map(|t| (t, -t)).collect();
        assert!(matches!(
            decay_exponent_estimate(&s, DecayModel::Power, (0.01, 1.0)),
            Err(Error::Domain(_))
        ));
        let few: Vec<_> = times().into_iter().take(4).map(|t| (t, t)).collect();
        assert!(matches!(
            decay_exponent_estimate(&few, DecayModel::Power, (0.01, 1.0)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn reliable_start_scans_back_from_the_end() {
        let fine: Vec<_> = (1..=5).map(|i| (i as f64, 1.0)).collect();
        let coarse = vec![(1.0, 1.5), (2.0, 1.001), (3.0, 1.2), (4.0, 1.001), (5.0, 1.0)];
        assert_eq!(reliable_start(&coarse, &fine, 0.01), Some(4.0));
    }
}
