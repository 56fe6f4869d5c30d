//! Links the analytic bounds to solver output: conjugation by a positive
//! weight, local ellipticity floors, fitted density envelopes and exponent
//! regression.

mod envelope;
mod pointwise;
mod regression;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::coefficients::{ellipticity_extremes, CoefficientField, DivergenceMode, Region, Sampling};
use crate::error::{Error, Result};
use crate::testfn::TestFunction;

pub use envelope::{
    check_envelope, core_cells, envelope_channel, fit_envelope_constants, ChannelPoint, EnvelopeConstants,
    EnvelopeSpec, FitOptions, TemporalForm, VerificationReport, Witness,
};
pub use pointwise::pointwise_bound_rhs;
pub use regression::{decay_exponent_estimate, reliable_start, DecayModel, ExponentEstimate};

/// Strictly positive `C^{2,1}` weight `Φ(x, t)` with analytic derivatives.
#[derive(Clone)]
pub struct PhiWeight {
    inner: Arc<dyn TestFunction>,
}

impl std::fmt::Debug for PhiWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PhiWeight")
    }
}

/// `Φ` and its derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiJet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub time_derivative: f64,
}

struct Reciprocal(Arc<dyn TestFunction>);

impl TestFunction for Reciprocal {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        1.0 / self.0.value(x, t)
    }

    fn gradient(&self, x: &[f64], t: f64) -> DVector<f64> {
        let v = self.0.value(x, t);
        self.0.gradient(x, t) * (-1.0 / (v * v))
    }

    fn hessian(&self, x: &[f64], t: f64) -> DMatrix<f64> {
        let v = self.0.value(x, t);
        let g = self.0.gradient(x, t);
        self.0.hessian(x, t) * (-1.0 / (v * v)) + &g * g.transpose() * (2.0 / (v * v * v))
    }

    fn time_derivative(&self, x: &[f64], t: f64) -> f64 {
        let v = self.0.value(x, t);
        -self.0.time_derivative(x, t) / (v * v)
    }
}

impl PhiWeight {
    pub fn new<T: TestFunction + 'static>(weight: T) -> Self {
        Self {
            inner: Arc::new(weight),
        }
    }

    /// `1 / Φ`.
    pub fn reciprocal(&self) -> Self {
        Self {
            inner: Arc::new(Reciprocal(self.inner.clone())),
        }
    }

    pub fn jet(&self, x: &[f64], t: f64) -> Result<PhiJet> {
        let value = self.inner.value(x, t);
        if !(value > 0.0) {
            return Err(Error::NonPositiveWeight {
                value,
                x: x.to_vec(),
                t,
            });
        }
        let jet = PhiJet {
            value,
            gradient: self.inner.gradient(x, t),
            hessian: self.inner.hessian(x, t),
            time_derivative: self.inner.time_derivative(x, t),
        };
        let finite = value.is_finite()
            && jet.time_derivative.is_finite()
            && jet.gradient.iter().chain(jet.hessian.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite {
                what: "weight",
                x: x.to_vec(),
                t,
            });
        }
        Ok(jet)
    }

    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.jet(x, t)?.value)
    }
}

/// Potential and divergence-form drift `(c̃, B̃)` of the equation solved by
/// `Φρ`:
/// `c̃ = c + (∂_tΦ + div(A∇Φ) + B·∇Φ) / Φ`, `B̃ = B + 2 A∇Φ / Φ`.
pub fn phi_transform(field: &CoefficientField, phi: &PhiWeight, x: &[f64], t: f64) -> Result<(f64, DVector<f64>)> {
    let jet = phi.jet(x, t)?;
    let a = field.diffusion(x, t)?;
    let div_a = field.diffusion_divergence(x, t)?;
    let b = field.drift(x, t)?;
    let c = field.potential(x, t)?;
    let drift = &b - &div_a;
    // div(A∇Φ) = (div A)·∇Φ + A : ∇²Φ for symmetric A.
    let div_flux = div_a.dot(&jet.gradient) + a.component_mul(&jet.hessian).sum();
    let c_tilde = c + (jet.time_derivative + div_flux + drift.dot(&jet.gradient)) / jet.value;
    let b_tilde = drift + (&a * &jet.gradient) * (2.0 / jet.value);
    if !c_tilde.is_finite() || b_tilde.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "transformed coefficients",
            x: x.to_vec(),
            t,
        });
    }
    Ok((c_tilde, b_tilde))
}

/// The coefficient field of the conjugated equation, with the same diffusion
/// and divergence mode. Evaluation failures surface as non-finite values,
/// which the field's own checks then reject.
pub fn phi_transformed_field(field: &CoefficientField, phi: &PhiWeight) -> CoefficientField {
    let d = field.dimension();
    let (f1, p1) = (field.clone(), phi.clone());
    let drift = move |x: &[f64], t: f64| match (phi_transform(&f1, &p1, x, t), f1.diffusion_divergence(x, t)) {
        (Ok((_, b_tilde)), Ok(div)) => b_tilde + div,
        _ => DVector::from_element(d, f64::NAN),
    };
    let (f2, p2) = (field.clone(), phi.clone());
    let potential = move |x: &[f64], t: f64| phi_transform(&f2, &p2, x, t).map_or(f64::NAN, |(c, _)| c);
    let f3 = field.clone();
    let diffusion = move |x: &[f64], t: f64| {
        f3.diffusion(x, t)
            .unwrap_or_else(|_| DMatrix::from_element(d, d, f64::NAN))
    };
    let divergence = match field.divergence_mode() {
        DivergenceMode::Analytic(f) => DivergenceMode::Analytic(f.clone()),
        DivergenceMode::FiniteDifference(rule) => DivergenceMode::FiniteDifference(*rule),
    };
    let mut out = CoefficientField::new(d, diffusion, drift, potential)
        .with_divergence_mode(divergence)
        .with_norm_convention(field.norm_convention())
        .with_horizon(field.horizon());
    if let Some(r) = field.domain_radius() {
        out = out.with_domain_radius(r);
    }
    if !field.is_time_independent() {
        out = out.time_dependent();
    }
    out
}

/// Space-time window over which the ellipticity floor is taken.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EllipticityWindow {
    /// `U(x, radius) × [start / 2, t]`.
    Fixed { radius: f64, start: f64 },
    /// `U(x, √t) × [theta t, t]`, `theta ∈ (0, 1)`.
    Parabolic { theta: f64 },
}

impl EllipticityWindow {
    /// `(ball radius, time interval)` at `t`.
    pub fn resolve(&self, t: f64) -> Result<(f64, (f64, f64))> {
        match *self {
            EllipticityWindow::Fixed { radius, start } => {
                if !(radius > 0.0) || !(start > 0.0) {
                    return Err(Error::Parameter(format!(
                        "fixed window needs positive radius and start, got {radius} and {start}"
                    )));
                }
                if !(t > start / 2.0) {
                    return Err(Error::Domain(format!(
                        "t = {t} precedes the window start {}",
                        start / 2.0
                    )));
                }
                Ok((radius, (start / 2.0, t)))
            }
            EllipticityWindow::Parabolic { theta } => {
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::Parameter(format!("theta must lie in (0, 1), got {theta}")));
                }
                if !(t > 0.0) {
                    return Err(Error::Domain(format!("parabolic window needs t > 0, got {t}")));
                }
                Ok((t.sqrt(), (theta * t, t)))
            }
        }
    }
}

const ELLIPTICITY_REL_CHANGE: f64 = 5e-3;
const ELLIPTICITY_MAX_REFINEMENTS: usize = 8;

/// Sampled `inf (A(y,τ)ξ, ξ)` over the window around `(x, t)`. Sampling
/// doubles until the floor moves by less than 0.5%; nested samples make the
/// result non-increasing under refinement.
pub fn local_ellipticity(field: &CoefficientField, x: &[f64], t: f64, window: EllipticityWindow) -> Result<f64> {
    let (radius, interval) = window.resolve(t)?;
    let region = Region::new(x.to_vec(), radius, interval)?;
    let mut sampling = Sampling::new(5, 3);
    let mut floor = ellipticity_extremes(field, &region, sampling)?.lambda_floor;
    for _ in 0..ELLIPTICITY_MAX_REFINEMENTS {
        sampling = sampling.refined();
        let next = ellipticity_extremes(field, &region, sampling)?.lambda_floor;
        let settled = (floor - next).abs() <= ELLIPTICITY_REL_CHANGE * floor.abs();
        floor = next;
        if settled {
            break;
        }
    }
    Ok(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::{Constant, RadialExponential};

    struct ExpLinear;

    impl TestFunction for ExpLinear {
        fn value(&self, x: &[f64], _t: f64) -> f64 {
            x[0].exp()
        }
        fn gradient(&self, x: &[f64], _t: f64) -> DVector<f64> {
            DVector::from_element(1, x[0].exp())
        }
        fn hessian(&self, x: &[f64], _t: f64) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, x[0].exp())
        }
    }

    fn heat() -> CoefficientField {
        CoefficientField::isotropic(1, |_, _| 1.0, |_, _| DVector::zeros(1), |_, _| 0.0)
    }

    #[test]
    fn unit_weight_is_the_identity() {
        let field = CoefficientField::isotropic(
            1,
            |x, _| 1.0 + x[0] * x[0],
            |x, _| DVector::from_element(1, -x[0]),
            |_, _| -2.0,
        );
        let phi = PhiWeight::new(Constant {
            dimension: 1,
            value: 1.0,
        });
        let (c, b) = phi_transform(&field, &phi, &[0.7], 0.0).unwrap();
        assert_eq!(c, -2.0);
        let expected = field.divergence_correction(&[0.7], 0.0).unwrap();
        assert_eq!(b, expected);
    }

    #[test]
    fn exponential_weights_by_hand() {
        let (c, b) = phi_transform(&heat(), &PhiWeight::new(ExpLinear), &[0.3], 0.0).unwrap();
        assert!((c - 1.0).abs() < 1e-14);
        assert!((b[0] - 2.0).abs() < 1e-14);
        let gauss = PhiWeight::new(RadialExponential { alpha: 0.5, r: 2.0 });
        for x in [-1.5, 0.0, 0.4, 2.0] {
            let (c, b) = phi_transform(&heat(), &gauss, &[x], 0.0).unwrap();
            assert!((c - (1.0 + x * x)).abs() < 1e-12);
            assert!((b[0] - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_weight_is_rejected() {
        let phi = PhiWeight::new(Constant {
            dimension: 1,
            value: 0.0,
        });
        assert!(matches!(
            phi_transform(&heat(), &phi, &[0.0], 0.0),
            Err(Error::NonPositiveWeight { .. })
        ));
    }

    #[test]
    fn ellipticity_windows() {
        let field = CoefficientField::isotropic(1, |x, _| (-x[0].abs()).exp(), |_, _| DVector::zeros(1), |_, _| 0.0);
        let fixed = EllipticityWindow::Fixed {
            radius: 1.0,
            start: 0.5,
        };
        let lam = local_ellipticity(&field, &[0.0], 1.0, fixed).unwrap();
        assert!((lam - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(
            local_ellipticity(&heat(), &[0.3], 0.2, EllipticityWindow::Parabolic { theta: 0.5 }).unwrap(),
            1.0
        );
        assert!(local_ellipticity(&heat(), &[0.0], 0.1, fixed).is_err());
        assert!(local_ellipticity(&heat(), &[0.0], 0.0, EllipticityWindow::Parabolic { theta: 0.5 }).is_err());
    }
}
