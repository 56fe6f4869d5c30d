//! Coefficients `(A, b, c)` of the operator `Lu = a^{ij} ∂_i∂_j u + b^i ∂_i u + c u`
//! and the pointwise algebra built on them: the divergence-form drift
//! `B = b - div A`, ellipticity extremes, generator application, the
//! Lyapunov drift expressions for `|x|^r` and `exp(alpha |x|^r)`, and
//! sample-based certification of dissipativity inequalities.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::testfn::TestFunction;

pub type MatrixFn = Arc<dyn Fn(&[f64], f64) -> DMatrix<f64> + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64], f64) -> DVector<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

const SYMMETRY_TOL: f64 = 1e-12;

/// Finite-difference step for `∂_j a^{ij}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `h = scale * (1 + |x|)`.
    Relative(f64),
    Fixed(f64),
}

impl StepRule {
    fn step(self, x: &[f64]) -> f64 {
        match self {
            StepRule::Relative(s) => s * (1.0 + euclidean_norm(x)),
            StepRule::Fixed(h) => h,
        }
    }
}

/// How the row divergence of `A` is obtained.
#[derive(Clone)]
pub enum DivergenceMode {
    Analytic(VectorFn),
    FiniteDifference(StepRule),
}

impl Default for DivergenceMode {
    fn default() -> Self {
        DivergenceMode::FiniteDifference(StepRule::Relative(1e-5))
    }
}

impl fmt::Debug for DivergenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DivergenceMode::Analytic(_) => f.write_str("Analytic"),
            DivergenceMode::FiniteDifference(rule) => write!(f, "FiniteDifference({rule:?})"),
        }
    }
}

/// Which eigenvalue stands in for `‖A‖`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormConvention {
    /// Largest eigenvalue (operator norm).
    #[default]
    MaxEigenvalue,
    /// Smallest eigenvalue, the literal `min_{|ξ|=1}(Aξ, ξ)` reading.
    MinEigenvalue,
}

pub(crate) fn euclidean_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &DVector<f64>, x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(ai, xi)| ai * xi).sum()
}

fn quadratic_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += a[(i, j)] * x[i] * x[j];
        }
    }
    acc
}

/// Diffusion matrix, drift and potential as pointwise evaluators.
#[derive(Clone)]
pub struct CoefficientField {
    dimension: usize,
    diffusion: MatrixFn,
    drift: VectorFn,
    potential: ScalarFn,
    divergence: DivergenceMode,
    norm_convention: NormConvention,
    domain_radius: Option<f64>,
    horizon: f64,
    time_independent: bool,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dimension", &self.dimension)
            .field("divergence", &self.divergence)
            .field("norm_convention", &self.norm_convention)
            .field("domain_radius", &self.domain_radius)
            .field("horizon", &self.horizon)
            .field("time_independent", &self.time_independent)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    pub fn new<A, B, C>(dimension: usize, diffusion: A, drift: B, potential: C) -> Self
    where
        A: Fn(&[f64], f64) -> DMatrix<f64> + Send + Sync + 'static,
        B: Fn(&[f64], f64) -> DVector<f64> + Send + Sync + 'static,
        C: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        assert!(dimension >= 1, "dimension must be positive");
        Self {
            dimension,
            diffusion: Arc::new(diffusion),
            drift: Arc::new(drift),
            potential: Arc::new(potential),
            divergence: DivergenceMode::default(),
            norm_convention: NormConvention::default(),
            domain_radius: None,
            horizon: f64::INFINITY,
            time_independent: true,
        }
    }

    /// Scalar diffusion `a(x,t) I`.
    pub fn isotropic<A, B, C>(dimension: usize, diffusion: A, drift: B, potential: C) -> Self
    where
        A: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        B: Fn(&[f64], f64) -> DVector<f64> + Send + Sync + 'static,
        C: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            dimension,
            move |x, t| DMatrix::from_diagonal_element(dimension, dimension, diffusion(x, t)),
            drift,
            potential,
        )
    }

    pub fn with_analytic_divergence<F>(mut self, divergence: F) -> Self
    where
        F: Fn(&[f64], f64) -> DVector<f64> + Send + Sync + 'static,
    {
        self.divergence = DivergenceMode::Analytic(Arc::new(divergence));
        self
    }

    pub fn with_divergence_mode(mut self, mode: DivergenceMode) -> Self {
        self.divergence = mode;
        self
    }

    pub fn with_norm_convention(mut self, convention: NormConvention) -> Self {
        self.norm_convention = convention;
        self
    }

    pub fn with_domain_radius(mut self, radius: f64) -> Self {
        self.domain_radius = Some(radius);
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn time_dependent(mut self) -> Self {
        self.time_independent = false;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn domain_radius(&self) -> Option<f64> {
        self.domain_radius
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    pub fn norm_convention(&self) -> NormConvention {
        self.norm_convention
    }

    pub fn divergence_mode(&self) -> &DivergenceMode {
        &self.divergence
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Dimension {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `A(x, t)`, checked for finiteness and symmetry.
    pub fn diffusion(&self, x: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let a = (self.diffusion)(x, t);
        let d = self.dimension;
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                got: a.nrows(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "diffusion",
                x: x.to_vec(),
                t,
            });
        }
        let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let mut asymmetry = 0.0_f64;
        for i in 0..d {
            for j in (i + 1)..d {
                asymmetry = asymmetry.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
        if asymmetry > SYMMETRY_TOL * scale {
            return Err(Error::Asymmetric {
                x: x.to_vec(),
                t,
                asymmetry,
            });
        }
        Ok(a)
    }

    pub fn drift(&self, x: &[f64], t: f64) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let b = (self.drift)(x, t);
        if b.len() != self.dimension {
            return Err(Error::Dimension {
                expected: self.dimension,
                got: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "drift",
                x: x.to_vec(),
                t,
            });
        }
        Ok(b)
    }

    pub fn potential(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check_point(x)?;
        let c = (self.potential)(x, t);
        if !c.is_finite() {
            return Err(Error::NonFinite {
                what: "potential",
                x: x.to_vec(),
                t,
            });
        }
        Ok(c)
    }

    /// Row divergence `(Σ_j ∂_j a^{ij})_i`.
    pub fn diffusion_divergence(&self, x: &[f64], t: f64) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let d = self.dimension;
        let div = match &self.divergence {
            DivergenceMode::Analytic(f) => f(x, t),
            DivergenceMode::FiniteDifference(rule) => {
                let h = rule.step(x);
                if !(h > 0.0) {
                    return Err(Error::Parameter(format!(
                        "finite-difference step must be positive, got {h}"
                    )));
                }
                let mut div = DVector::zeros(d);
                let mut probe = x.to_vec();
                for j in 0..d {
                    probe[j] = x[j] + h;
                    let plus = self.diffusion(&probe, t)?;
                    probe[j] = x[j] - h;
                    let minus = self.diffusion(&probe, t)?;
                    probe[j] = x[j];
                    for i in 0..d {
                        div[i] += (plus[(i, j)] - minus[(i, j)]) / (2.0 * h);
                    }
                }
                div
            }
        };
        if div.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: div.len(),
            });
        }
        if div.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "diffusion divergence",
                x: x.to_vec(),
                t,
            });
        }
        Ok(div)
    }

    /// `B(x,t) = b(x,t) - div A(x,t)`, the drift of the divergence form
    /// `∂_t ρ = div(A∇ρ - Bρ) + cρ`.
    pub fn divergence_correction(&self, x: &[f64], t: f64) -> Result<DVector<f64>> {
        let b = self.drift(x, t)?;
        let div = self.diffusion_divergence(x, t)?;
        Ok(b - div)
    }

    /// Smallest and largest eigenvalue of `A(x, t)`.
    pub fn eigen_extremes(&self, x: &[f64], t: f64) -> Result<(f64, f64)> {
        let a = self.diffusion(x, t)?;
        Ok(symmetric_extremes(&a))
    }

    /// `‖A(x,t)‖` under the configured convention.
    pub fn matrix_norm(&self, x: &[f64], t: f64) -> Result<f64> {
        let (lo, hi) = self.eigen_extremes(x, t)?;
        Ok(match self.norm_convention {
            NormConvention::MaxEigenvalue => hi,
            NormConvention::MinEigenvalue => lo,
        })
    }

    /// `Lu(x,t) = a^{ij} ∂_i∂_j u + b^i ∂_i u + c u`.
    pub fn apply_generator(&self, u: &dyn TestFunction, x: &[f64], t: f64) -> Result<f64> {
        let a = self.diffusion(x, t)?;
        let b = self.drift(x, t)?;
        let c = self.potential(x, t)?;
        let value = u.value(x, t);
        let grad = u.gradient(x, t);
        let hess = u.hessian(x, t);
        if !value.is_finite() || grad.iter().chain(hess.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "test function",
                x: x.to_vec(),
                t,
            });
        }
        let second: f64 = a.component_mul(&hess).sum();
        let out = second + b.dot(&grad) + c * value;
        if !out.is_finite() {
            return Err(Error::NonFinite {
                what: "generator",
                x: x.to_vec(),
                t,
            });
        }
        Ok(out)
    }

    fn nonzero_norm(&self, x: &[f64], what: &str) -> Result<f64> {
        self.check_point(x)?;
        let n = euclidean_norm(x);
        if n == 0.0 {
            return Err(Error::SingularPoint(format!("{what} is undefined at x = 0")));
        }
        Ok(n)
    }

    /// `r tr A + r(r-2)|x|^{-2}(Ax,x) + r(b,x) + |x|^2 c`, so that
    /// `L|x|^r = |x|^{r-2}` times this value.
    pub fn lyapunov_drift_power(&self, r: f64, x: &[f64], t: f64) -> Result<f64> {
        if !(r >= 2.0) {
            return Err(Error::Parameter(format!("power Lyapunov drift needs r >= 2, got {r}")));
        }
        let n = self.nonzero_norm(x, "power Lyapunov drift")?;
        let a = self.diffusion(x, t)?;
        let b = self.drift(x, t)?;
        let c = self.potential(x, t)?;
        let out = r * a.trace() + r * (r - 2.0) * quadratic_form(&a, x) / (n * n) + r * dot(&b, x) + n * n * c;
        finite_or(out, "power Lyapunov drift", x, t)
    }

    /// Bracket of `L exp(α|x|^r) = exp(α|x|^r) [ ... ]`:
    /// `αr|x|^{r-2} tr A + αr(r-2)|x|^{r-4}(Ax,x) + α²r²|x|^{2r-4}(Ax,x) + αr|x|^{r-2}(b,x) + c`.
    pub fn lyapunov_drift_exponential(&self, alpha: f64, r: f64, x: &[f64], t: f64) -> Result<f64> {
        check_exponential_params(alpha, r)?;
        let n = self.nonzero_norm(x, "exponential Lyapunov drift")?;
        let a = self.diffusion(x, t)?;
        let b = self.drift(x, t)?;
        let c = self.potential(x, t)?;
        let q = quadratic_form(&a, x);
        let ar = alpha * r;
        let out = ar * n.powf(r - 2.0) * a.trace()
            + ar * (r - 2.0) * n.powf(r - 4.0) * q
            + ar * ar * n.powf(2.0 * r - 4.0) * q
            + ar * n.powf(r - 2.0) * dot(&b, x)
            + c;
        finite_or(out, "exponential Lyapunov drift", x, t)
    }

    /// The time-weighted exponential dissipativity expression
    /// `αr tr A + αr(r-2)|x|^{-2}(Ax,x) + αr(b,x) + α|x|^2 c + α²r²|x|^{r-2}(Ax,x)`.
    pub fn lyapunov_drift_exponential_gradient(&self, alpha: f64, r: f64, x: &[f64], t: f64) -> Result<f64> {
        check_exponential_params(alpha, r)?;
        let n = self.nonzero_norm(x, "gradient-augmented Lyapunov drift")?;
        let a = self.diffusion(x, t)?;
        let b = self.drift(x, t)?;
        let c = self.potential(x, t)?;
        let q = quadratic_form(&a, x);
        let ar = alpha * r;
        let out = ar * a.trace()
            + ar * (r - 2.0) * q / (n * n)
            + ar * dot(&b, x)
            + alpha * n * n * c
            + ar * ar * n.powf(r - 2.0) * q;
        finite_or(out, "gradient-augmented Lyapunov drift", x, t)
    }

    /// Coefficients of the equation satisfied by `t0^{d/2} ρ(x0 + √t0 y, t0 s)`:
    /// `Â(y,s) = A(·)`, `b̂ = √t0 b(·)`, `ĉ = t0 c(·)`.
    pub fn rescaled(&self, x0: &[f64], t0: f64) -> Result<CoefficientField> {
        self.check_point(x0)?;
        if !(t0 > 0.0) {
            return Err(Error::Parameter(format!("time scale must be positive, got {t0}")));
        }
        let root = t0.sqrt();
        let origin = x0.to_vec();
        let map = move |y: &[f64]| -> Vec<f64> { y.iter().zip(&origin).map(|(yi, oi)| oi + root * yi).collect() };
        let map = Arc::new(map);

        let (a, m) = (self.diffusion.clone(), map.clone());
        let diffusion = move |y: &[f64], s: f64| a(&m(y), t0 * s);
        let (b, m) = (self.drift.clone(), map.clone());
        let drift = move |y: &[f64], s: f64| b(&m(y), t0 * s) * root;
        let (c, m) = (self.potential.clone(), map.clone());
        let potential = move |y: &[f64], s: f64| t0 * c(&m(y), t0 * s);

        let divergence = match &self.divergence {
            DivergenceMode::Analytic(f) => {
                let (f, m) = (f.clone(), map);
                DivergenceMode::Analytic(Arc::new(move |y: &[f64], s: f64| f(&m(y), t0 * s) * root))
            }
            DivergenceMode::FiniteDifference(StepRule::Fixed(h)) => {
                DivergenceMode::FiniteDifference(StepRule::Fixed(h / root))
            }
            DivergenceMode::FiniteDifference(rule) => DivergenceMode::FiniteDifference(*rule),
        };
        let mut out = CoefficientField::new(self.dimension, diffusion, drift, potential)
            .with_divergence_mode(divergence)
            .with_norm_convention(self.norm_convention)
            .with_horizon(self.horizon / t0);
        out.time_independent = self.time_independent;
        Ok(out)
    }
}

fn check_exponential_params(alpha: f64, r: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    if !(r >= 2.0) {
        return Err(Error::Parameter(format!(
            "exponential Lyapunov drift needs r >= 2, got {r}"
        )));
    }
    Ok(())
}

fn finite_or(value: f64, what: &'static str, x: &[f64], t: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, x: x.to_vec(), t })
    }
}

/// Extreme eigenvalues of a symmetric matrix: exact decomposition for
/// `d <= 3`, Rayleigh quotients over a fixed direction mesh beyond that.
pub fn symmetric_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    let d = a.nrows();
    match d {
        0 => (0.0, 0.0),
        1 => (a[(0, 0)], a[(0, 0)]),
        2 | 3 => {
            let eig = a.clone().symmetric_eigen();
            let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
        _ => rayleigh_extremes(a),
    }
}

// Directions with components in {-1, 0, 1}, one per antipodal pair.
fn rayleigh_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    let d = a.nrows();
    let total = 3usize.pow(d as u32);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut v = vec![0.0; d];
    for code in 1..total {
        let mut c = code;
        for vi in v.iter_mut() {
            *vi = (c % 3) as f64 - 1.0;
            c /= 3;
        }
        let first_nonzero = v.iter().find(|vi| **vi != 0.0);
        if !matches!(first_nonzero, Some(&s) if s > 0.0) {
            continue;
        }
        let nn: f64 = v.iter().map(|x| x * x).sum();
        let rq = quadratic_form(a, &v) / nn;
        lo = lo.min(rq);
        hi = hi.max(rq);
    }
    (lo, hi)
}

/// Ball `U` and time interval `J = [s1, s2]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub center: Vec<f64>,
    pub radius: f64,
    pub time_interval: (f64, f64),
}

impl Region {
    pub fn new(center: Vec<f64>, radius: f64, time_interval: (f64, f64)) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!(
                "region radius must be positive, got {radius}"
            )));
        }
        let (s1, s2) = time_interval;
        if !(s1 < s2) || s1 < 0.0 {
            return Err(Error::Parameter(format!(
                "time interval [{s1}, {s2}] must satisfy 0 <= s1 < s2"
            )));
        }
        Ok(Self {
            center,
            radius,
            time_interval,
        })
    }

    fn check_inside(&self, field: &CoefficientField) -> Result<()> {
        field.check_point(&self.center)?;
        if let Some(limit) = field.domain_radius {
            let reach = euclidean_norm(&self.center) + self.radius;
            if reach > limit * (1.0 + 1e-12) {
                return Err(Error::Domain(format!(
                    "region reaches |x| = {reach}, beyond the declared radius {limit}"
                )));
            }
        }
        if self.time_interval.1 > field.horizon {
            return Err(Error::Domain(format!(
                "time interval ends at {} past the horizon {}",
                self.time_interval.1, field.horizon
            )));
        }
        Ok(())
    }
}

/// Sampling resolution over a [`Region`]. Refinement `n -> 2n - 1` nests
/// the previous sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sampling {
    pub per_axis: usize,
    pub time_samples: usize,
    /// Samples with `|x|` below this are dropped (annular sampling).
    pub inner_radius: Option<f64>,
}

impl Sampling {
    pub fn new(per_axis: usize, time_samples: usize) -> Self {
        Self {
            per_axis,
            time_samples,
            inner_radius: None,
        }
    }

    pub fn annulus(mut self, inner_radius: f64) -> Self {
        self.inner_radius = Some(inner_radius);
        self
    }

    /// Next nested refinement level.
    pub fn refined(self) -> Self {
        Self {
            per_axis: 2 * self.per_axis - 1,
            time_samples: 2 * self.time_samples - 1,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.per_axis < 2 || self.time_samples < 2 {
            return Err(Error::Parameter(format!(
                "sampling needs at least 2 points per axis and 2 time samples, got {} and {}",
                self.per_axis, self.time_samples
            )));
        }
        Ok(())
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Grid points of the cube around `center`, restricted to the closed ball.
pub(crate) fn ball_points(center: &[f64], radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let d = center.len();
    let axes: Vec<Vec<f64>> = center
        .iter()
        .map(|c| linspace(c - radius, c + radius, per_axis))
        .collect();
    let total = per_axis.pow(d as u32);
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    for code in 0..total {
        let mut c = code;
        for slot in idx.iter_mut().rev() {
            *slot = c % per_axis;
            c /= per_axis;
        }
        let p: Vec<f64> = (0..d).map(|k| axes[k][idx[k]]).collect();
        let dist2: f64 = p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist2 <= radius * radius * (1.0 + 1e-12) {
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralBounds {
    pub lambda_floor: f64,
    pub norm_ceiling: f64,
    pub sample_count: usize,
}

/// Sampled infimum of the smallest and supremum of the largest eigenvalue
/// of `A` over `region`.
pub fn ellipticity_extremes(field: &CoefficientField, region: &Region, sampling: Sampling) -> Result<SpectralBounds> {
    sampling.validate()?;
    region.check_inside(field)?;
    let points = ball_points(&region.center, region.radius, sampling.per_axis);
    let times = linspace(region.time_interval.0, region.time_interval.1, sampling.time_samples);
    let mut lambda_floor = f64::INFINITY;
    let mut norm_ceiling = f64::NEG_INFINITY;
    let mut sample_count = 0;
    for &t in &times {
        for p in &points {
            let (lo, hi) = field.eigen_extremes(p, t)?;
            lambda_floor = lambda_floor.min(lo);
            norm_ceiling = norm_ceiling.max(hi);
            sample_count += 1;
        }
    }
    if lambda_floor < 0.0 {
        return Err(Error::Domain(format!(
            "diffusion matrix is indefinite in the region (smallest eigenvalue {lambda_floor:e})"
        )));
    }
    Ok(SpectralBounds {
        lambda_floor,
        norm_ceiling,
        sample_count,
    })
}

/// Left-hand side of a dissipativity inequality `LHS(x,t) <= C1 - C2 |x|^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LyapunovExpression {
    Power { r: f64 },
    Exponential { alpha: f64, r: f64 },
    ExponentialWithGradient { alpha: f64, r: f64 },
}

impl LyapunovExpression {
    pub fn evaluate(&self, field: &CoefficientField, x: &[f64], t: f64) -> Result<f64> {
        match *self {
            LyapunovExpression::Power { r } => field.lyapunov_drift_power(r, x, t),
            LyapunovExpression::Exponential { alpha, r } => field.lyapunov_drift_exponential(alpha, r, x, t),
            LyapunovExpression::ExponentialWithGradient { alpha, r } => {
                field.lyapunov_drift_exponential_gradient(alpha, r, x, t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub t: f64,
    pub lhs: f64,
}

/// Constants valid on the sampled set only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub c1: f64,
    pub c2: f64,
    pub k: f64,
    /// Sample where `C1 - C2|x|^k - LHS` is smallest.
    pub worst: SamplePoint,
    pub margin: f64,
    pub sample_count: usize,
    pub sampling: Sampling,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationFailure {
    pub reason: String,
    pub violating: Vec<SamplePoint>,
    pub sample_count: usize,
    pub sampling: Sampling,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Certification {
    Certified(Certificate),
    Failed(CertificationFailure),
}

impl Certification {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Certification::Certified(c) => Some(c),
            Certification::Failed(_) => None,
        }
    }
}

fn annulus_samples(region: &Region, sampling: Sampling) -> (Vec<Vec<f64>>, Vec<f64>) {
    let spacing = 2.0 * region.radius / (sampling.per_axis - 1) as f64;
    let inner = sampling.inner_radius.unwrap_or(0.5 * spacing);
    let points = ball_points(&region.center, region.radius, sampling.per_axis)
        .into_iter()
        .filter(|p| {
            let n = euclidean_norm(p);
            n > 0.0 && n >= inner
        })
        .collect();
    let times = linspace(region.time_interval.0, region.time_interval.1, sampling.time_samples);
    (points, times)
}

/// Finds constants with `LHS(x,t) <= C1 - C2|x|^k` on an annular sample of
/// `region`.
///
/// `g(C2) = max_i (LHS_i + C2 |x_i|^k)` is convex and piecewise linear.
/// Past its last breakpoint the maximum sits on the outermost samples and
/// grows with the truncation radius, so `C2` is taken at that breakpoint
/// and `C1 = max(g(C2), 0)`. A non-positive breakpoint means no decaying
/// majorant is supported by the samples.
pub fn certify_dissipativity(
    expr: LyapunovExpression,
    field: &CoefficientField,
    k: f64,
    region: &Region,
    sampling: Sampling,
) -> Result<Certification> {
    if !(k > 0.0) {
        return Err(Error::Parameter(format!("k must be positive, got {k}")));
    }
    sampling.validate()?;
    region.check_inside(field)?;
    let (points, times) = annulus_samples(region, sampling);
    if points.len() < 2 {
        return Err(Error::Parameter("annular sample holds fewer than two points".into()));
    }

    let mut samples = Vec::with_capacity(points.len() * times.len());
    for &t in &times {
        for p in &points {
            let lhs = expr.evaluate(field, p, t)?;
            let growth = euclidean_norm(p).powf(k);
            samples.push((SamplePoint { x: p.clone(), t, lhs }, growth));
        }
    }
    let sample_count = samples.len();

    let outer = samples.iter().map(|(_, n)| *n).fold(0.0_f64, f64::max);
    let shell = outer * (1.0 - 1e-9);
    let (top_lhs, top_n) = samples
        .iter()
        .filter(|(_, n)| *n >= shell)
        .map(|(s, n)| (s.lhs, *n))
        .fold((f64::NEG_INFINITY, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc });

    let breakpoint = samples
        .iter()
        .filter(|(_, n)| *n < shell)
        .map(|(s, n)| (s.lhs - top_lhs) / (top_n - n))
        .fold(f64::NEG_INFINITY, f64::max);

    if !(breakpoint > 0.0) || !breakpoint.is_finite() {
        let violating = samples
            .iter()
            .filter(|(s, n)| *n >= shell || s.lhs >= top_lhs)
            .map(|(s, _)| s.clone())
            .collect();
        return Ok(Certification::Failed(CertificationFailure {
            reason: format!(
                "no decaying majorant C1 - C2|x|^{k}: the outermost samples do not fall below the interior (slope {breakpoint:e})"
            ),
            violating,
            sample_count,
            sampling,
        }));
    }

    let c2 = breakpoint;
    let c1 = samples
        .iter()
        .map(|(s, n)| s.lhs + c2 * n)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let (worst, margin) =
        samples
            .iter()
            .map(|(s, n)| (s, c1 - c2 * n - s.lhs))
            .fold(
                (None, f64::INFINITY),
                |acc, (s, m)| if m < acc.1 { (Some(s), m) } else { acc },
            );
    Ok(Certification::Certified(Certificate {
        c1,
        c2,
        k,
        worst: worst.expect("at least two samples").clone(),
        margin,
        sample_count,
        sampling,
    }))
}
