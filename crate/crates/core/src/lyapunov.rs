//! Moment bounds driven by a Lyapunov inequality.
//!
//! Covers the Gronwall envelope `Q(t) + R(t) m`, the implicit time change
//! `t = ∫_0^η ds / (s G(s^{-δ}))`, the three resulting bound shapes and the
//! specialised moment envelopes for power and exponential weights.
//!
//! Everything involving `η` is computed in the logarithmic variable
//! `s = ln y = -δ ln η`, because `η` leaves the range of `f64` long before
//! the bounds stop being meaningful. With the tail
//! `F(s) = ∫_s^∞ ds' / G(e^{s'})` the defining equation reads `F(s) = δ t`.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::roots::{bisect, expand_bracket, Bracket, BracketOptions};

/// Rates `K` (inhomogeneous) and `H` (multiplicative) of the differential
/// inequality `∂_t V + LV <= K(t) + H(t) V`.
#[derive(Clone)]
pub struct RateFunctions {
    inhomogeneous: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    multiplicative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for RateFunctions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RateFunctions { .. }")
    }
}

impl RateFunctions {
    pub fn new<K, H>(inhomogeneous: K, multiplicative: H) -> Self
    where
        K: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            inhomogeneous: Arc::new(inhomogeneous),
            multiplicative: Arc::new(multiplicative),
        }
    }

    pub fn constant(inhomogeneous: f64, multiplicative: f64) -> Self {
        Self::new(move |_| inhomogeneous, move |_| multiplicative)
    }
}

fn checked_rate(
    rate: &dyn Fn(f64) -> f64,
    t: f64,
    name: &'static str,
    bad: &Cell<Option<(&'static str, f64, f64)>>,
) -> f64 {
    let v = rate(t);
    if !(v >= 0.0) && bad.get().is_none() {
        bad.set(Some((name, t, v)));
    }
    if v.is_finite() {
        v.max(0.0)
    } else {
        v
    }
}

/// `Q(t) + R(t) m` with `R(t) = exp ∫_0^t H` and `Q(t) = R(t) ∫_0^t K/R`.
///
/// `Q` is evaluated as `∫_0^t K(s) exp(∫_s^t H) ds`, which avoids forming
/// `R` and `1/R` separately.
pub fn gronwall_envelope(rates: &RateFunctions, t: f64, initial_moment: f64, tol: Tolerance) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Parameter(format!("time must be positive and finite, got {t}")));
    }
    if !(initial_moment >= 0.0) {
        return Err(Error::Parameter(format!(
            "initial moment must be nonnegative, got {initial_moment}"
        )));
    }
    let bad = Cell::new(None);
    let h = |s: f64| checked_rate(&*rates.multiplicative, s, "H", &bad);
    let k = |s: f64| checked_rate(&*rates.inhomogeneous, s, "K", &bad);
    let inner_tol = Tolerance {
        rel: tol.rel.min(1e-13),
        ..tol
    };

    let log_growth = integrate(h, 0.0, t, tol)?.value;
    let inner_failure = Cell::new(None);
    let q = integrate(
        |s| {
            let ks = k(s);
            if ks == 0.0 {
                return 0.0;
            }
            match integrate(h, s, t, inner_tol) {
                Ok(est) => ks * est.value.exp(),
                Err(e) => {
                    let first = inner_failure.take();
                    inner_failure.set(first.or(Some(e)));
                    f64::NAN
                }
            }
        },
        0.0,
        t,
        tol,
    );
    if let Some((name, at, value)) = bad.get() {
        return Err(Error::Parameter(format!(
            "rate {name} must be nonnegative, got {value} at t={at}"
        )));
    }
    if let Some(e) = inner_failure.take() {
        return Err(e);
    }
    let out = q?.value + log_growth.exp() * initial_moment;
    if !out.is_finite() {
        return Err(Error::Overflow("Gronwall envelope".into()));
    }
    Ok(out)
}

/// The growth function `G` of the superlinear Lyapunov inequality
/// `LW <= C - W G(W)`.
#[derive(Clone)]
pub enum GrowthFunction {
    /// `G(z) = c z^sigma`.
    Power { c: f64, sigma: f64 },
    /// `G(z) = c (ln z)^sigma` for `z >= 2`, held at `G(2)` below.
    LogPower { c: f64, sigma: f64 },
    /// Arbitrary positive, continuous, increasing `G`.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for GrowthFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthFunction::Power { c, sigma } => write!(f, "Power {{ c: {c}, sigma: {sigma} }}"),
            GrowthFunction::LogPower { c, sigma } => write!(f, "LogPower {{ c: {c}, sigma: {sigma} }}"),
            GrowthFunction::Custom(_) => f.write_str("Custom"),
        }
    }
}

const LOG_FLOOR: f64 = std::f64::consts::LN_2;
const TAIL_REL: f64 = 1e-12;
const MAX_WINDOWS: usize = 400;

fn inner_tolerance() -> Tolerance {
    Tolerance {
        rel: TAIL_REL,
        abs: 1e-300,
        max_intervals: 4000,
    }
}

impl GrowthFunction {
    pub fn power(c: f64, sigma: f64) -> Result<Self> {
        positive("growth constant", c)?;
        positive("growth exponent", sigma)?;
        Ok(GrowthFunction::Power { c, sigma })
    }

    pub fn log_power(c: f64, sigma: f64) -> Result<Self> {
        positive("growth constant", c)?;
        positive("growth exponent", sigma)?;
        Ok(GrowthFunction::LogPower { c, sigma })
    }

    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(g: F) -> Self {
        GrowthFunction::Custom(Arc::new(g))
    }

    /// `G(z)`.
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            GrowthFunction::Power { c, sigma } => c * z.powf(sigma),
            GrowthFunction::LogPower { c, sigma } => c * z.max(2.0).ln().powf(sigma),
            GrowthFunction::Custom(ref g) => g(z),
        }
    }

    /// `G(e^s)`, evaluated without forming `e^s` where possible.
    pub fn eval_log(&self, s: f64) -> f64 {
        match *self {
            GrowthFunction::Power { c, sigma } => c * (sigma * s).exp(),
            GrowthFunction::LogPower { c, sigma } => c * s.max(LOG_FLOOR).powf(sigma),
            GrowthFunction::Custom(ref g) => g(s.exp()),
        }
    }

    /// Whether `G(e^s)` is the constant extension rather than the formula.
    pub fn is_extended_log(&self, s: f64) -> bool {
        matches!(self, GrowthFunction::LogPower { .. } if s < LOG_FLOOR)
    }

    fn breakpoints(&self) -> &'static [f64] {
        match self {
            GrowthFunction::LogPower { .. } => &[LOG_FLOOR],
            _ => &[],
        }
    }

    /// `F(e^s) = ∫_s^∞ ds' / G(e^{s'})`.
    pub fn tail_log(&self, s: f64) -> Result<f64> {
        let f = |u: f64| 1.0 / self.eval_log(u);
        tail(&f, s, 1.0, self.breakpoints(), "growth tail")
    }

    /// `F(y) = ∫_y^∞ du / (u G(u))`.
    pub fn tail_integral(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Parameter(format!("tail integral needs y > 0, got {y}")));
        }
        self.tail_log(y.ln())
    }

    /// Checks positivity and monotonicity on a log-spaced grid of `z` and
    /// convergence of the tail.
    pub fn validate(&self) -> Result<()> {
        let mut prev = 0.0;
        for i in 0..=120 {
            let z = 10f64.powf(-6.0 + 0.1 * i as f64);
            let g = self.eval(z);
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Parameter(format!("G({z:e}) = {g} is not positive and finite")));
            }
            if g < prev * (1.0 - 1e-12) {
                return Err(Error::Parameter(format!("G decreases near z = {z:e}")));
            }
            prev = g;
        }
        self.tail_log(0.0).map(|_| ())
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{what} must be positive, got {v}")))
    }
}

fn integrate_split<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let mut lo = a;
    for &p in breaks.iter().filter(|&&p| p > a && p < b) {
        total += integrate(f, lo, p, inner_tolerance())?.value;
        lo = p;
    }
    Ok(total + integrate(f, lo, b, inner_tolerance())?.value)
}

// ∫_start^∞ f over doubling windows, stopping on a relative increment below
// TAIL_REL (Cauchy criterion).
fn tail<F: Fn(f64) -> f64>(f: &F, start: f64, width: f64, breaks: &[f64], what: &str) -> Result<f64> {
    let mut total = 0.0;
    let mut lo = start;
    let mut w = width.max(1e-3 * start.abs());
    for _ in 0..MAX_WINDOWS {
        let inc = integrate_split(f, lo, lo + w, breaks)?;
        total += inc;
        if inc.abs() <= TAIL_REL * total.abs() || (inc == 0.0 && total == 0.0) {
            return Ok(total);
        }
        lo += w;
        w *= 2.0;
        if !lo.is_finite() {
            break;
        }
    }
    Err(Error::Divergence(format!(
        "{what} from {start} keeps growing after {MAX_WINDOWS} doubling windows (partial sum {total:e})"
    )))
}

/// `η(t)` at one instant, stored through its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaPoint {
    pub t: f64,
    pub eta: f64,
    pub ln_eta: f64,
    /// `ln y` with `y = η^{-δ}`.
    pub log_y: f64,
    /// `G` was evaluated on its constant extension at `y`.
    pub extended: bool,
}

/// The curve `η(t)` for a fixed growth function and `δ`.
#[derive(Debug, Clone)]
pub struct EtaProfile {
    growth: GrowthFunction,
    delta: f64,
    options: BracketOptions,
}

impl EtaProfile {
    pub fn new(growth: GrowthFunction, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parameter(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self {
            growth,
            delta,
            options: BracketOptions::default(),
        })
    }

    pub fn growth(&self) -> &GrowthFunction {
        &self.growth
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Solves `F(s) = δ t` for `s` by bracketing and bisection on `ln F`.
    pub fn solve(&self, t: f64) -> Result<EtaPoint> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Parameter(format!("time must be positive and finite, got {t}")));
        }
        let target = (self.delta * t).ln();
        let sup = Cell::new(0.0_f64);
        let direct = |s: f64| -> Result<f64> {
            let f = self.growth.tail_log(s)?;
            sup.set(sup.get().max(f / self.delta));
            Ok(f.ln() - target)
        };
        let bracket = match expand_bracket(direct, 0.0, 1.0, self.options) {
            Ok(b) => b,
            Err(Error::Bracket(_)) => return Err(Error::Range { t, sup: sup.get() }),
            Err(e) => return Err(e),
        };

        // Bisection measures F from the upper end of the bracket, so each
        // evaluation adds a positive finite integral to a fixed tail.
        let anchor = bracket.hi;
        let tail_at_anchor = self.growth.tail_log(anchor)?;
        let integrand = |u: f64| 1.0 / self.growth.eval_log(u);
        let breaks = self.growth.breakpoints();
        let anchored = |s: f64| -> Result<f64> {
            let f = tail_at_anchor + integrate_split(&integrand, s, anchor, breaks)?;
            Ok(f.ln() - target)
        };
        let bracket = Bracket {
            f_hi: tail_at_anchor.ln() - target,
            ..bracket
        };
        let log_y = bisect(anchored, bracket, self.options)?;
        let ln_eta = -log_y / self.delta;
        Ok(EtaPoint {
            t,
            eta: ln_eta.exp(),
            ln_eta,
            log_y,
            extended: self.growth.is_extended_log(log_y),
        })
    }

    pub fn eta(&self, t: f64) -> Result<f64> {
        Ok(self.solve(t)?.eta)
    }

    /// `(1/η(t)) ∫_0^t η(τ) dτ`.
    ///
    /// Substituting `δτ = F(s')` turns the time integral into
    /// `∫_S^∞ exp(-(s' - S)/δ) / (δ G(e^{s'})) ds'` with `S = ln η(t)^{-δ}`.
    pub fn scaled_eta_integral(&self, point: &EtaPoint) -> Result<f64> {
        let s0 = point.log_y;
        let delta = self.delta;
        let f = |u: f64| (-(u - s0) / delta).exp() / (delta * self.growth.eval_log(u));
        tail(&f, s0, delta, self.growth.breakpoints(), "time integral of eta")
    }

    /// `ln ∫_0^t η(τ) dτ`.
    pub fn ln_eta_integral(&self, t: f64) -> Result<f64> {
        let p = self.solve(t)?;
        Ok(p.ln_eta + self.scaled_eta_integral(&p)?.ln())
    }

    /// `∫_0^t η(τ) dτ`.
    pub fn eta_integral(&self, t: f64) -> Result<f64> {
        Ok(self.ln_eta_integral(t)?.exp())
    }
}

/// `η(t)` for growth function `G` and exponent `δ`.
pub fn solve_eta(growth: &GrowthFunction, delta: f64, t: f64) -> Result<f64> {
    EtaProfile::new(growth.clone(), delta)?.eta(t)
}

fn nonnegative(what: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{what} must be nonnegative and finite, got {v}"
        )))
    }
}

fn finite_bound(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow(what.to_string()))
    }
}

/// `e^{Ct} (1 + m)`, the bound under `LW <= C + C W`.
pub fn bound_case_i(c: f64, t: f64, initial_moment: f64) -> Result<f64> {
    nonnegative("constant C", c)?;
    nonnegative("time", t)?;
    nonnegative("initial moment", initial_moment)?;
    finite_bound((c * t).exp() * (1.0 + initial_moment), "exponential moment bound")
}

fn log_add(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln [1/((1-δ) η^δ) + (C/η) ∫_0^t η]`.
pub fn ln_bound_case_ii(profile: &EtaProfile, c: f64, t: f64) -> Result<f64> {
    nonnegative("constant C", c)?;
    let p = profile.solve(t)?;
    let first = p.log_y - (1.0 - profile.delta).ln();
    if c == 0.0 {
        return Ok(first);
    }
    let second = c.ln() + profile.scaled_eta_integral(&p)?.ln();
    Ok(log_add(first, second))
}

/// `1/((1-δ) η^δ) + (C/η) ∫_0^t η`, the initial-condition-free moment bound
/// under `LW <= C - W G(W)`.
pub fn bound_case_ii(profile: &EtaProfile, c: f64, t: f64) -> Result<f64> {
    finite_bound(ln_bound_case_ii(profile, c, t)?.exp(), "moment bound")
}

/// `(1-δ)^{-1} η^{1-δ} + C ∫_0^t η`, the logarithm of the exponential bound.
pub fn ln_bound_case_iii(profile: &EtaProfile, c: f64, t: f64) -> Result<f64> {
    nonnegative("constant C", c)?;
    let p = profile.solve(t)?;
    let first = ((1.0 - profile.delta) * p.ln_eta).exp() / (1.0 - profile.delta);
    let second = if c == 0.0 {
        0.0
    } else {
        c * (p.ln_eta + profile.scaled_eta_integral(&p)?.ln()).exp()
    };
    Ok(first + second)
}

/// `exp((1-δ)^{-1} η^{1-δ} + C ∫_0^t η)`, bounding `∫ exp(η(t) W) dμ_t`.
pub fn bound_case_iii(profile: &EtaProfile, c: f64, t: f64) -> Result<f64> {
    finite_bound(ln_bound_case_iii(profile, c, t)?.exp(), "exponential moment bound")
}

/// Constants `(C, c)` for `LW <= C - W G(W)` with `G(z) = c z^σ` or
/// `G(z) = c (ln z)^σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthConstants {
    pub additive: f64,
    pub rate: f64,
}

impl GrowthConstants {
    /// The single constant used when both roles share one value.
    pub fn merged(&self) -> f64 {
        self.additive.max(self.rate)
    }
}

/// From `LHS <= C1 - C2|x|^k` for the power drift to
/// `L|x|^r <= C - c |x|^{r+k-2}`.
///
/// For `r > 2` the factor `|x|^{r-2}` is absorbed by halving the rate:
/// `C1 ρ^a - (C2/2) ρ^{a+k}` with `a = r - 2` is maximal at
/// `ρ^k = a C1 / ((a+k) C2/2)`.
pub fn power_growth_constants(r: f64, k: f64, c1: f64, c2: f64) -> Result<GrowthConstants> {
    check_power_exponents(r, k)?;
    nonnegative("C1", c1)?;
    positive("C2", c2)?;
    if r == 2.0 {
        return Ok(GrowthConstants { additive: c1, rate: c2 });
    }
    let a = r - 2.0;
    let rate = 0.5 * c2;
    let rho = (a * c1 / ((a + k) * rate)).powf(1.0 / k);
    Ok(GrowthConstants {
        additive: c1 * rho.powf(a) * k / (a + k),
        rate,
    })
}

/// From `LHS <= C1 - C2|x|^k` for the exponential drift to
/// `L e^{α|x|^r} <= C - W c (ln W)^{k/r}` with the constant extension of `G`
/// below `z = 2` paid for in `C`.
pub fn exponential_growth_constants(alpha: f64, r: f64, k: f64, c1: f64, c2: f64) -> Result<GrowthConstants> {
    check_exponential_exponents(alpha, r, k)?;
    nonnegative("C1", c1)?;
    positive("C2", c2)?;
    let sigma = k / r;
    let rate = 0.5 * c2 * alpha.powf(-sigma);
    let rho_max = (2.0 * c1 / c2).powf(1.0 / k);
    let g_floor = rate * LOG_FLOOR.powf(sigma);
    Ok(GrowthConstants {
        additive: c1 * (alpha * rho_max.powf(r)).exp() + 2.0 * g_floor,
        rate,
    })
}

fn check_power_exponents(r: f64, k: f64) -> Result<()> {
    if !(r >= 2.0) {
        return Err(Error::Parameter(format!("r must be at least 2, got {r}")));
    }
    if !(k > 2.0) {
        return Err(Error::Parameter(format!("k must exceed 2, got {k}")));
    }
    Ok(())
}

fn check_exponential_exponents(alpha: f64, r: f64, k: f64) -> Result<()> {
    positive("alpha", alpha)?;
    if !(r > 2.0) {
        return Err(Error::Parameter(format!("r must exceed 2, got {r}")));
    }
    if !(k > r) {
        return Err(Error::Parameter(format!("k must exceed r (k = {k}, r = {r})")));
    }
    Ok(())
}

/// A bound value with its logarithm and the `η` it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEnvelope {
    pub value: f64,
    pub ln_value: f64,
    pub eta: EtaPoint,
    /// The growth function was evaluated on its constant extension.
    pub extended: bool,
}

fn envelope_from(profile: &EtaProfile, additive: f64, t: f64) -> Result<MomentEnvelope> {
    let ln_value = ln_bound_case_ii(profile, additive, t)?;
    let eta = profile.solve(t)?;
    Ok(MomentEnvelope {
        value: ln_value.exp(),
        ln_value,
        eta,
        extended: eta.extended,
    })
}

/// Bound on `∫|x|^r dμ_t` decaying like `t^{-r/(k-2)}`, with
/// `G(z) = C3 z^{(k-2)/r}` and additive constant `C3`.
pub fn moment_envelope_power(r: f64, k: f64, c3: f64, delta: f64, t: f64) -> Result<MomentEnvelope> {
    moment_envelope_power_split(r, k, GrowthConstants { additive: c3, rate: c3 }, delta, t)
}

/// [`moment_envelope_power`] with separate additive and rate constants.
pub fn moment_envelope_power_split(
    r: f64,
    k: f64,
    constants: GrowthConstants,
    delta: f64,
    t: f64,
) -> Result<MomentEnvelope> {
    check_power_exponents(r, k)?;
    let growth = GrowthFunction::power(constants.rate, (k - 2.0) / r)?;
    envelope_from(&EtaProfile::new(growth, delta)?, constants.additive, t)
}

/// Bound on `∫ exp(α|x|^r) dμ_t` growing like `exp(γ t^{-r/(k-r)})`, with
/// `G(z) = C3 (ln z)^{k/r}` for `z >= 2` and additive constant `C3`.
///
/// `alpha` enters only through `C3`; it is validated for consistency.
pub fn moment_envelope_exponential(r: f64, k: f64, alpha: f64, c3: f64, delta: f64, t: f64) -> Result<MomentEnvelope> {
    moment_envelope_exponential_split(r, k, alpha, GrowthConstants { additive: c3, rate: c3 }, delta, t)
}

pub fn moment_envelope_exponential_split(
    r: f64,
    k: f64,
    alpha: f64,
    constants: GrowthConstants,
    delta: f64,
    t: f64,
) -> Result<MomentEnvelope> {
    check_exponential_exponents(alpha, r, k)?;
    let growth = GrowthFunction::log_power(constants.rate, k / r)?;
    envelope_from(&EtaProfile::new(growth, delta)?, constants.additive, t)
}

/// Result of the time-weighted exponential moment bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeWeightedEnvelope {
    /// `exp((1-δ)^{-1} η^{1-δ} + C ∫η)` from the general machinery.
    pub value: f64,
    pub ln_value: f64,
    /// `γ1 exp(γ2 (t^{e1} + t^{e2}))`, which majorizes `value`.
    pub envelope: f64,
    pub ln_envelope: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// `(β - r/(k-2), β + 1)`.
    pub exponents: (f64, f64),
    /// `η(t) = C4 t^β`.
    pub c4: f64,
    pub delta: f64,
    /// The bound controls `∫ exp(rate t^β |x|^r) dμ_t` with `rate = α C4`.
    pub spatial_rate: f64,
}

/// Bound on `∫ exp(α C4 t^β |x|^r) dμ_t` for `β > r/(k-2)`.
///
/// `W = α|x|^r`, `G(z) = C3 α^{-(1+σ)/σ} z^σ` with `σ = (k-2)/r`, and
/// `δ = 1/(βσ)` so that `η(t) = C4 t^β`.
pub fn time_weighted_exponential_envelope(
    r: f64,
    k: f64,
    alpha: f64,
    beta: f64,
    c3: f64,
    t: f64,
) -> Result<TimeWeightedEnvelope> {
    if !(r > 2.0) {
        return Err(Error::Parameter(format!("r must exceed 2, got {r}")));
    }
    if !(k > 2.0) {
        return Err(Error::Parameter(format!("k must exceed 2, got {k}")));
    }
    positive("alpha", alpha)?;
    positive("C3", c3)?;
    let threshold = r / (k - 2.0);
    if !(beta > threshold) {
        return Err(Error::Parameter(format!(
            "beta must exceed r/(k-2) = {threshold}, got {beta}"
        )));
    }
    let sigma = (k - 2.0) / r;
    let rate = c3 * alpha.powf(-(1.0 + sigma) / sigma);
    let delta = 1.0 / (beta * sigma);
    let profile = EtaProfile::new(GrowthFunction::power(rate, sigma)?, delta)?;
    let ln_value = ln_bound_case_iii(&profile, c3, t)?;
    let c4 = (rate * sigma * delta).powf(beta);
    let exponents = (beta - threshold, beta + 1.0);
    let a = c4.powf(1.0 - delta) / (1.0 - delta);
    let b = c3 * c4 / (beta + 1.0);
    let gamma1: f64 = 1.0;
    let gamma2 = a.max(b);
    let ln_envelope = gamma1.ln() + gamma2 * (t.powf(exponents.0) + t.powf(exponents.1));
    Ok(TimeWeightedEnvelope {
        value: ln_value.exp(),
        ln_value,
        envelope: ln_envelope.exp(),
        ln_envelope,
        gamma1,
        gamma2,
        exponents,
        c4,
        delta,
        spatial_rate: alpha * c4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn gronwall_examples() {
        let tol = Tolerance::default();
        let zero = RateFunctions::constant(0.0, 0.0);
        assert_eq!(gronwall_envelope(&zero, 1.0, 5.0, tol).unwrap(), 5.0);
        let one = RateFunctions::constant(1.0, 1.0);
        let e = std::f64::consts::E;
        let m = 0.7;
        assert!(rel(gronwall_envelope(&one, 1.0, m, tol).unwrap(), e - 1.0 + e * m) < 1e-12);
        let k_only = RateFunctions::constant(1.0, 0.0);
        assert!(rel(gronwall_envelope(&k_only, 2.0, 0.0, tol).unwrap(), 2.0) < 1e-14);
    }

    #[test]
    fn gronwall_rejects_negative_rates() {
        let bad = RateFunctions::new(|t| t - 0.5, |_| 0.0);
        assert!(matches!(
            gronwall_envelope(&bad, 1.0, 0.0, Tolerance::default()),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn gronwall_reports_non_integrable_rates() {
        let singular = RateFunctions::new(|_| 0.0, |t: f64| 1.0 / t);
        assert!(matches!(
            gronwall_envelope(&singular, 1.0, 1.0, Tolerance::default()),
            Err(Error::Quadrature(_))
        ));
    }

    #[test]
    fn tail_examples() {
        let g = GrowthFunction::power(1.0, 1.0).unwrap();
        assert!(rel(g.tail_integral(2.0).unwrap(), 0.5) < 1e-11);
        let g = GrowthFunction::power(1.0, 2.0).unwrap();
        assert!(rel(g.tail_integral(1.0).unwrap(), 0.5) < 1e-11);
        assert!(g.tail_integral(1.0).unwrap() > g.tail_integral(2.0).unwrap());
    }

    #[test]
    fn log_family_tail_at_sigma_one_diverges() {
        let g = GrowthFunction::log_power(1.0, 1.0).unwrap();
        assert!(matches!(g.tail_integral(3.0), Err(Error::Divergence(_))));
        let g = GrowthFunction::log_power(1.0, 2.0).unwrap();
        assert!(rel(g.tail_integral(10.0).unwrap(), 1.0 / 10f64.ln()) < 1e-10);
    }

    #[test]
    fn solve_eta_examples() {
        let g = GrowthFunction::power(1.0, 1.0).unwrap();
        assert!(rel(solve_eta(&g, 0.5, 2.0).unwrap(), 1.0) < 1e-10);
        let g = GrowthFunction::power(2.0, 2.0).unwrap();
        assert!(rel(solve_eta(&g, 0.5, 1.0).unwrap(), 2.0) < 1e-10);
    }

    #[test]
    fn log_family_small_time() {
        // F(y) = (ln y)^{1-σ}/(C(σ-1)) gives ln η = -(1/δ) (C(σ-1)δt)^{-1/(σ-1)}.
        let profile = EtaProfile::new(GrowthFunction::log_power(1.0, 2.0).unwrap(), 0.5).unwrap();
        let p = profile.solve(0.08).unwrap();
        let expected = -(1.0 / 0.5) * (0.5 * 0.08f64).powf(-1.0);
        assert!((p.ln_eta - expected).abs() < 1e-8 * expected.abs());
        assert!(!p.extended);
        assert!(profile.solve(50.0).unwrap().extended);
    }

    #[test]
    fn bound_examples() {
        assert!(rel(bound_case_i(1.0, 2f64.ln(), 3.0).unwrap(), 8.0) < 1e-15);
        assert_eq!(bound_case_i(2.0, 0.0, 1.5).unwrap(), 2.5);
        assert!(matches!(bound_case_i(1.0, 1e4, 0.0), Err(Error::Overflow(_))));

        let profile = EtaProfile::new(GrowthFunction::power(1.0, 1.0).unwrap(), 0.5).unwrap();
        assert!(rel(bound_case_ii(&profile, 0.0, 1.0).unwrap(), 4.0) < 1e-10);
        assert!(rel(bound_case_ii(&profile, 0.0, 2.0).unwrap(), 2.0) < 1e-10);
        assert!(bound_case_ii(&profile, 0.0, 2.0).unwrap() < bound_case_ii(&profile, 0.0, 1.0).unwrap());
        assert!(rel(bound_case_iii(&profile, 0.0, 2.0).unwrap(), std::f64::consts::E.powi(2)) < 1e-10);
        assert!(bound_case_iii(&profile, 1.0, 2.0).unwrap() > bound_case_iii(&profile, 0.0, 2.0).unwrap());
        assert!((bound_case_iii(&profile, 0.0, 1e-12).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eta_integral_of_power_family() {
        // η = (t/2)^2, ∫_0^t η = t^3/12.
        let profile = EtaProfile::new(GrowthFunction::power(1.0, 1.0).unwrap(), 0.5).unwrap();
        for t in [0.01, 0.5, 3.0] {
            assert!(rel(profile.eta_integral(t).unwrap(), t * t * t / 12.0) < 1e-9);
        }
    }

    #[test]
    fn growth_constant_helpers() {
        let c = power_growth_constants(2.0, 4.0, 2.0, 2.0).unwrap();
        assert_eq!((c.additive, c.rate), (2.0, 2.0));
        // r = 4, k = 4: C1 ρ^2 - ρ^6 with C1 = 3, C2 = 2 peaks at ρ^4 = 1.
        let c = power_growth_constants(4.0, 4.0, 3.0, 2.0).unwrap();
        assert!((c.additive - 2.0).abs() < 1e-12 && c.rate == 1.0);
        assert!(exponential_growth_constants(0.5, 3.0, 3.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn time_weighted_exponents_and_majorant() {
        let env = time_weighted_exponential_envelope(3.0, 5.0, 0.5, 2.0, 1.5, 0.3).unwrap();
        assert!((env.exponents.0 - 1.0).abs() < 1e-15 && (env.exponents.1 - 3.0).abs() < 1e-15);
        assert!(env.ln_value <= env.ln_envelope + 1e-9);
        assert!(matches!(
            time_weighted_exponential_envelope(3.0, 5.0, 0.5, 1.0, 1.5, 0.3),
            Err(Error::Parameter(_))
        ));
        let tiny = time_weighted_exponential_envelope(3.0, 5.0, 0.5, 2.0, 1.5, 1e-8).unwrap();
        assert!((tiny.value - 1.0).abs() < 1e-6);
    }
}
