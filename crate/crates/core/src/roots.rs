//! Derivative-free root finding for strictly monotone scalar functions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketOptions {
    /// Absolute tolerance on the abscissa.
    pub abs_tol: f64,
    /// Cap on bisection iterations (bracket expansion has its own cap).
    pub max_iter: usize,
    /// Cap on bracket expansion steps; the step doubles each time.
    pub max_expansions: usize,
}

impl Default for BracketOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_iter: 200,
            max_expansions: 200,
        }
    }
}

/// A sign-change bracket `lo < hi` with function values at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

/// Expands outward from `start` with doubling steps until `f` changes sign.
///
/// `f` must be strictly monotone; its direction is detected from the first
/// two evaluations.
pub fn expand_bracket<F>(f: F, start: f64, initial_step: f64, opts: BracketOptions) -> Result<Bracket>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(initial_step > 0.0) {
        return Err(Error::Parameter(format!(
            "initial step must be positive, got {initial_step}"
        )));
    }
    let f0 = f(start)?;
    if f0 == 0.0 {
        return Ok(Bracket {
            lo: start,
            hi: start,
            f_lo: f0,
            f_hi: f0,
        });
    }
    let probe = f(start + initial_step)?;
    let increasing = probe > f0;
    // Walk in the direction that moves f toward zero.
    let upward = (f0 < 0.0) == increasing;
    let sign = if upward { 1.0 } else { -1.0 };

    let (mut anchor, mut f_anchor) = (start, f0);
    let mut step = initial_step;
    for _ in 0..opts.max_expansions {
        let next = anchor + sign * step;
        if !next.is_finite() {
            break;
        }
        let f_next = f(next)?;
        if f_next == 0.0 || f_next.signum() != f_anchor.signum() {
            let (lo, hi, f_lo, f_hi) = if upward {
                (anchor, next, f_anchor, f_next)
            } else {
                (next, anchor, f_next, f_anchor)
            };
            return Ok(Bracket { lo, hi, f_lo, f_hi });
        }
        anchor = next;
        f_anchor = f_next;
        step *= 2.0;
    }
    Err(Error::Bracket(format!(
        "no sign change found moving {} from {start} (last abscissa {anchor:e}, value {f_anchor:e})",
        if upward { "up" } else { "down" }
    )))
}

/// Bisects a sign-change bracket down to `opts.abs_tol`.
pub fn bisect<F>(f: F, bracket: Bracket, opts: BracketOptions) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let Bracket {
        mut lo,
        mut hi,
        mut f_lo,
        f_hi,
    } = bracket;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket(format!(
            "[{lo}, {hi}] does not bracket a root ({f_lo:e}, {f_hi:e})"
        )));
    }
    for _ in 0..opts.max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= opts.abs_tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
