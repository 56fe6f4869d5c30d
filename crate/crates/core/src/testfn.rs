//! Scalar test functions with closed-form derivatives, used to probe the
//! generator `L` and the weak formulation.

use nalgebra::{DMatrix, DVector};

/// A `C^{2,1}` scalar function of `(x, t)` with analytic derivatives.
pub trait TestFunction: Send + Sync {
    fn value(&self, x: &[f64], t: f64) -> f64;
    fn gradient(&self, x: &[f64], t: f64) -> DVector<f64>;
    fn hessian(&self, x: &[f64], t: f64) -> DMatrix<f64>;

    fn time_derivative(&self, _x: &[f64], _t: f64) -> f64 {
        0.0
    }

    /// A closed ball `(center, radius)` containing the support, if compact.
    fn support(&self) -> Option<(Vec<f64>, f64)> {
        None
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `u(x) = value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub dimension: usize,
    pub value: f64,
}

impl TestFunction for Constant {
    fn value(&self, _x: &[f64], _t: f64) -> f64 {
        self.value
    }
    fn gradient(&self, _x: &[f64], _t: f64) -> DVector<f64> {
        DVector::zeros(self.dimension)
    }
    fn hessian(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(self.dimension, self.dimension)
    }
}

/// `u(x) = |x|^r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialPower {
    pub r: f64,
}

impl TestFunction for RadialPower {
    fn value(&self, x: &[f64], _t: f64) -> f64 {
        norm(x).powf(self.r)
    }

    fn gradient(&self, x: &[f64], _t: f64) -> DVector<f64> {
        let n = norm(x);
        let scale = if n == 0.0 { 0.0 } else { self.r * n.powf(self.r - 2.0) };
        DVector::from_iterator(x.len(), x.iter().map(|v| scale * v))
    }

    fn hessian(&self, x: &[f64], _t: f64) -> DMatrix<f64> {
        let d = x.len();
        let n = norm(x);
        if n == 0.0 {
            let diag = if self.r == 2.0 { 2.0 } else { 0.0 };
            return DMatrix::from_diagonal_element(d, d, diag);
        }
        let r = self.r;
        let iso = r * n.powf(r - 2.0);
        let radial = r * (r - 2.0) * n.powf(r - 4.0);
        DMatrix::from_fn(d, d, |i, j| {
            let delta = if i == j { iso } else { 0.0 };
            delta + radial * x[i] * x[j]
        })
    }
}

/// `u(x) = exp(alpha |x|^r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialExponential {
    pub alpha: f64,
    pub r: f64,
}

impl TestFunction for RadialExponential {
    fn value(&self, x: &[f64], _t: f64) -> f64 {
        (self.alpha * norm(x).powf(self.r)).exp()
    }

    fn gradient(&self, x: &[f64], t: f64) -> DVector<f64> {
        let inner = RadialPower { r: self.r }.gradient(x, t);
        inner * (self.alpha * self.value(x, t))
    }

    fn hessian(&self, x: &[f64], t: f64) -> DMatrix<f64> {
        let power = RadialPower { r: self.r };
        let g = power.gradient(x, t);
        let h = power.hessian(x, t);
        let a = self.alpha;
        (h * a + &g * g.transpose() * (a * a)) * self.value(x, t)
    }
}

/// Smooth compactly supported bump `amplitude * exp(-1 / (1 - |z|^2))`,
/// `z = (x - center) / radius`, vanishing outside the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn new(center: Vec<f64>, radius: f64, amplitude: f64) -> Self {
        Self {
            center,
            radius,
            amplitude,
        }
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .map(|(xi, ci)| (xi - ci) / self.radius)
            .collect()
    }

    // (phi, q) with q = 1 - |z|^2; phi == 0 outside or where it underflows.
    fn core(&self, z: &[f64]) -> (f64, f64) {
        let q = 1.0 - z.iter().map(|v| v * v).sum::<f64>();
        if q <= 0.0 {
            return (0.0, q);
        }
        ((-1.0 / q).exp(), q)
    }
}

impl TestFunction for Bump {
    fn value(&self, x: &[f64], _t: f64) -> f64 {
        let z = self.scaled(x);
        self.amplitude * self.core(&z).0
    }

    fn gradient(&self, x: &[f64], _t: f64) -> DVector<f64> {
        let z = self.scaled(x);
        let (phi, q) = self.core(&z);
        if phi == 0.0 {
            return DVector::zeros(x.len());
        }
        // d/dz_i (-1/q) = -2 z_i / q^2
        let s = self.amplitude * phi * (-2.0 / (q * q)) / self.radius;
        DVector::from_iterator(x.len(), z.iter().map(|zi| s * zi))
    }

    fn hessian(&self, x: &[f64], _t: f64) -> DMatrix<f64> {
        let d = x.len();
        let z = self.scaled(x);
        let (phi, q) = self.core(&z);
        if phi == 0.0 {
            return DMatrix::zeros(d, d);
        }
        // g = -1/q, g_i = -2 z_i/q^2, g_ij = -2 delta_ij/q^2 - 8 z_i z_j/q^3,
        // phi_ij = phi (g_i g_j + g_ij).
        let q2 = q * q;
        let q3 = q2 * q;
        let scale = self.amplitude * phi / (self.radius * self.radius);
        DMatrix::from_fn(d, d, |i, j| {
            let gi = -2.0 * z[i] / q2;
            let gj = -2.0 * z[j] / q2;
            let delta = if i == j { -2.0 / q2 } else { 0.0 };
            scale * (gi * gj + delta - 8.0 * z[i] * z[j] / q3)
        })
    }

    fn support(&self) -> Option<(Vec<f64>, f64)> {
        Some((self.center.clone(), self.radius))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(u: &dyn TestFunction, x: &[f64]) {
        let h = 1e-5;
        let d = x.len();
        let g = u.gradient(x, 0.0);
        let hess = u.hessian(x, 0.0);
        for i in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (u.value(&xp, 0.0) - u.value(&xm, 0.0)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()),
                "grad {i}: {fd} vs {}",
                g[i]
            );
            let gp = u.gradient(&xp, 0.0);
            let gm = u.gradient(&xm, 0.0);
            for j in 0..d {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                assert!(
                    (fd - hess[(j, i)]).abs() <= 1e-5 * (1.0 + hess[(j, i)].abs()),
                    "hess {j}{i}: {fd} vs {}",
                    hess[(j, i)]
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        fd_check(&RadialPower { r: 3.5 }, &[0.7, -1.2]);
        fd_check(&RadialPower { r: 2.0 }, &[1.3]);
        fd_check(&RadialExponential { alpha: 0.3, r: 2.5 }, &[0.4, 0.9]);
        fd_check(&Bump::new(vec![0.5, -0.2], 1.5, 2.0), &[0.9, 0.1]);
        fd_check(&Bump::new(vec![1.0], 2.0, 1.0), &[2.1]);
    }

    #[test]
    fn bump_vanishes_outside_support() {
        let b = Bump::new(vec![0.0], 1.0, 1.0);
        assert_eq!(b.value(&[1.0], 0.0), 0.0);
        assert_eq!(b.value(&[-3.0], 0.0), 0.0);
        assert_eq!(b.hessian(&[0.9999999], 0.0)[(0, 0)], 0.0);
        assert!(b.value(&[0.0], 0.0) > 0.36);
    }
}
