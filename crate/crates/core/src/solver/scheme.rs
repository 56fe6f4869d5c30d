//! Two-point fluxes and the split time step.
//!
//! The flux through a face with diffusion `a`, drift `B` and spacing `h` is
//! written `J = α ρ_L - β ρ_R` with `α, β >= 0`. The exponentially fitted
//! choice is `α = (a/h) Bern(-Pe)`, `β = (a/h) Bern(Pe)` with `Pe = B h / a`
//! and `Bern(z) = z / (e^z - 1)`; it is exact for the stationary profile of
//! a cell with constant coefficients. The explicit update is then a
//! nonnegative combination of old values whenever `dt Σ outflow <= 1`.

use serde::{Deserialize, Serialize};

use super::density::DensityField;
use super::grid::{Grid, Line};
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxScheme {
    #[default]
    Fitted,
    Upwind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    NoFlux,
    /// Zero density outside the grid; the outflow is reported as leakage.
    Absorbing,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reaction {
    /// Half steps `ρ ← e^{c dt/2} ρ` around the transport step.
    #[default]
    Exponential,
    /// Half steps `ρ ← (1 + c dt/2) ρ`.
    Explicit,
}

/// `z / (e^z - 1)`, continuous through `z = 0`.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-10 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Face {
    forward: f64,
    backward: f64,
}

fn face_coefficients(scheme: FluxScheme, a: f64, drift: f64, h: f64) -> Face {
    let upwind = Face {
        forward: a / h + drift.max(0.0),
        backward: a / h + (-drift).max(0.0),
    };
    match scheme {
        FluxScheme::Upwind => upwind,
        FluxScheme::Fitted if a <= 0.0 => upwind,
        FluxScheme::Fitted => {
            let pe = drift * h / a;
            Face {
                forward: a / h * bernoulli(-pe),
                backward: a / h * bernoulli(pe),
            }
        }
    }
}

/// Result of one split step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: DensityField,
    /// Mass that left through absorbing boundaries during the step.
    pub leaked: f64,
    /// Mass removed by clamping round-off negatives to zero.
    pub clamped: f64,
}

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const NEGATIVE_TOL: f64 = 1e-13;

/// Reusable face and cell coefficients for a fixed field and grid.
pub struct Stepper<'a> {
    field: &'a CoefficientField,
    grid: Grid,
    scheme: FluxScheme,
    boundary: Boundary,
    reaction: Reaction,
    lines: Vec<Vec<Line>>,
    faces: Vec<Vec<Face>>,
    potential: Vec<f64>,
    centers: Vec<Vec<f64>>,
    evaluated_at: Option<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        field: &'a CoefficientField,
        grid: &Grid,
        scheme: FluxScheme,
        boundary: Boundary,
        reaction: Reaction,
    ) -> Result<Self> {
        if field.dimension() != grid.dimension() {
            return Err(Error::Dimension {
                expected: grid.dimension(),
                got: field.dimension(),
            });
        }
        let lines = (0..grid.dimension()).map(|a| grid.lines(a)).collect();
        Ok(Self {
            field,
            grid: grid.clone(),
            scheme,
            boundary,
            reaction,
            lines,
            faces: Vec::new(),
            potential: Vec::new(),
            centers: grid.centers(),
            evaluated_at: None,
        })
    }

    fn refresh(&mut self, t: f64) -> Result<()> {
        if let Some(prev) = self.evaluated_at {
            if prev == t || self.field.is_time_independent() {
                return Ok(());
            }
        }
        let d = self.grid.dimension();
        let mut faces = Vec::with_capacity(d);
        for axis in 0..d {
            let n = self.grid.cells()[axis];
            let h = self.grid.spacing(axis);
            let mut axis_faces = Vec::with_capacity(self.lines[axis].len() * (n + 1));
            for line in &self.lines[axis] {
                let mut x = self.centers[line.base].clone();
                for j in 0..=n {
                    let boundary_face = j == 0 || j == n;
                    if boundary_face && self.boundary == Boundary::NoFlux {
                        axis_faces.push(Face::default());
                        continue;
                    }
                    x[axis] = self.grid.face_coordinate(axis, j);
                    let a = self.field.diffusion(&x, t)?;
                    let diag = a[(axis, axis)];
                    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                    for i in 0..d {
                        if i != axis && a[(axis, i)].abs() > OFF_DIAGONAL_TOL * scale {
                            return Err(Error::Unsupported(format!(
                                "off-diagonal diffusion {:e} at {x:?}; the solver handles diagonal A only",
                                a[(axis, i)]
                            )));
                        }
                    }
                    if diag < 0.0 {
                        return Err(Error::Domain(format!("negative diffusion {diag:e} at {x:?}")));
                    }
                    let drift = self.field.divergence_correction(&x, t)?[axis];
                    axis_faces.push(face_coefficients(self.scheme, diag, drift, h));
                }
            }
            faces.push(axis_faces);
        }
        let mut potential = Vec::with_capacity(self.grid.len());
        for x in &self.centers {
            potential.push(self.field.potential(x, t)?);
        }
        self.faces = faces;
        self.potential = potential;
        self.evaluated_at = Some(t);
        Ok(())
    }

    /// Largest step keeping the update a nonnegative combination of old
    /// values: `1 / max_i Σ outflow_i`, tightened by `2 / max(-c)` for the
    /// explicit reaction.
    pub fn stability_limit(&mut self, t: f64) -> Result<f64> {
        self.refresh(t)?;
        let mut outflow = vec![0.0; self.grid.len()];
        for axis in 0..self.grid.dimension() {
            let n = self.grid.cells()[axis];
            let h = self.grid.spacing(axis);
            for (li, line) in self.lines[axis].iter().enumerate() {
                let faces = &self.faces[axis][li * (n + 1)..(li + 1) * (n + 1)];
                for j in 0..n {
                    outflow[line.base + j * line.stride] += (faces[j + 1].forward + faces[j].backward) / h;
                }
            }
        }
        let max_out = outflow.iter().cloned().fold(0.0, f64::max);
        let mut limit = if max_out > 0.0 { 1.0 / max_out } else { f64::INFINITY };
        if self.reaction == Reaction::Explicit {
            let kill = self.potential.iter().map(|c| -c).fold(0.0, f64::max);
            if kill > 0.0 {
                limit = limit.min(2.0 / kill);
            }
        }
        Ok(limit)
    }

    fn react(&self, values: &mut [f64], dt: f64) {
        for (v, c) in values.iter_mut().zip(&self.potential) {
            let factor = match self.reaction {
                Reaction::Exponential => (c * dt).exp(),
                Reaction::Explicit => 1.0 + c * dt,
            };
            *v *= factor;
        }
    }

    fn transport(&self, values: &[f64], dt: f64) -> (Vec<f64>, f64) {
        let mut out = values.to_vec();
        let mut leaked = 0.0;
        let volume = self.grid.cell_volume();
        for axis in 0..self.grid.dimension() {
            let n = self.grid.cells()[axis];
            let h = self.grid.spacing(axis);
            let ratio = dt / h;
            for (li, line) in self.lines[axis].iter().enumerate() {
                let faces = &self.faces[axis][li * (n + 1)..(li + 1) * (n + 1)];
                let at = |j: usize| values[line.base + j * line.stride];
                // Flux through face j; ghost values outside the grid are zero.
                let flux = |j: usize| {
                    let left = if j == 0 { 0.0 } else { at(j - 1) };
                    let right = if j == n { 0.0 } else { at(j) };
                    faces[j].forward * left - faces[j].backward * right
                };
                let mut west = flux(0);
                leaked -= west * dt * volume / h;
                for j in 0..n {
                    let east = flux(j + 1);
                    out[line.base + j * line.stride] -= ratio * (east - west);
                    west = east;
                }
                leaked += west * dt * volume / h;
            }
        }
        (out, leaked)
    }

    /// `R(dt/2) T(dt) R(dt/2)` with the transport coefficients frozen at `t`.
    pub fn advance(&mut self, state: &DensityField, dt: f64) -> Result<StepOutcome> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
        }
        let t = state.time;
        let limit = self.stability_limit(t)?;
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Stability { dt, limit });
        }
        let mut values = state.values.clone();
        self.react(&mut values, 0.5 * dt);
        let (mut values, leaked) = self.transport(&values, dt);
        if !self.field.is_time_independent() {
            self.refresh(t + dt)?;
        }
        self.react(&mut values, 0.5 * dt);

        let peak = values.iter().cloned().fold(0.0, f64::max);
        let mut clamped = 0.0;
        for (cell, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "density",
                    x: self.grid.center(cell),
                    t: t + dt,
                });
            }
            if *v < 0.0 {
                if *v < -NEGATIVE_TOL * peak {
                    return Err(Error::NegativeDensity { cell, value: *v, peak });
                }
                clamped -= *v;
                *v = 0.0;
            }
        }
        Ok(StepOutcome {
            state: DensityField::new(self.grid.clone(), values, t + dt)?,
            leaked,
            clamped: clamped * self.grid.cell_volume(),
        })
    }

    /// `Σ c(x_i, t) ρ_i |cell|`.
    pub fn potential_integral(&mut self, state: &DensityField) -> Result<f64> {
        self.refresh(state.time)?;
        Ok(self
            .potential
            .iter()
            .zip(&state.values)
            .map(|(c, r)| c * r)
            .sum::<f64>()
            * self.grid.cell_volume())
    }
}
