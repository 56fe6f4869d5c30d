//! Conservative, positivity-preserving finite-volume solver for
//! `∂_t ρ = div(A∇ρ - Bρ) + cρ` on a truncated box, with mass accounting.

mod density;
mod diagnostics;
pub mod export;
mod grid;
mod scheme;

use serde::{Deserialize, Serialize};

pub use density::{
    project_initial_measure, truncation_radius, weighted_moment, DensityField, InitialMeasure, ProjectionReport,
};
pub use diagnostics::{mass_balance_residual, weak_identity_residual, ResidualPoint};
pub use grid::Grid;
pub use scheme::{bernoulli, Boundary, FluxScheme, Reaction, StepOutcome, Stepper};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStep {
    Fixed(f64),
    /// Fraction of the positivity limit, in `(0, 1]`.
    Cfl(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub time_step: TimeStep,
    pub scheme: FluxScheme,
    pub boundary: Boundary,
    pub reaction: Reaction,
    pub end_time: f64,
    /// Requested snapshot times; each is served by the nearest completed step.
    pub snapshots: Vec<f64>,
}

impl SolverConfig {
    pub fn new(time_step: TimeStep, end_time: f64) -> Self {
        Self {
            time_step,
            scheme: FluxScheme::default(),
            boundary: Boundary::default(),
            reaction: Reaction::default(),
            end_time,
            snapshots: Vec::new(),
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshots = times;
        self
    }

    /// `count + 1` equally spaced snapshot times on `[0, end_time]`.
    pub fn with_uniform_snapshots(self, count: usize) -> Self {
        let end = self.end_time;
        let times = (0..=count).map(|i| end * i as f64 / count as f64).collect();
        self.with_snapshots(times)
    }

    pub fn with_scheme(mut self, scheme: FluxScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_reaction(mut self, reaction: Reaction) -> Self {
        self.reaction = reaction;
        self
    }

    pub fn validate(&self, field: &CoefficientField) -> Result<()> {
        match self.time_step {
            TimeStep::Fixed(dt) if !(dt > 0.0) || !dt.is_finite() => {
                return Err(Error::Parameter(format!("time step must be positive, got {dt}")))
            }
            TimeStep::Cfl(c) if !(c > 0.0 && c <= 1.0) => {
                return Err(Error::Parameter(format!("CFL number must lie in (0, 1], got {c}")))
            }
            _ => {}
        }
        if !(self.end_time >= 0.0) || !self.end_time.is_finite() {
            return Err(Error::Parameter(format!(
                "end time must be finite and nonnegative, got {}",
                self.end_time
            )));
        }
        if self.end_time > field.horizon() {
            return Err(Error::Parameter(format!(
                "end time {} exceeds the horizon {}",
                self.end_time,
                field.horizon()
            )));
        }
        Ok(())
    }
}

/// One ledger row: `(t, mass, ∫cρ dx)` and the cumulative boundary outflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub t: f64,
    pub mass: f64,
    pub c_integral: f64,
    pub leaked: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MassLedger {
    pub entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub final_state: DensityField,
    pub snapshots: Vec<DensityField>,
    pub ledger: MassLedger,
    pub steps: usize,
    /// Largest mass removed by clamping in a single step.
    pub max_clamped: f64,
}

/// Advances `state` by one step of size `dt`.
pub fn step(state: &DensityField, field: &CoefficientField, config: &SolverConfig, dt: f64) -> Result<DensityField> {
    let mut stepper = Stepper::new(field, &state.grid, config.scheme, config.boundary, config.reaction)?;
    Ok(stepper.advance(state, dt)?.state)
}

/// Time loop from `state.time` to `config.end_time`; the last step is
/// shortened to land on the end time.
pub fn run(state: &DensityField, field: &CoefficientField, config: &SolverConfig) -> Result<RunOutput> {
    config.validate(field)?;
    if config.end_time < state.time {
        return Err(Error::Parameter(format!(
            "end time {} precedes the initial time {}",
            config.end_time, state.time
        )));
    }
    let mut stepper = Stepper::new(field, &state.grid, config.scheme, config.boundary, config.reaction)?;
    let mut pending: Vec<f64> = config.snapshots.clone();
    pending.sort_by(f64::total_cmp);
    let mut pending = pending.into_iter().peekable();

    let mut snapshots = Vec::new();
    let mut leaked = 0.0;
    let mut ledger = MassLedger::default();
    ledger.entries.push(LedgerEntry {
        t: state.time,
        mass: state.mass(),
        c_integral: stepper.potential_integral(state)?,
        leaked,
    });
    while let Some(&ts) = pending.peek() {
        if ts > state.time {
            break;
        }
        snapshots.push(state.clone());
        pending.next();
    }

    let mut current = state.clone();
    let mut steps = 0;
    let mut max_clamped: f64 = 0.0;
    let end = config.end_time;
    while current.time < end {
        let remaining = end - current.time;
        let nominal = match config.time_step {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Cfl(c) => c * stepper.stability_limit(current.time)?,
        };
        if !nominal.is_finite() {
            return Err(Error::Parameter("time step is unbounded; use a fixed step".into()));
        }
        let dt = if remaining <= nominal * (1.0 + 1e-9) {
            remaining
        } else {
            nominal
        };
        let outcome = stepper.advance(&current, dt)?;
        let mut next = outcome.state;
        steps += 1;
        if dt == remaining {
            next.time = end;
        } else if let TimeStep::Fixed(fixed) = config.time_step {
            // Count steps rather than accumulate sums so that times stay on
            // the lattice `t0 + n dt`.
            next.time = state.time + steps as f64 * fixed;
        }
        leaked += outcome.leaked;
        max_clamped = max_clamped.max(outcome.clamped);
        ledger.entries.push(LedgerEntry {
            t: next.time,
            mass: next.mass(),
            c_integral: stepper.potential_integral(&next)?,
            leaked,
        });
        while let Some(&ts) = pending.peek() {
            if ts > next.time && next.time < end {
                break;
            }
            let nearer_previous = (ts - current.time).abs() < (next.time - ts).abs();
            snapshots.push(if nearer_previous { current.clone() } else { next.clone() });
            pending.next();
        }
        current = next;
    }
    snapshots.extend(pending.map(|_| current.clone()));
    Ok(RunOutput {
        final_state: current,
        snapshots,
        ledger,
        steps,
        max_clamped,
    })
}
