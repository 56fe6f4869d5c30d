//! The four pipeline modes and their artifacts.
//!
//! Every artifact except `<mode>.metadata.json` is a pure function of the
//! spec, so repeated runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fpk_core::coefficients::{certify_dissipativity, Certification, LyapunovExpression, Region, Sampling};
use fpk_core::lyapunov::{
    bound_case_i, exponential_growth_constants, moment_envelope_exponential_split, moment_envelope_power_split,
    power_growth_constants, time_weighted_exponential_envelope, GrowthConstants,
};
use fpk_core::solver::export::{format_float, write_ledger_csv, write_snapshot_binary, write_snapshot_csv};
use fpk_core::solver::{mass_balance_residual, run, RunOutput};
use fpk_core::verify::{envelope_channel, reliable_start, ChannelPoint, FitOptions};
use fpk_core::{
    check_envelope, decay_exponent_estimate, fit_envelope_constants, CoefficientField, DecayModel, DensityField,
    EnvelopeSpec, SolverConfig, TimeStep,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{AppError, EXIT_FAIL, EXIT_PASS};
use crate::spec::{BoundKind, EnvelopeKind, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Bounds,
    Simulate,
    Verify,
    Report,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Bounds => "bounds",
            Mode::Simulate => "simulate",
            Mode::Verify => "verify",
            Mode::Report => "report",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Reserved: every pipeline is deterministic.
    pub seed: Option<u64>,
    /// Overrides `[verify] slack`.
    pub slack: Option<f64>,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            threads: None,
            seed: None,
            slack: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub mode: Mode,
    pub pass: bool,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, AppError> {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), AppError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| AppError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), AppError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    mode: &'a str,
    started_unix_seconds: f64,
    elapsed_seconds: f64,
    threads: usize,
    seed: Option<u64>,
    version: &'a str,
}

/// Runs one pipeline mode and writes its artifacts under `options.out`.
pub fn run_pipeline(spec: &ProblemSpec, mode: Mode, options: &RunOptions) -> Result<Outcome, AppError> {
    execute(mode, options, |files| match mode {
        Mode::Bounds => bounds(spec, files),
        Mode::Simulate => simulate(spec, files),
        Mode::Verify => verify(spec, options.slack, files),
        Mode::Report => report(&options.out, files),
    })
}

/// Report mode needs no spec: it reads what earlier modes left in `out`.
pub fn run_report(out: &Path) -> Result<Outcome, AppError> {
    let options = RunOptions::new(out);
    execute(Mode::Report, &options, |files| report(out, files))
}

fn execute(
    mode: Mode,
    options: &RunOptions,
    body: impl FnOnce(&mut Artifacts) -> Result<(bool, String), AppError> + Send,
) -> Result<Outcome, AppError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.unwrap_or(0))
        .build()
        .map_err(|e| AppError::Input(format!("cannot start {:?} worker threads: {e}", options.threads)))?;
    let mut files = Artifacts::new(&options.out)?;
    // A record left by an earlier failed run no longer describes this one.
    let _ = fs::remove_file(options.out.join("error.json"));
    info!("running {} into {}", mode.name(), options.out.display());
    let (pass, summary) = pool.install(|| body(&mut files))?;
    let metadata = Metadata {
        mode: mode.name(),
        started_unix_seconds: started.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64()),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        threads: pool.current_num_threads(),
        seed: options.seed,
        version: env!("CARGO_PKG_VERSION"),
    };
    files.json(&format!("{}.metadata.json", mode.name()), &metadata)?;
    Ok(Outcome {
        mode,
        pass,
        artifacts: files.written,
        summary,
    })
}

/// Writes `error.json` for a failed run.
pub fn write_error_record(out: &Path, error: &AppError) -> Result<PathBuf, AppError> {
    let mut files = Artifacts::new(out)?;
    files.json("error.json", &error.record())?;
    Ok(files.written.remove(0))
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Lattice points of the ball of radius `radius`, origin excluded.
fn ball_lattice(d: usize, radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| -radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64)
        .collect();
    let mut points = vec![Vec::new()];
    for _ in 0..d {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    points.retain(|p| {
        let n = norm(p);
        n > 0.0 && n <= radius * (1.0 + 1e-12)
    });
    points
}

fn sample_times(t_max: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
    }
}

/// `d ln value / d ln t` by central differences, one-sided at the ends.
fn log_slopes(times: &[f64], ln_values: &[f64]) -> Vec<f64> {
    let n = times.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (ln_values[b] - ln_values[a]) / (times[b].ln() - times[a].ln())
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct BoundRecord {
    bound: BoundKind,
    certified: bool,
    /// Constant of the Gronwall bound, or `(C, c)` of the growth inequality.
    constants: serde_json::Value,
    initial_moment: Option<f64>,
    certification: Option<Certification>,
    note: Option<String>,
}

struct BoundSeries {
    record: BoundRecord,
    rows: Vec<(f64, f64, f64)>,
}

struct BoundContext<'a> {
    spec: &'a ProblemSpec,
    field: CoefficientField,
    initial: DensityField,
    region: Region,
    sampling: Sampling,
    times: Vec<f64>,
}

impl BoundContext<'_> {
    fn sup_over_region(&self, f: impl Fn(&[f64], f64) -> Result<f64, fpk_core::Error> + Sync) -> Result<f64, AppError> {
        let points = ball_lattice(self.spec.dimension, self.region.radius, self.sampling.per_axis);
        let times = sample_times(self.region.time_interval.1, self.sampling.time_samples);
        let values: Vec<f64> = points
            .par_iter()
            .map(|p| {
                times
                    .iter()
                    .map(|&t| f(p, t))
                    .try_fold(f64::NEG_INFINITY, |m, v| v.map(|v| m.max(v)))
            })
            .collect::<Result<_, _>>()?;
        Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    fn moment(&self, weight: impl Fn(&[f64]) -> f64) -> Result<f64, AppError> {
        if let Some(m) = self.spec.bounds.initial_moment {
            return Ok(m);
        }
        Ok(self.initial.weighted_moment(&weight)?)
    }

    fn series(
        &self,
        f: impl Fn(f64) -> Result<(f64, f64), fpk_core::Error> + Sync,
    ) -> Result<Vec<(f64, f64, f64)>, AppError> {
        Ok(self
            .times
            .par_iter()
            .map(|&t| f(t).map(|(v, l)| (t, v, l)))
            .collect::<Result<Vec<_>, _>>()?)
    }

    fn certify(&self, expr: LyapunovExpression, k: f64) -> Result<Certification, AppError> {
        Ok(certify_dissipativity(
            expr,
            &self.field,
            k,
            &self.region,
            self.sampling,
        )?)
    }
}

fn failed(bound: BoundKind, certification: Certification) -> BoundSeries {
    BoundSeries {
        record: BoundRecord {
            bound,
            certified: false,
            constants: serde_json::Value::Null,
            initial_moment: None,
            certification: Some(certification),
            note: Some("dissipativity was not certified on the sampled region".into()),
        },
        rows: Vec::new(),
    }
}

fn growth_json(g: GrowthConstants) -> serde_json::Value {
    serde_json::json!({ "additive": g.additive, "rate": g.rate })
}

fn one_bound(ctx: &BoundContext<'_>, kind: BoundKind) -> Result<BoundSeries, AppError> {
    let p = &ctx.spec.lyapunov;
    let missing = |name: &str| AppError::Input(format!("[lyapunov] {name} is required by `{}`", kind.name()));
    let r = p.r.ok_or_else(|| missing("r"))?;
    let delta = p.delta;
    match kind {
        BoundKind::PowerGronwall => {
            // L|x|^r = |x|^{r-2} LHS <= C (1 + |x|^r).
            let c = ctx
                .sup_over_region(|x, t| {
                    let n = norm(x);
                    let lv = n.powf(r - 2.0) * ctx.field.lyapunov_drift_power(r, x, t)?;
                    Ok(lv.max(0.0) / (1.0 + n.powf(r)))
                })?
                .max(0.0);
            let m = ctx.moment(|x| norm(x).powf(r))?;
            let rows = ctx.series(|t| {
                let v = bound_case_i(c, t, m)?;
                Ok((v, v.ln()))
            })?;
            Ok(BoundSeries {
                record: BoundRecord {
                    bound: kind,
                    certified: true,
                    constants: serde_json::json!({ "c": c }),
                    initial_moment: Some(m),
                    certification: None,
                    note: Some("constant is a supremum over the sampled region".into()),
                },
                rows,
            })
        }
        BoundKind::ExponentialGronwall => {
            let alpha = p.alpha.ok_or_else(|| missing("alpha"))?;
            // L e^{α|x|^r} = e^{α|x|^r} [bracket] <= C (1 + e^{α|x|^r}).
            let c = ctx
                .sup_over_region(|x, t| Ok(ctx.field.lyapunov_drift_exponential(alpha, r, x, t)?.max(0.0)))?
                .max(0.0);
            let m = ctx.moment(|x| (alpha * norm(x).powf(r)).exp())?;
            let rows = ctx.series(|t| {
                let v = bound_case_i(c, t, m)?;
                Ok((v, v.ln()))
            })?;
            Ok(BoundSeries {
                record: BoundRecord {
                    bound: kind,
                    certified: true,
                    constants: serde_json::json!({ "c": c }),
                    initial_moment: Some(m),
                    certification: None,
                    note: Some("constant is a supremum over the sampled region".into()),
                },
                rows,
            })
        }
        BoundKind::PowerMoment => {
            let k = p.k.ok_or_else(|| missing("k"))?;
            let cert = ctx.certify(LyapunovExpression::Power { r }, k)?;
            let Some(c) = cert.certificate().cloned() else {
                return Ok(failed(kind, cert));
            };
            let g = power_growth_constants(r, k, c.c1, c.c2)?;
            let rows = ctx.series(|t| {
                let e = moment_envelope_power_split(r, k, g, delta, t)?;
                Ok((e.value, e.ln_value))
            })?;
            Ok(BoundSeries {
                record: BoundRecord {
                    bound: kind,
                    certified: true,
                    constants: growth_json(g),
                    initial_moment: None,
                    certification: Some(cert),
                    note: None,
                },
                rows,
            })
        }
        BoundKind::ExponentialMoment => {
            let k = p.k.ok_or_else(|| missing("k"))?;
            let alpha = p.alpha.ok_or_else(|| missing("alpha"))?;
            let cert = ctx.certify(LyapunovExpression::Exponential { alpha, r }, k)?;
            let Some(c) = cert.certificate().cloned() else {
                return Ok(failed(kind, cert));
            };
            let g = exponential_growth_constants(alpha, r, k, c.c1, c.c2)?;
            let rows = ctx.series(|t| {
                let e = moment_envelope_exponential_split(r, k, alpha, g, delta, t)?;
                Ok((e.value, e.ln_value))
            })?;
            Ok(BoundSeries {
                record: BoundRecord {
                    bound: kind,
                    certified: true,
                    constants: growth_json(g),
                    initial_moment: None,
                    certification: Some(cert),
                    note: None,
                },
                rows,
            })
        }
        BoundKind::TimeWeighted => {
            let k = p.k.ok_or_else(|| missing("k"))?;
            let alpha = p.alpha.ok_or_else(|| missing("alpha"))?;
            let beta = p.beta.ok_or_else(|| missing("beta"))?;
            let cert = ctx.certify(LyapunovExpression::ExponentialWithGradient { alpha, r }, k)?;
            let Some(c) = cert.certificate().cloned() else {
                return Ok(failed(kind, cert));
            };
            let g = power_growth_constants(r, k, c.c1, c.c2)?;
            let c3 = g.merged();
            let rows = ctx.series(|t| {
                let e = time_weighted_exponential_envelope(r, k, alpha, beta, c3, t)?;
                Ok((e.value, e.ln_value))
            })?;
            Ok(BoundSeries {
                record: BoundRecord {
                    bound: kind,
                    certified: true,
                    constants: serde_json::json!({ "c3": c3 }),
                    initial_moment: None,
                    certification: Some(cert),
                    note: None,
                },
                rows,
            })
        }
    }
}

fn bounds(spec: &ProblemSpec, files: &mut Artifacts) -> Result<(bool, String), AppError> {
    if spec.bounds.select.is_empty() {
        return Err(AppError::Input("[bounds] select names no bound".into()));
    }
    let grid = spec.grid()?;
    spec.probe(&grid)?;
    let field = spec.field();
    let (initial, _) = spec.initial_state(&grid)?;
    let b = &spec.bounds;
    let radius = b
        .region_radius
        .unwrap_or_else(|| grid.extents().iter().copied().fold(f64::INFINITY, f64::min));
    let per_axis = b.samples.unwrap_or(if spec.dimension == 1 { 401 } else { 41 });
    let ctx = BoundContext {
        spec,
        field,
        initial,
        region: Region::new(vec![0.0; spec.dimension], radius, (0.0, b.t_max))?,
        sampling: Sampling::new(per_axis, b.time_samples),
        times: log_spaced(b.t_min, b.t_max, b.points),
    };
    let mut csv = String::from("bound,t,value,ln_value,slope\n");
    let mut records = Vec::new();
    let mut all_certified = true;
    let mut summary = String::new();
    for &kind in &b.select {
        let series = one_bound(&ctx, kind)?;
        let times: Vec<f64> = series.rows.iter().map(|r| r.0).collect();
        let logs: Vec<f64> = series.rows.iter().map(|r| r.2).collect();
        let slopes = log_slopes(&times, &logs);
        for ((t, v, l), s) in series.rows.iter().zip(&slopes) {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                kind.name(),
                format_float(*t),
                format_float(*v),
                format_float(*l),
                format_float(*s)
            );
        }
        all_certified &= series.record.certified;
        let _ = writeln!(
            summary,
            "{}: {}",
            kind.name(),
            if series.record.certified {
                "certified"
            } else {
                "NOT certified"
            }
        );
        records.push(series.record);
    }
    files.write("bounds.csv", csv.as_bytes())?;
    files.json(
        "bounds.json",
        &serde_json::json!({ "config_digest": spec.digest(), "bounds": records }),
    )?;
    Ok((all_certified, summary))
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    config_digest: String,
    config: &'a SolverConfig,
    projection: fpk_core::solver::ProjectionReport,
    steps: usize,
    max_clamped: f64,
    snapshot_times: Vec<f64>,
    final_mass: f64,
    max_abs_mass_residual: f64,
}

fn solve(
    spec: &ProblemSpec,
    config: &SolverConfig,
) -> Result<(RunOutput, fpk_core::solver::ProjectionReport), AppError> {
    let grid = spec.grid()?;
    spec.probe(&grid)?;
    let field = spec.field();
    let (state, projection) = spec.initial_state(&grid)?;
    if projection.truncation_warning {
        warn!(
            "initial measure is truncated by the grid (captured fraction {})",
            projection.captured_fraction
        );
    }
    Ok((run(&state, &field, config)?, projection))
}

fn simulate(spec: &ProblemSpec, files: &mut Artifacts) -> Result<(bool, String), AppError> {
    let config = spec.solver_config();
    let (out, projection) = solve(spec, &config)?;
    for (i, snap) in out.snapshots.iter().enumerate() {
        let mut csv = Vec::new();
        write_snapshot_csv(snap, &mut csv).map_err(|e| AppError::io("snapshot", e))?;
        files.write(&format!("snapshots/snapshot_{i:04}.csv"), &csv)?;
        let mut bin = Vec::new();
        write_snapshot_binary(snap, &mut bin).map_err(|e| AppError::io("snapshot", e))?;
        files.write(&format!("snapshots/snapshot_{i:04}.bin"), &bin)?;
    }
    let mut ledger = Vec::new();
    write_ledger_csv(&out.ledger, &mut ledger).map_err(|e| AppError::io("ledger", e))?;
    files.write("ledger.csv", &ledger)?;
    let residual = mass_balance_residual(&out.ledger)
        .iter()
        .map(|r| r.residual.abs())
        .fold(0.0, f64::max);
    let summary = SimulationSummary {
        config_digest: spec.digest(),
        config: &config,
        projection,
        steps: out.steps,
        max_clamped: out.max_clamped,
        snapshot_times: out.snapshots.iter().map(|s| s.time).collect(),
        final_mass: out.final_state.mass(),
        max_abs_mass_residual: residual,
    };
    files.json("simulation.json", &summary)?;
    Ok((
        true,
        format!(
            "{} steps, {} snapshots, final mass {}, max |mass residual| {:e}\n",
            out.steps,
            out.snapshots.len(),
            format_float(summary.final_mass),
            residual
        ),
    ))
}

/// Same configuration with the step halved.
fn refined(config: &SolverConfig) -> SolverConfig {
    let mut fine = config.clone();
    fine.time_step = match config.time_step {
        TimeStep::Fixed(dt) => TimeStep::Fixed(0.5 * dt),
        TimeStep::Cfl(c) => TimeStep::Cfl(0.5 * c),
    };
    fine
}

/// How the start of the verification window was chosen.
#[derive(Debug, Clone, Serialize)]
pub struct WindowChoice {
    pub t_lo: f64,
    pub t_hi: f64,
    /// Taken from the input file when it fixes one.
    pub fixed: Option<f64>,
    /// Earliest time after which the half-step run agrees.
    pub step_start: Option<f64>,
    /// Earliest time after which the weighted maximum stays inside the horizon.
    pub horizon_start: Option<f64>,
}

#[derive(Serialize)]
struct VerifyDetails {
    window: WindowChoice,
    fit_snapshots: usize,
    check_snapshots: usize,
    regression_error: Option<String>,
}

fn choose_window(
    spec: &ProblemSpec,
    coarse: &[ChannelPoint],
    fine: Option<&[ChannelPoint]>,
    extent: f64,
) -> Result<WindowChoice, AppError> {
    let v = &spec.verify;
    let t_hi = v.t_max.unwrap_or(spec.solver.end_time);
    if let Some(t) = v.t_min {
        return Ok(WindowChoice {
            t_lo: t,
            t_hi,
            fixed: Some(t),
            step_start: None,
            horizon_start: None,
        });
    }
    let step_start = match fine {
        Some(fine) => {
            let paired: Vec<(f64, f64)> = coarse
                .iter()
                .filter_map(|c| {
                    fine.iter()
                        .find(|f| (f.t - c.t).abs() <= 1e-9 * c.t.max(1.0))
                        .map(|f| (c.t, (c.max_log - f.max_log).exp()))
                })
                .collect();
            let ones: Vec<(f64, f64)> = paired.iter().map(|&(t, _)| (t, 1.0)).collect();
            Some(reliable_start(&paired, &ones, v.step_tolerance).ok_or_else(|| {
                AppError::Core(fpk_core::Error::Precondition(
                    "the half-step run disagrees at the last snapshot; refine the time step".into(),
                ))
            })?)
        }
        None => None,
    };
    let limit = v.horizon_fraction * extent;
    let mut horizon_start = None;
    for p in coarse.iter().rev() {
        if norm(&p.argmax) <= limit {
            horizon_start = Some(p.t);
        } else {
            break;
        }
    }
    let horizon_start = horizon_start.ok_or_else(|| {
        AppError::Core(fpk_core::Error::Precondition(
            "the weighted maximum reaches the grid boundary at the last snapshot; enlarge the grid".into(),
        ))
    })?;
    let t_lo = step_start.unwrap_or(0.0).max(horizon_start);
    Ok(WindowChoice {
        t_lo,
        t_hi,
        fixed: None,
        step_start,
        horizon_start: Some(horizon_start),
    })
}

fn verify(spec: &ProblemSpec, slack_override: Option<f64>, files: &mut Artifacts) -> Result<(bool, String), AppError> {
    let v = &spec.verify;
    let rate = v
        .rate
        .ok_or_else(|| AppError::Input("[verify] rate is required".into()))?;
    let envelope = match v.envelope {
        EnvelopeKind::Blowup => EnvelopeSpec::blowup(rate, v.power, v.q)?,
        EnvelopeKind::TimeWeighted => EnvelopeSpec::time_weighted(
            rate,
            v.power,
            v.beta
                .ok_or_else(|| AppError::Input("[verify] beta is required".into()))?,
        )?,
    };
    let slack = slack_override.unwrap_or(v.slack);
    let options = FitOptions {
        core_fraction: v.core_fraction,
        boundary_cells: v.boundary_cells,
        ..FitOptions::default()
    };
    let config = spec.solver_config();
    let (coarse, fine) = if v.step_check && v.t_min.is_none() {
        let fine_config = refined(&config);
        let (c, f) = rayon::join(|| solve(spec, &config), || solve(spec, &fine_config));
        (c?.0, Some(f?.0))
    } else {
        (solve(spec, &config)?.0, None)
    };
    let coarse_channel = envelope_channel(&coarse.snapshots, &envelope, &options)?;
    let fine_channel = fine
        .as_ref()
        .map(|f| envelope_channel(&f.snapshots, &envelope, &options))
        .transpose()?;
    let extent = spec.grid.extents.iter().copied().fold(f64::INFINITY, f64::min);
    let window = choose_window(spec, &coarse_channel, fine_channel.as_deref(), extent)?;
    info!("verification window [{}, {}]", window.t_lo, window.t_hi);

    let tol = 1e-9 * window.t_hi.max(1.0);
    let inside: Vec<DensityField> = coarse
        .snapshots
        .iter()
        .filter(|s| s.time > 0.0 && s.time >= window.t_lo - tol && s.time <= window.t_hi + tol)
        .cloned()
        .collect();
    let fit_set: Vec<DensityField> = if v.holdout && inside.len() >= 6 {
        inside.iter().step_by(2).cloned().collect()
    } else {
        inside.clone()
    };
    let fitted = fit_envelope_constants(&fit_set, &envelope, &options)?;
    let mut report = check_envelope(&inside, &fitted, slack, &options)?;
    let constants = fitted.constants.expect("fitted");

    let in_window = |t: f64| t >= window.t_lo - tol && t <= window.t_hi + tol;
    let series: Vec<(f64, f64)> = coarse_channel
        .iter()
        .filter(|p| in_window(p.t))
        .map(|p| {
            let excess = p.max_log - constants.ln_scale;
            (
                p.t,
                if v.envelope == EnvelopeKind::Blowup {
                    excess
                } else {
                    excess.exp()
                },
            )
        })
        .collect();
    let regression = decay_exponent_estimate(
        &series,
        DecayModel::Power,
        (window.t_lo, v.regression_span * window.t_lo),
    );
    let regression_error = match regression {
        Ok(estimate) => {
            report.regressions.push(estimate);
            None
        }
        Err(e) => {
            warn!("exponent regression skipped: {e}");
            Some(e.to_string())
        }
    };
    report.config_digest = Some(spec.digest());
    files.json("verification.json", &report)?;

    let mut csv = String::from("t,max_log,max_log_half_step,envelope_log_at_origin,in_window\n");
    for p in &coarse_channel {
        let half = fine_channel
            .as_ref()
            .and_then(|f| f.iter().find(|q| (q.t - p.t).abs() <= 1e-9 * p.t.max(1.0)))
            .map_or(String::new(), |q| format_float(q.max_log));
        let env = fitted.ln_value(&vec![0.0; spec.dimension], p.t)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            format_float(p.t),
            format_float(p.max_log),
            half,
            format_float(env),
            in_window(p.t)
        );
    }
    files.write("envelope_series.csv", csv.as_bytes())?;
    let details = VerifyDetails {
        window: window.clone(),
        fit_snapshots: fit_set.len(),
        check_snapshots: inside.len(),
        regression_error,
    };
    files.json("verify_details.json", &details)?;
    let summary = verify_summary(&report, &details);
    files.write("summary.txt", summary.as_bytes())?;
    Ok((report.pass, summary))
}

fn verify_summary(report: &fpk_core::VerificationReport, details: &VerifyDetails) -> String {
    let mut s = String::new();
    let c = report.constants.expect("fitted");
    let _ = writeln!(s, "verdict: {}", if report.pass { "PASS" } else { "FAIL" });
    let _ = writeln!(
        s,
        "max density/envelope ratio: {} (allowed {})",
        report.max_ratio,
        1.0 + report.slack
    );
    let _ = writeln!(s, "window: [{}, {}]", details.window.t_lo, details.window.t_hi);
    let _ = writeln!(
        s,
        "snapshots: {} fitted, {} checked",
        details.fit_snapshots, details.check_snapshots
    );
    let _ = writeln!(s, "ln C4 = {}, temporal constant = {}", c.ln_scale, c.temporal);
    if let Some(w) = &report.witness {
        let _ = writeln!(s, "worst point: t = {}, x = {:?}, density = {:e}", w.t, w.x, w.density);
    }
    for r in &report.regressions {
        let _ = writeln!(
            s,
            "exponent estimate: {} ± {} on [{}, {}]",
            r.estimate, r.stderr, r.window.0, r.window.1
        );
    }
    if let Some(e) = &details.regression_error {
        let _ = writeln!(s, "exponent estimate unavailable: {e}");
    }
    s
}

fn read_optional(path: &Path) -> Result<Option<String>, AppError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(AppError::io(path, e)),
    }
}

/// Columns `t, ln_value` per bound from `bounds.csv`.
fn bounds_plot(csv: &str) -> String {
    let mut out = String::from("bound,t,ln_value\n");
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() == 5 {
            let _ = writeln!(out, "{},{},{}", cols[0], cols[1], cols[3]);
        }
    }
    out
}

fn report(dir: &Path, files: &mut Artifacts) -> Result<(bool, String), AppError> {
    let bounds_csv = read_optional(&dir.join("bounds.csv"))?;
    let bounds_json = read_optional(&dir.join("bounds.json"))?;
    let ledger = read_optional(&dir.join("ledger.csv"))?;
    let simulation = read_optional(&dir.join("simulation.json"))?;
    let verification = read_optional(&dir.join("verification.json"))?;
    let series = read_optional(&dir.join("envelope_series.csv"))?;
    let summary = read_optional(&dir.join("summary.txt"))?;
    if bounds_csv.is_none() && ledger.is_none() && verification.is_none() {
        return Err(AppError::Input(format!(
            "{} holds no bounds, simulation or verification outputs to report on",
            dir.display()
        )));
    }
    let mut doc = String::from("# Run report\n\n");
    let mut pass = true;
    if let Some(csv) = &bounds_csv {
        files.write("plot_bounds.csv", bounds_plot(csv).as_bytes())?;
        let _ = writeln!(
            doc,
            "## Analytic bounds\n\nPlot data: `plot_bounds.csv` (bound, t, ln value).\n"
        );
        if let Some(json) = &bounds_json {
            let parsed: serde_json::Value =
                serde_json::from_str(json).map_err(|e| AppError::Input(format!("bounds.json: {e}")))?;
            for b in parsed["bounds"].as_array().into_iter().flatten() {
                let certified = b["certified"].as_bool().unwrap_or(false);
                pass &= certified;
                let _ = writeln!(
                    doc,
                    "- `{}`: {}, constants {}",
                    b["bound"].as_str().unwrap_or("?"),
                    if certified { "certified" } else { "not certified" },
                    b["constants"]
                );
            }
            doc.push('\n');
        }
    }
    if let Some(ledger) = &ledger {
        files.write("plot_mass.csv", ledger.as_bytes())?;
        let _ = writeln!(
            doc,
            "## Simulation\n\nPlot data: `plot_mass.csv` (t, mass, c integral, residual).\n"
        );
        if let Some(json) = &simulation {
            let parsed: serde_json::Value =
                serde_json::from_str(json).map_err(|e| AppError::Input(format!("simulation.json: {e}")))?;
            let _ = writeln!(
                doc,
                "- steps: {}\n- snapshots: {}\n- final mass: {}\n- max |mass residual|: {}\n",
                parsed["steps"],
                parsed["snapshot_times"].as_array().map_or(0, Vec::len),
                parsed["final_mass"],
                parsed["max_abs_mass_residual"]
            );
        }
    }
    if let Some(json) = &verification {
        let parsed: serde_json::Value =
            serde_json::from_str(json).map_err(|e| AppError::Input(format!("verification.json: {e}")))?;
        pass &= parsed["pass"].as_bool().unwrap_or(false);
        let _ = writeln!(doc, "## Envelope verification\n");
        if let Some(series) = &series {
            files.write("plot_envelope.csv", series.as_bytes())?;
            let _ = writeln!(
                doc,
                "Plot data: `plot_envelope.csv` (t, weighted log maximum, envelope).\n"
            );
        }
        if let Some(summary) = &summary {
            for line in summary.lines() {
                let _ = writeln!(doc, "- {line}");
            }
            doc.push('\n');
        }
    }
    files.write("report.md", doc.as_bytes())?;
    Ok((pass, doc))
}
