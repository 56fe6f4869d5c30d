//! Problem-specification documents.
//!
//! A document is TOML restricted to flat tables of scalar or array values.
//! Parsing is not fail-fast: every syntax error and constraint violation is
//! collected with its line and column. A `preset` supplies defaults that the
//! document's own keys override.

use std::collections::BTreeMap;
use std::fmt;

use fpk_core::solver::{Boundary, FluxScheme, Reaction};
use fpk_core::TimeStep;
use serde::Serialize;
use toml::de::{DeTable, DeValue};

use crate::expr::{Compiled, Context};
use crate::presets;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecError {
    /// 1-based; 0 marks a value that came from a preset.
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "preset value: {}", self.message)
        } else {
            write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
        }
    }
}

/// All problems found in a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecErrors(pub Vec<SpecError>);

impl fmt::Display for SpecErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SpecErrors {}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Str(String),
    Num(f64),
    Bool(bool),
    List(Vec<Value>),
}

impl Value {
    fn describe(&self) -> &'static str {
        match self {
            Value::Str(_) => "a string",
            Value::Num(_) => "a number",
            Value::Bool(_) => "a boolean",
            Value::List(_) => "an array",
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: Value,
    line: usize,
    /// Column of the first character of the value.
    column: usize,
    /// Column of the first character inside a string value.
    text_column: usize,
}

#[derive(Debug, Clone, Default)]
struct Document {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

struct LineIndex<'a> {
    src: &'a str,
}

impl LineIndex<'_> {
    fn locate(&self, byte: usize) -> (usize, usize) {
        let byte = byte.min(self.src.len());
        let before = &self.src[..byte];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |p| p + 1);
        (line, self.src[line_start..byte].chars().count() + 1)
    }
}

fn convert(value: &DeValue<'_>) -> Option<Value> {
    Some(match value {
        DeValue::String(s) => Value::Str(s.to_string()),
        DeValue::Integer(i) => Value::Num(i64::from_str_radix(i.as_str(), i.radix()).ok()? as f64),
        DeValue::Float(f) => Value::Num(f.as_str().replace('_', "").parse().ok()?),
        DeValue::Boolean(b) => Value::Bool(*b),
        DeValue::Array(items) => Value::List(items.iter().map(|v| convert(v.get_ref())).collect::<Option<_>>()?),
        DeValue::Datetime(_) | DeValue::Table(_) => return None,
    })
}

fn read_document(src: &str, errors: &mut Vec<SpecError>) -> Document {
    let index = LineIndex { src };
    let (table, syntax) = DeTable::parse_recoverable(src);
    for e in &syntax {
        let (line, column) = e.span().map_or((1, 1), |s| index.locate(s.start));
        errors.push(SpecError {
            line,
            column,
            message: e.message().trim().to_string(),
        });
    }
    let mut doc = Document::default();
    for (name, section) in table.get_ref().iter() {
        let at = index.locate(name.span().start);
        let DeValue::Table(entries) = section.get_ref() else {
            errors.push(SpecError {
                line: at.0,
                column: at.1,
                message: format!(
                    "`{}` must be a [section]; top-level keys are not allowed",
                    name.get_ref()
                ),
            });
            continue;
        };
        let out = doc.sections.entry(name.get_ref().to_string()).or_default();
        for (key, value) in entries.iter() {
            let span = value.span();
            let (line, column) = index.locate(span.start);
            let Some(converted) = convert(value.get_ref()) else {
                errors.push(SpecError {
                    line,
                    column,
                    message: format!("`{}` must be a string, number, boolean or flat array", key.get_ref()),
                });
                continue;
            };
            let text_column = if matches!(converted, Value::Str(_)) {
                column + 1
            } else {
                column
            };
            out.insert(
                key.get_ref().to_string(),
                Entry {
                    value: converted,
                    line,
                    column,
                    text_column,
                },
            );
        }
    }
    doc
}

/// Bound machinery selectable in `[bounds] select`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `∫|x|^r dμ_t <= e^{Ct}(1 + ∫|x|^r dν)`.
    PowerGronwall,
    /// `∫exp(α|x|^r) dμ_t <= e^{Ct}(1 + ∫exp(α|x|^r) dν)`.
    ExponentialGronwall,
    /// `∫|x|^r dμ_t <= γ t^{-r/(k-2)}`.
    PowerMoment,
    /// `∫exp(α|x|^r) dμ_t <= γ1 exp(γ2 t^{-r/(k-r)})`.
    ExponentialMoment,
    /// `∫exp(α t^β |x|^r) dμ_t <= γ1 exp(γ2 (t^{β-r/(k-2)} + t^{β+1}))`.
    TimeWeighted,
}

impl BoundKind {
    pub const ALL: [BoundKind; 5] = [
        BoundKind::PowerGronwall,
        BoundKind::ExponentialGronwall,
        BoundKind::PowerMoment,
        BoundKind::ExponentialMoment,
        BoundKind::TimeWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::PowerGronwall => "power_gronwall",
            BoundKind::ExponentialGronwall => "exponential_gronwall",
            BoundKind::PowerMoment => "power_moment",
            BoundKind::ExponentialMoment => "exponential_moment",
            BoundKind::TimeWeighted => "time_weighted",
        }
    }

    fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionSpec {
    /// `a(x,t) I`.
    Isotropic { a: Compiled },
    /// Full symmetric matrix; unset lower entries mirror the upper ones.
    Matrix { entries: Vec<Vec<Compiled>> },
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientSpec {
    pub diffusion: DiffusionSpec,
    pub drift: Vec<Compiled>,
    pub potential: Compiled,
    /// Closed-form row divergence of the diffusion matrix, if given.
    pub divergence: Option<Vec<Compiled>>,
    pub uses_time: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LyapunovParams {
    pub r: Option<f64>,
    pub k: Option<f64>,
    pub alpha: Option<f64>,
    pub delta: f64,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsSpec {
    pub select: Vec<BoundKind>,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// Overrides the moment computed from the projected initial measure.
    pub initial_moment: Option<f64>,
    /// Radius of the certification ball; defaults to the grid extent.
    pub region_radius: Option<f64>,
    pub samples: Option<usize>,
    pub time_samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSpec {
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnapshotPlan {
    /// `count + 1` equally spaced times on `[0, end]`.
    Uniform {
        count: usize,
    },
    /// `count` log-spaced times on `[start, stop]`.
    Log {
        start: f64,
        stop: f64,
        count: usize,
    },
    List {
        times: Vec<f64>,
    },
}

impl SnapshotPlan {
    pub fn times(&self, end: f64) -> Vec<f64> {
        match self {
            SnapshotPlan::Uniform { count } => (0..=*count).map(|i| end * i as f64 / *count as f64).collect(),
            SnapshotPlan::Log { start, stop, count } => {
                let (a, b) = (start.ln(), stop.ln());
                (0..*count)
                    .map(|i| {
                        if i == 0 {
                            *start
                        } else if i + 1 == *count {
                            *stop
                        } else {
                            (a + (b - a) * i as f64 / (*count - 1) as f64).exp()
                        }
                    })
                    .collect()
            }
            SnapshotPlan::List { times } => times.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSpec {
    pub time_step: TimeStep,
    pub end_time: f64,
    pub snapshots: SnapshotPlan,
    pub scheme: FluxScheme,
    pub boundary: Boundary,
    pub reaction: Reaction,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Gaussian {
        mean: Vec<f64>,
        std: f64,
        mass: f64,
    },
    PointMass {
        center: Vec<f64>,
        width: Option<f64>,
        mass: f64,
    },
    /// Unnormalized density profile, rescaled to `mass` on the grid.
    Density {
        density: Compiled,
        mass: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    Blowup,
    TimeWeighted,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySpec {
    pub envelope: EnvelopeKind,
    pub rate: Option<f64>,
    pub power: f64,
    pub q: f64,
    pub beta: Option<f64>,
    pub slack: f64,
    /// Fixed start of the verification window; chosen automatically if unset.
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    /// Rerun with half the step and drop the early snapshots where the two disagree.
    pub step_check: bool,
    pub step_tolerance: f64,
    /// Drop early snapshots whose weighted maximum lies beyond this fraction of the extent.
    pub horizon_fraction: f64,
    pub core_fraction: f64,
    pub boundary_cells: usize,
    /// The exponent regression uses `[t_lo, span t_lo]`.
    pub regression_span: f64,
    /// Fit on every other snapshot and check on all of them.
    pub holdout: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemSpec {
    pub preset: Option<String>,
    pub dimension: usize,
    pub split: Option<(usize, usize)>,
    pub coefficients: CoefficientSpec,
    pub lyapunov: LyapunovParams,
    pub bounds: BoundsSpec,
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub initial: InitialSpec,
    pub verify: VerifySpec,
    pub output: Option<String>,
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("problem", &["preset", "dimension", "split"]),
    ("coefficients", &["a", "c"]),
    ("lyapunov", &["r", "k", "alpha", "delta", "beta"]),
    (
        "bounds",
        &[
            "select",
            "t_min",
            "t_max",
            "points",
            "initial_moment",
            "region_radius",
            "samples",
            "time_samples",
        ],
    ),
    ("grid", &["extent", "cells"]),
    (
        "solver",
        &["time_step", "end_time", "snapshots", "scheme", "boundary", "reaction"],
    ),
    ("initial", &["kind", "mean", "std", "width", "mass", "density"]),
    (
        "verify",
        &[
            "envelope",
            "rate",
            "power",
            "q",
            "beta",
            "slack",
            "t_min",
            "t_max",
            "step_check",
            "step_tolerance",
            "horizon_fraction",
            "core_fraction",
            "boundary_cells",
            "regression_span",
            "holdout",
        ],
    ),
    ("output", &["directory"]),
];

/// `aIJ`, `bI`, `divI` with one-digit indices.
fn indexed_key(key: &str) -> Option<(&'static str, Vec<usize>)> {
    let digits = |s: &str| {
        s.chars()
            .map(|c| c.to_digit(10).map(|d| d as usize))
            .collect::<Option<Vec<_>>>()
    };
    for prefix in ["div", "a", "b"] {
        if let Some(rest) = key.strip_prefix(prefix) {
            let idx = digits(rest)?;
            let expected = if prefix == "a" { 2 } else { 1 };
            if idx.len() == expected && idx.iter().all(|&i| i >= 1) {
                let name = match prefix {
                    "div" => "div",
                    "a" => "a",
                    _ => "b",
                };
                return Some((name, idx));
            }
        }
    }
    None
}

struct Reader<'a> {
    doc: &'a Document,
    errors: Vec<SpecError>,
}

impl<'a> Reader<'a> {
    fn entry(&self, section: &str, key: &str) -> Option<&'a Entry> {
        self.doc.sections.get(section)?.get(key)
    }

    fn error_at(&mut self, entry: Option<&Entry>, message: String) {
        let (line, column) = entry.map_or((1, 1), |e| (e.line, e.column));
        self.errors.push(SpecError { line, column, message });
    }

    fn number(&mut self, section: &str, key: &str) -> Option<f64> {
        let e = self.entry(section, key)?;
        match &e.value {
            Value::Num(v) if v.is_finite() => Some(*v),
            other => {
                let message = format!("[{section}] {key} must be a finite number, got {}", other.describe());
                self.error_at(Some(e), message);
                None
            }
        }
    }

    fn count(&mut self, section: &str, key: &str) -> Option<usize> {
        let e = self.entry(section, key)?;
        match e.value {
            Value::Num(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e12 => Some(v as usize),
            _ => {
                self.error_at(Some(e), format!("[{section}] {key} must be a nonnegative integer"));
                None
            }
        }
    }

    fn boolean(&mut self, section: &str, key: &str) -> Option<bool> {
        let e = self.entry(section, key)?;
        match e.value {
            Value::Bool(b) => Some(b),
            _ => {
                self.error_at(Some(e), format!("[{section}] {key} must be true or false"));
                None
            }
        }
    }

    fn text(&mut self, section: &str, key: &str) -> Option<&'a str> {
        let e = self.entry(section, key)?;
        match &e.value {
            Value::Str(s) => Some(s.as_str()),
            other => {
                let message = format!("[{section}] {key} must be a string, got {}", other.describe());
                self.error_at(Some(e), message);
                None
            }
        }
    }

    /// A number or an array of numbers.
    fn numbers(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let e = self.entry(section, key)?;
        let parsed = match &e.value {
            Value::Num(v) => Some(vec![*v]),
            Value::List(items) => items
                .iter()
                .map(|v| match v {
                    Value::Num(x) if x.is_finite() => Some(*x),
                    _ => None,
                })
                .collect(),
            _ => None,
        };
        if parsed.is_none() {
            self.error_at(
                Some(e),
                format!("[{section}] {key} must be a number or an array of numbers"),
            );
        }
        parsed
    }

    /// One of a fixed set of words.
    fn choice<T: Copy>(&mut self, section: &str, key: &str, options: &[(&str, T)]) -> Option<T> {
        let word = self.text(section, key)?;
        if let Some((_, v)) = options.iter().find(|(n, _)| *n == word) {
            return Some(*v);
        }
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        let e = self.entry(section, key);
        self.error_at(
            e,
            format!("[{section}] {key} must be one of {}, got `{word}`", names.join(", ")),
        );
        None
    }

    fn expression(&mut self, section: &str, key: &str, ctx: Context) -> Option<Compiled> {
        let src = self.text(section, key)?;
        match Compiled::new(src, ctx) {
            Ok(c) => Some(c),
            Err(err) => {
                let e = self.entry(section, key).expect("entry exists");
                self.errors.push(SpecError {
                    line: e.line,
                    column: e.text_column + err.column - 1,
                    message: format!("[{section}] {key}: {}", err.message),
                });
                None
            }
        }
    }

    /// Error at `key` if present, otherwise at the first present of `fallbacks`.
    fn violation(&mut self, anchors: &[(&str, &str)], message: String) {
        let entry = anchors.iter().find_map(|(s, k)| self.entry(s, k));
        self.error_at(entry, message);
    }
}

fn check_schema(reader: &mut Reader<'_>) {
    for (section, entries) in &reader.doc.sections {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == section) else {
            let first = entries.values().next();
            reader.error_at(first, format!("unknown section [{section}]"));
            continue;
        };
        for (key, e) in entries {
            let indexed = section == "coefficients" && indexed_key(key).is_some();
            if !keys.contains(&key.as_str()) && !indexed {
                reader.error_at(Some(e), format!("unknown key `{key}` in [{section}]"));
            }
        }
    }
}

fn overlay(base: Document, over: Document) -> Document {
    let mut out = base;
    for (section, entries) in over.sections {
        let target = out.sections.entry(section).or_default();
        for (k, v) in entries {
            target.insert(k, v);
        }
    }
    out
}

fn mark_preset(doc: &mut Document) {
    for entries in doc.sections.values_mut() {
        for e in entries.values_mut() {
            e.line = 0;
            e.column = 0;
            e.text_column = 1;
        }
    }
}

/// Parses and validates a problem document.
pub fn parse_spec(src: &str) -> Result<ProblemSpec, SpecErrors> {
    let mut errors = Vec::new();
    let user = read_document(src, &mut errors);
    let preset_entry = user.sections.get("problem").and_then(|p| p.get("preset")).cloned();
    let doc = match &preset_entry {
        Some(Entry {
            value: Value::Str(name),
            ..
        }) => match presets::preset_text(name) {
            Some(text) => {
                let mut base = read_document(text, &mut errors);
                mark_preset(&mut base);
                overlay(base, user)
            }
            None => {
                let e = preset_entry.as_ref().expect("checked");
                errors.push(SpecError {
                    line: e.line,
                    column: e.column,
                    message: format!(
                        "unknown preset `{name}`; known presets: {}",
                        presets::PRESET_NAMES.join(", ")
                    ),
                });
                user
            }
        },
        _ => user,
    };
    // Semantic checks on a document that failed to parse only cascade.
    if !errors.is_empty() {
        errors.sort_by_key(|e| (e.line, e.column));
        errors.dedup();
        return Err(SpecErrors(errors));
    }
    let mut reader = Reader { doc: &doc, errors };
    check_schema(&mut reader);
    let spec = build(&mut reader);
    let mut errors = reader.errors;
    errors.sort_by_key(|e| (e.line, e.column));
    errors.dedup();
    match spec {
        Some(spec) if errors.is_empty() => Ok(spec),
        _ => {
            if errors.is_empty() {
                errors.push(SpecError {
                    line: 1,
                    column: 1,
                    message: "incomplete specification".into(),
                });
            }
            Err(SpecErrors(errors))
        }
    }
}

fn build(rd: &mut Reader<'_>) -> Option<ProblemSpec> {
    let preset = match rd.entry("problem", "preset").map(|e| &e.value) {
        Some(Value::Str(s)) => Some(s.clone()),
        _ => None,
    };
    let dimension = match rd.count("problem", "dimension") {
        Some(d) if d >= 1 => d,
        Some(_) => {
            let e = rd.entry("problem", "dimension");
            rd.error_at(e, "[problem] dimension must be at least 1".into());
            1
        }
        None => {
            if rd.entry("problem", "dimension").is_none() {
                rd.error_at(None, "[problem] dimension is required".into());
            }
            1
        }
    };
    let split = split(rd, dimension);
    let mut ctx = Context::new(dimension);
    if let Some((d1, d2)) = split {
        ctx = ctx.with_split(d1, d2);
    }
    let coefficients = coefficients(rd, ctx);
    let lyapunov = lyapunov(rd);
    let bounds = bounds(rd, &lyapunov);
    let grid = grid(rd, dimension);
    let solver = solver(rd);
    let initial = initial(rd, ctx);
    let verify = verify(rd, &lyapunov);
    let output = rd.text("output", "directory").map(str::to_string);
    Some(ProblemSpec {
        preset,
        dimension,
        split,
        coefficients: coefficients?,
        lyapunov,
        bounds: bounds?,
        grid: grid?,
        solver: solver?,
        initial: initial?,
        verify: verify?,
        output,
    })
}

fn split(rd: &mut Reader<'_>, dimension: usize) -> Option<(usize, usize)> {
    let values = rd.numbers("problem", "split")?;
    let ok = values.len() == 2 && values.iter().all(|v| *v >= 1.0 && v.fract() == 0.0);
    if !ok || (values[0] + values[1]) as usize != dimension {
        let e = rd.entry("problem", "split");
        rd.error_at(
            e,
            format!("[problem] split must be [d1, d2] with d1, d2 >= 1 and d1 + d2 = {dimension}"),
        );
        return None;
    }
    Some((values[0] as usize, values[1] as usize))
}

fn coefficients(rd: &mut Reader<'_>, ctx: Context) -> Option<CoefficientSpec> {
    let d = ctx.dimension;
    let keys: Vec<String> = rd
        .doc
        .sections
        .get("coefficients")
        .map(|s| s.keys().cloned().collect())
        .unwrap_or_default();
    for key in &keys {
        if let Some((_, idx)) = indexed_key(key) {
            if idx.iter().any(|&i| i > d) {
                let e = rd.entry("coefficients", key);
                rd.error_at(e, format!("`{key}` refers to a coordinate beyond dimension {d}"));
            }
        }
    }
    let mut ok = true;
    let matrix_keys: Vec<&String> = keys
        .iter()
        .filter(|k| matches!(indexed_key(k), Some(("a", _))))
        .collect();
    let diffusion = if rd.entry("coefficients", "a").is_some() {
        if let Some(first) = matrix_keys.first() {
            let e = rd.entry("coefficients", first);
            rd.error_at(e, "give either the scalar `a` or matrix entries `aij`, not both".into());
        }
        rd.expression("coefficients", "a", ctx)
            .map(|a| DiffusionSpec::Isotropic { a })
    } else if matrix_keys.is_empty() {
        rd.error_at(
            None,
            "[coefficients] needs the diffusion `a` or its entries `aij`".into(),
        );
        None
    } else {
        let mut entries: Vec<Vec<Option<Compiled>>> = vec![vec![None; d]; d];
        for i in 0..d {
            for j in 0..d {
                let key = format!("a{}{}", i + 1, j + 1);
                if rd.entry("coefficients", &key).is_some() {
                    entries[i][j] = rd.expression("coefficients", &key, ctx);
                    ok &= entries[i][j].is_some();
                }
            }
        }
        let zero = Compiled::new("0", ctx).expect("literal parses");
        let mut full = vec![vec![zero.clone(); d]; d];
        for i in 0..d {
            for j in 0..d {
                full[i][j] = entries[i][j]
                    .clone()
                    .or_else(|| entries[j][i].clone())
                    .unwrap_or_else(|| zero.clone());
            }
        }
        ok.then_some(DiffusionSpec::Matrix { entries: full })
    };
    let mut drift = Vec::with_capacity(d);
    for i in 1..=d {
        let key = format!("b{i}");
        if rd.entry("coefficients", &key).is_some() {
            match rd.expression("coefficients", &key, ctx) {
                Some(b) => drift.push(b),
                None => ok = false,
            }
        } else {
            drift.push(Compiled::new("0", ctx).expect("literal parses"));
        }
    }
    let potential = if rd.entry("coefficients", "c").is_some() {
        rd.expression("coefficients", "c", ctx)
    } else {
        Some(Compiled::new("0", ctx).expect("literal parses"))
    };
    let given: Vec<usize> = (1..=d)
        .filter(|i| rd.entry("coefficients", &format!("div{i}")).is_some())
        .collect();
    let divergence = if given.is_empty() {
        None
    } else if given.len() != d {
        let e = rd.entry("coefficients", &format!("div{}", given[0]));
        rd.error_at(e, format!("give all of div1..div{d} or none"));
        ok = false;
        None
    } else {
        let parsed: Option<Vec<Compiled>> = (1..=d)
            .map(|i| rd.expression("coefficients", &format!("div{i}"), ctx))
            .collect();
        ok &= parsed.is_some();
        parsed
    };
    let diffusion = diffusion?;
    let potential = potential?;
    if !ok {
        return None;
    }
    let mut all: Vec<&Compiled> = drift.iter().chain(std::iter::once(&potential)).collect();
    match &diffusion {
        DiffusionSpec::Isotropic { a } => all.push(a),
        DiffusionSpec::Matrix { entries } => all.extend(entries.iter().flatten()),
    }
    if let Some(div) = &divergence {
        all.extend(div.iter());
    }
    let uses_time = all.iter().any(|c| c.expr.uses_time());
    Some(CoefficientSpec {
        diffusion,
        drift,
        potential,
        divergence,
        uses_time,
    })
}

fn lyapunov(rd: &mut Reader<'_>) -> LyapunovParams {
    let delta = rd.number("lyapunov", "delta").unwrap_or(0.5);
    if !(delta > 0.0 && delta < 1.0) {
        rd.violation(
            &[("lyapunov", "delta")],
            format!("δ must lie in (0,1): \"δ∈(0,1)\" (got δ = {delta})"),
        );
    }
    let alpha = rd.number("lyapunov", "alpha");
    if let Some(a) = alpha {
        if !(a > 0.0) {
            rd.violation(&[("lyapunov", "alpha")], format!("α must be positive (got α = {a})"));
        }
    }
    LyapunovParams {
        r: rd.number("lyapunov", "r"),
        k: rd.number("lyapunov", "k"),
        alpha,
        delta,
        beta: rd.number("lyapunov", "beta"),
    }
}

fn require(rd: &mut Reader<'_>, value: Option<f64>, name: &str, kind: BoundKind) -> Option<f64> {
    if value.is_none() {
        rd.violation(
            &[("bounds", "select")],
            format!("[lyapunov] {name} is required by the `{}` bound", kind.name()),
        );
    }
    value
}

/// Hypotheses of each bound, quoted in the messages.
fn check_bound_parameters(rd: &mut Reader<'_>, kind: BoundKind, p: &LyapunovParams) {
    let anchors: [(&str, &str); 3] = [("lyapunov", "k"), ("lyapunov", "r"), ("bounds", "select")];
    let r = require(rd, p.r, "r", kind);
    match kind {
        BoundKind::PowerGronwall | BoundKind::ExponentialGronwall => {
            if let Some(r) = r.filter(|r| !(*r >= 2.0)) {
                rd.violation(
                    &[("lyapunov", "r"), ("bounds", "select")],
                    format!("`{}`: \"where r≥2\" (got r = {r})", kind.name()),
                );
            }
            if kind == BoundKind::ExponentialGronwall {
                require(rd, p.alpha, "alpha", kind);
            }
        }
        BoundKind::PowerMoment => {
            let k = require(rd, p.k, "k", kind);
            if let (Some(r), Some(k)) = (r, k) {
                if !(k > 2.0 && r >= 2.0) {
                    rd.violation(
                        &anchors,
                        format!("`power_moment`: \"Let k>2 and r≥2\" (got r = {r}, k = {k})"),
                    );
                }
            }
        }
        BoundKind::ExponentialMoment => {
            let k = require(rd, p.k, "k", kind);
            require(rd, p.alpha, "alpha", kind);
            if let (Some(r), Some(k)) = (r, k) {
                if !(r > 2.0 && k > r) {
                    rd.violation(
                        &anchors,
                        format!("`exponential_moment`: \"Let r>2 and k>r\" (got r = {r}, k = {k})"),
                    );
                }
            }
        }
        BoundKind::TimeWeighted => {
            let k = require(rd, p.k, "k", kind);
            require(rd, p.alpha, "alpha", kind);
            let beta = require(rd, p.beta, "beta", kind);
            if let (Some(r), Some(k)) = (r, k) {
                if !(r > 2.0 && k > 2.0) {
                    rd.violation(
                        &anchors,
                        format!("`time_weighted`: \"Let r>2, k>2 and α>0\" (got r = {r}, k = {k})"),
                    );
                } else if let Some(beta) = beta {
                    if !(beta > r / (k - 2.0)) {
                        rd.violation(
                            &[("lyapunov", "beta"), ("bounds", "select")],
                            format!(
                                "`time_weighted`: \"β>r/(k−2)\" (got β = {beta}, r/(k−2) = {})",
                                r / (k - 2.0)
                            ),
                        );
                    }
                }
            }
        }
    }
}

fn bounds(rd: &mut Reader<'_>, p: &LyapunovParams) -> Option<BoundsSpec> {
    let mut select = Vec::new();
    let mut ok = true;
    if let Some(e) = rd.entry("bounds", "select") {
        let names: Option<Vec<String>> = match &e.value {
            Value::Str(s) => Some(vec![s.clone()]),
            Value::List(items) => items
                .iter()
                .map(|v| match v {
                    Value::Str(s) => Some(s.clone()),
                    _ => None,
                })
                .collect(),
            _ => None,
        };
        match names {
            None => {
                rd.error_at(
                    Some(e),
                    "[bounds] select must be a string or an array of strings".into(),
                );
                ok = false;
            }
            Some(names) => {
                for name in names {
                    match BoundKind::parse(&name) {
                        Some(k) if !select.contains(&k) => select.push(k),
                        Some(_) => {}
                        None => {
                            let all: Vec<&str> = BoundKind::ALL.iter().map(|k| k.name()).collect();
                            rd.error_at(
                                Some(e),
                                format!("unknown bound `{name}`; expected one of {}", all.join(", ")),
                            );
                            ok = false;
                        }
                    }
                }
            }
        }
    }
    select.sort();
    for &kind in &select {
        check_bound_parameters(rd, kind, p);
    }
    let t_min = rd.number("bounds", "t_min").unwrap_or(1e-3);
    let t_max = rd.number("bounds", "t_max").unwrap_or(1.0);
    if !(t_min > 0.0 && t_max > t_min) {
        rd.violation(
            &[("bounds", "t_min"), ("bounds", "t_max")],
            format!("[bounds] needs 0 < t_min < t_max (got {t_min}, {t_max})"),
        );
        ok = false;
    }
    let points = rd.count("bounds", "points").unwrap_or(25);
    if points < 2 {
        rd.violation(&[("bounds", "points")], "[bounds] points must be at least 2".into());
        ok = false;
    }
    let initial_moment = rd.number("bounds", "initial_moment");
    if initial_moment.is_some_and(|m| m < 0.0) {
        rd.violation(
            &[("bounds", "initial_moment")],
            "[bounds] initial_moment must be nonnegative".into(),
        );
    }
    let region_radius = rd.number("bounds", "region_radius");
    if region_radius.is_some_and(|r| !(r > 0.0)) {
        rd.violation(
            &[("bounds", "region_radius")],
            "[bounds] region_radius must be positive".into(),
        );
    }
    let samples = rd.count("bounds", "samples");
    if samples.is_some_and(|n| n < 3) {
        rd.violation(&[("bounds", "samples")], "[bounds] samples must be at least 3".into());
    }
    let time_samples = rd.count("bounds", "time_samples").unwrap_or(2).max(2);
    ok.then_some(BoundsSpec {
        select,
        t_min,
        t_max,
        points,
        initial_moment,
        region_radius,
        samples,
        time_samples,
    })
}

fn per_axis<T: Copy>(values: Vec<T>, d: usize) -> Option<Vec<T>> {
    match values.len() {
        1 => Some(vec![values[0]; d]),
        n if n == d => Some(values),
        _ => None,
    }
}

fn grid(rd: &mut Reader<'_>, d: usize) -> Option<GridSpec> {
    let extents = per_axis(rd.numbers("grid", "extent").unwrap_or(vec![8.0]), d);
    let cells = per_axis(rd.numbers("grid", "cells").unwrap_or(vec![256.0]), d);
    let (Some(extents), Some(cells)) = (extents, cells) else {
        rd.violation(
            &[("grid", "extent"), ("grid", "cells")],
            format!("[grid] extent and cells take one value or {d}"),
        );
        return None;
    };
    if extents.iter().any(|r| !(*r > 0.0)) || cells.iter().any(|n| !(*n >= 8.0 && n.fract() == 0.0)) {
        rd.violation(
            &[("grid", "extent"), ("grid", "cells")],
            "[grid] extents must be positive and each axis needs an integer number of cells, at least 8".into(),
        );
        return None;
    }
    Some(GridSpec {
        extents,
        cells: cells.into_iter().map(|n| n as usize).collect(),
    })
}

/// `"cfl 0.9"` or `"fixed 1e-3"`.
fn time_step(rd: &mut Reader<'_>) -> Option<TimeStep> {
    let Some(text) = rd.text("solver", "time_step") else {
        return rd.entry("solver", "time_step").is_none().then_some(TimeStep::Cfl(0.9));
    };
    let mut parts = text.split_whitespace();
    let parsed = match (parts.next(), parts.next().map(str::parse::<f64>), parts.next()) {
        (Some("cfl"), Some(Ok(c)), None) if c > 0.0 && c <= 1.0 => Some(TimeStep::Cfl(c)),
        (Some("fixed"), Some(Ok(dt)), None) if dt > 0.0 && dt.is_finite() => Some(TimeStep::Fixed(dt)),
        _ => None,
    };
    if parsed.is_none() {
        rd.violation(
            &[("solver", "time_step")],
            format!("[solver] time_step must be \"cfl C\" with C in (0, 1] or \"fixed DT\" with DT > 0, got `{text}`"),
        );
    }
    parsed
}

/// `"uniform N"`, `"log START STOP N"` or an array of times.
fn snapshots(rd: &mut Reader<'_>, end: f64) -> Option<SnapshotPlan> {
    let Some(e) = rd.entry("solver", "snapshots") else {
        return Some(SnapshotPlan::Uniform { count: 10 });
    };
    let plan = match &e.value {
        Value::List(_) | Value::Num(_) => rd
            .numbers("solver", "snapshots")
            .map(|times| SnapshotPlan::List { times }),
        Value::Str(text) => {
            let words: Vec<&str> = text.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().ok();
            let int = |s: &str| s.parse::<usize>().ok();
            match words.as_slice() {
                ["uniform", n] => int(n).filter(|n| *n >= 1).map(|count| SnapshotPlan::Uniform { count }),
                ["log", a, b, n] => match (num(a), num(b), int(n)) {
                    (Some(start), Some(stop), Some(count)) if start > 0.0 && stop > start && count >= 2 => {
                        Some(SnapshotPlan::Log { start, stop, count })
                    }
                    _ => None,
                },
                _ => None,
            }
        }
        _ => None,
    };
    match &plan {
        None => rd.error_at(
            Some(e),
            "[solver] snapshots must be \"uniform N\", \"log START STOP N\" or an array of times".into(),
        ),
        Some(p) if p.times(end).iter().any(|t| !(*t >= 0.0 && *t <= end)) => {
            rd.error_at(
                Some(e),
                format!("[solver] snapshot times must lie in [0, end_time = {end}]"),
            );
            return None;
        }
        _ => {}
    }
    plan
}

fn solver(rd: &mut Reader<'_>) -> Option<SolverSpec> {
    let time_step = time_step(rd);
    let end_time = rd.number("solver", "end_time").unwrap_or(1.0);
    if !(end_time >= 0.0) {
        rd.violation(
            &[("solver", "end_time")],
            "[solver] end_time must be nonnegative".into(),
        );
    }
    let snapshots = snapshots(rd, end_time);
    let scheme = match rd.entry("solver", "scheme") {
        None => Some(FluxScheme::Fitted),
        Some(_) => rd.choice(
            "solver",
            "scheme",
            &[("fitted", FluxScheme::Fitted), ("upwind", FluxScheme::Upwind)],
        ),
    };
    let boundary = match rd.entry("solver", "boundary") {
        None => Some(Boundary::NoFlux),
        Some(_) => rd.choice(
            "solver",
            "boundary",
            &[("no_flux", Boundary::NoFlux), ("absorbing", Boundary::Absorbing)],
        ),
    };
    let reaction = match rd.entry("solver", "reaction") {
        None => Some(Reaction::Exponential),
        Some(_) => rd.choice(
            "solver",
            "reaction",
            &[("exponential", Reaction::Exponential), ("explicit", Reaction::Explicit)],
        ),
    };
    Some(SolverSpec {
        time_step: time_step?,
        end_time,
        snapshots: snapshots?,
        scheme: scheme?,
        boundary: boundary?,
        reaction: reaction?,
    })
}

fn initial(rd: &mut Reader<'_>, ctx: Context) -> Option<InitialSpec> {
    let d = ctx.dimension;
    let kind = match rd.entry("initial", "kind") {
        None => Some("gaussian"),
        Some(_) => rd.choice(
            "initial",
            "kind",
            &[
                ("gaussian", "gaussian"),
                ("point_mass", "point_mass"),
                ("density", "density"),
            ],
        ),
    }?;
    let mass = rd.number("initial", "mass").unwrap_or(1.0);
    if !(mass > 0.0) {
        rd.violation(&[("initial", "mass")], "[initial] mass must be positive".into());
        return None;
    }
    let center = match rd.numbers("initial", "mean") {
        None => Some(vec![0.0; d]),
        Some(v) => {
            let v = per_axis(v, d);
            if v.is_none() {
                rd.violation(&[("initial", "mean")], format!("[initial] mean takes one value or {d}"));
            }
            v
        }
    }?;
    match kind {
        "gaussian" => {
            let std = rd.number("initial", "std").unwrap_or(1.0);
            if !(std > 0.0) {
                rd.violation(&[("initial", "std")], "[initial] std must be positive".into());
                return None;
            }
            Some(InitialSpec::Gaussian {
                mean: center,
                std,
                mass,
            })
        }
        "point_mass" => {
            let width = rd.number("initial", "width");
            if width.is_some_and(|w| !(w > 0.0)) {
                rd.violation(&[("initial", "width")], "[initial] width must be positive".into());
                return None;
            }
            Some(InitialSpec::PointMass { center, width, mass })
        }
        _ => {
            if rd.entry("initial", "density").is_none() {
                rd.violation(
                    &[("initial", "kind")],
                    "[initial] kind = \"density\" needs a `density` expression".into(),
                );
                return None;
            }
            rd.expression("initial", "density", ctx)
                .map(|density| InitialSpec::Density { density, mass })
        }
    }
}

fn verify(rd: &mut Reader<'_>, p: &LyapunovParams) -> Option<VerifySpec> {
    let envelope = match rd.entry("verify", "envelope") {
        None => Some(EnvelopeKind::Blowup),
        Some(_) => rd.choice(
            "verify",
            "envelope",
            &[
                ("blowup", EnvelopeKind::Blowup),
                ("time_weighted", EnvelopeKind::TimeWeighted),
            ],
        ),
    }?;
    let rate = rd.number("verify", "rate");
    let power = rd.number("verify", "power").or(p.r).unwrap_or(2.0);
    let q_default = match (p.r, p.k) {
        (Some(r), Some(k)) if k > r => r / (k - r),
        _ => 1.0,
    };
    let q = rd.number("verify", "q").unwrap_or(q_default);
    let beta = rd.number("verify", "beta").or(p.beta);
    let slack = rd.number("verify", "slack").unwrap_or(0.25);
    let t_min = rd.number("verify", "t_min");
    let t_max = rd.number("verify", "t_max");
    let step_check = rd.boolean("verify", "step_check").unwrap_or(true);
    let step_tolerance = rd.number("verify", "step_tolerance").unwrap_or(0.01);
    let horizon_fraction = rd.number("verify", "horizon_fraction").unwrap_or(0.6);
    let core_fraction = rd.number("verify", "core_fraction").unwrap_or(1e-12);
    let boundary_cells = rd.count("verify", "boundary_cells").unwrap_or(2);
    let regression_span = rd.number("verify", "regression_span").unwrap_or(2.0);
    let holdout = rd.boolean("verify", "holdout").unwrap_or(true);

    let mut ok = true;
    let mut check = |rd: &mut Reader<'_>, cond: bool, key: &str, message: &str| {
        if !cond {
            rd.violation(&[("verify", key)], format!("[verify] {message}"));
            ok = false;
        }
    };
    check(rd, rate.is_none_or(|r| r > 0.0), "rate", "rate must be positive");
    check(rd, power > 0.0, "power", "power must be positive");
    check(rd, q > 0.0, "q", "q must be positive");
    check(rd, slack >= 0.0, "slack", "slack must be nonnegative");
    check(rd, t_min.is_none_or(|t| t > 0.0), "t_min", "t_min must be positive");
    check(
        rd,
        t_max.is_none_or(|t| t > t_min.unwrap_or(0.0)),
        "t_max",
        "t_max must exceed t_min",
    );
    check(
        rd,
        step_tolerance > 0.0,
        "step_tolerance",
        "step_tolerance must be positive",
    );
    check(
        rd,
        horizon_fraction > 0.0 && horizon_fraction <= 1.0,
        "horizon_fraction",
        "horizon_fraction must lie in (0, 1]",
    );
    check(
        rd,
        (0.0..1.0).contains(&core_fraction),
        "core_fraction",
        "core_fraction must lie in [0, 1)",
    );
    check(
        rd,
        regression_span > 1.0,
        "regression_span",
        "regression_span must exceed 1",
    );
    if envelope == EnvelopeKind::TimeWeighted {
        check(
            rd,
            beta.is_some_and(|b| b > 0.0),
            "beta",
            "a time-weighted envelope needs a positive beta",
        );
    }
    ok.then_some(VerifySpec {
        envelope,
        rate,
        power,
        q,
        beta,
        slack,
        t_min,
        t_max,
        step_check,
        step_tolerance,
        horizon_fraction,
        core_fraction,
        boundary_cells,
        regression_span,
        holdout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn messages(src: &str) -> Vec<String> {
        parse_spec(src)
            .unwrap_err()
            .0
            .into_iter()
            .map(|e| e.to_string())
            .collect()
    }

    #[test]
    fn minimal_document() {
        let spec = parse_spec("[problem]\ndimension = 1\n[coefficients]\na = \"1\"\nb1 = \"-x1\"\n").unwrap();
        assert_eq!(spec.dimension, 1);
        assert!(matches!(spec.coefficients.diffusion, DiffusionSpec::Isotropic { .. }));
        assert_eq!(spec.coefficients.potential.expr.to_string(), "0.0");
        assert_eq!(spec.solver.snapshots, SnapshotPlan::Uniform { count: 10 });
        assert!(!spec.coefficients.uses_time);
    }

    #[test]
    fn syntax_errors_have_positions() {
        let errs = parse_spec("[problem]\ndimension = = 1\n").unwrap_err();
        assert_eq!(errs.0[0].line, 2);
        assert!(errs.0[0].column > 1);
    }

    #[test]
    fn expression_errors_point_into_the_value() {
        let errs = parse_spec("[problem]\ndimension = 1\n[coefficients]\na = \"1 + foo\"\n").unwrap_err();
        assert_eq!((errs.0[0].line, errs.0[0].column), (4, 10));
        assert!(errs.0[0].message.contains("unknown identifier"));
    }

    #[test]
    fn all_violations_are_reported() {
        let src =
            "[problem]\ndimension = 1\n[coefficients]\na = \"1\"\nz = 3\n[lyapunov]\ndelta = 1.5\n[grid]\ncells = 4\n";
        let m = messages(src);
        assert!(m.iter().any(|s| s.contains("unknown key `z`")), "{m:?}");
        assert!(m.iter().any(|s| s.contains("δ∈(0,1)")), "{m:?}");
        assert!(m.iter().any(|s| s.contains("at least 8")), "{m:?}");
    }

    #[test]
    fn snapshot_plans() {
        assert_eq!(SnapshotPlan::Uniform { count: 2 }.times(1.0), vec![0.0, 0.5, 1.0]);
        let log = SnapshotPlan::Log {
            start: 0.01,
            stop: 1.0,
            count: 3,
        }
        .times(1.0);
        assert!((log[1] - 0.1).abs() < 1e-15 && log[2] == 1.0);
    }

    #[test]
    fn matrix_diffusion_mirrors_missing_entries() {
        let spec =
            parse_spec("[problem]\ndimension = 2\n[coefficients]\na11 = \"1\"\na12 = \"0.5\"\na22 = \"2\"\n").unwrap();
        let DiffusionSpec::Matrix { entries } = &spec.coefficients.diffusion else {
            panic!("expected a matrix");
        };
        assert_eq!(entries[1][0].source, "0.5");
        let m = messages("[problem]\ndimension = 1\n[coefficients]\na = \"1\"\na11 = \"1\"\n");
        assert!(m.iter().any(|s| s.contains("not both")));
    }
}
