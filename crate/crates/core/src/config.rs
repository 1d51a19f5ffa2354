//! Run configuration: a flat TOML key set for the base parameters plus
//! repeatable `[[axis]]` blocks describing a parameter grid.
//!
//! ```toml
//! n_atoms = 2
//! rabi = 1.0
//! detuning = 0.1
//! delta_gamma = 0.8          # or gamma_r / gamma_l
//! feedback_mode = "counting"
//! feedback_strength = "pi/2"  # numbers may be written as expressions in pi
//!
//! [[axis]]
//! name = "rabi"
//! start = 0.0
//! stop = 3.0
//! count = 61
//! ```
//!
//! Defaults: `gamma = 1`, `delta_gamma = 0.6`, `gamma_unguided = 0`,
//! `engine = "exact"`, `seed = 0`.

use std::fmt;
use std::path::Path;

use serde::Serialize;
use toml::{Table, Value};

use crate::operators::{FeedbackMode, SystemParams, MAX_ATOMS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{message} (line {line}, column {col})")]
    Parse { message: String, line: usize, col: usize },
    #[error("unknown key `{key}`{}", location_suffix(*.location))]
    UnknownKey {
        key: String,
        location: Option<(usize, usize)>,
    },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("bad override `{0}`, expected key=value")]
    Override(String),
}

fn location_suffix(loc: Option<(usize, usize)>) -> String {
    match loc {
        Some((line, col)) => format!(" (line {line}, column {col})"),
        None => String::new(),
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Exact,
    Trajectory,
    Both,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Exact => "exact",
            Engine::Trajectory => "trajectory",
            Engine::Both => "both",
        }
    }

    pub fn exact(self) -> bool {
        self != Engine::Trajectory
    }

    pub fn trajectory(self) -> bool {
        self != Engine::Exact
    }
}

/// A per-point output quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Quantity {
    K,
    Dk2,
    XAlpha,
    Dx2Alpha,
    Purity,
    OverlapGg,
    OverlapS,
    NullspaceDim,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::K,
        Quantity::Dk2,
        Quantity::XAlpha,
        Quantity::Dx2Alpha,
        Quantity::Purity,
        Quantity::OverlapGg,
        Quantity::OverlapS,
        Quantity::NullspaceDim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::K => "k",
            Quantity::Dk2 => "dk2",
            Quantity::XAlpha => "x_alpha",
            Quantity::Dx2Alpha => "dx2_alpha",
            Quantity::Purity => "purity",
            Quantity::OverlapGg => "overlap_gg",
            Quantity::OverlapS => "overlap_S",
            Quantity::NullspaceDim => "nullspace_dim",
        }
    }

    /// CSV column header including the unit.
    pub fn column(self) -> &'static str {
        match self {
            Quantity::K => "k_over_gamma",
            Quantity::Dk2 => "dk2_over_gamma",
            Quantity::XAlpha => "x_alpha_gamma_3_2",
            Quantity::Dx2Alpha => "dx2_alpha_gamma_2",
            Quantity::Purity => "purity",
            Quantity::OverlapGg => "overlap_gg",
            Quantity::OverlapS => "overlap_S",
            Quantity::NullspaceDim => "nullspace_dim",
        }
    }

    pub fn from_name(s: &str) -> Option<Quantity> {
        Quantity::ALL.into_iter().find(|q| q.name() == s)
    }

    pub fn is_counting(self) -> bool {
        matches!(self, Quantity::K | Quantity::Dk2)
    }

    pub fn is_quadrature(self) -> bool {
        matches!(self, Quantity::XAlpha | Quantity::Dx2Alpha)
    }

    /// Whether a trajectory estimate exists for this quantity.
    pub fn has_trajectory_estimate(self) -> bool {
        self.is_counting() || self.is_quadrature()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    NAtoms,
    Rabi,
    Detuning,
    DeltaGamma,
    GammaR,
    GammaL,
    GammaUnguided,
    FeedbackStrength,
    QuadratureAngle,
}

impl AxisName {
    const ALL: [AxisName; 9] = [
        AxisName::NAtoms,
        AxisName::Rabi,
        AxisName::Detuning,
        AxisName::DeltaGamma,
        AxisName::GammaR,
        AxisName::GammaL,
        AxisName::GammaUnguided,
        AxisName::FeedbackStrength,
        AxisName::QuadratureAngle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AxisName::NAtoms => "n_atoms",
            AxisName::Rabi => "rabi",
            AxisName::Detuning => "detuning",
            AxisName::DeltaGamma => "delta_gamma",
            AxisName::GammaR => "gamma_r",
            AxisName::GammaL => "gamma_l",
            AxisName::GammaUnguided => "gamma_unguided",
            AxisName::FeedbackStrength => "feedback_strength",
            AxisName::QuadratureAngle => "quadrature_angle",
        }
    }

    pub fn from_name(s: &str) -> Option<AxisName> {
        AxisName::ALL.into_iter().find(|a| a.name() == s)
    }

    /// `params` with this parameter set to `value`. Sweeping `delta_gamma`
    /// keeps `gamma` fixed.
    pub fn apply(self, params: &SystemParams, value: f64) -> SystemParams {
        let mut p = *params;
        match self {
            AxisName::NAtoms => p.n_atoms = value.round() as usize,
            AxisName::Rabi => p.rabi = value,
            AxisName::Detuning => p.detuning = value,
            AxisName::DeltaGamma => p = p.with_chirality(p.gamma(), value),
            AxisName::GammaR => p.gamma_r = value,
            AxisName::GammaL => p.gamma_l = value,
            AxisName::GammaUnguided => p.gamma_unguided = value,
            AxisName::FeedbackStrength => p.feedback_strength = value,
            AxisName::QuadratureAngle => p.quadrature_angle = value,
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub name: AxisName,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.count;
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let t = i as f64 / last;
                match self.spacing {
                    Spacing::Linear if i + 1 == n => self.stop,
                    Spacing::Linear => self.start + t * (self.stop - self.start),
                    Spacing::Log if i + 1 == n => self.stop,
                    Spacing::Log => (self.start.ln() + t * (self.stop.ln() - self.start.ln())).exp(),
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let key = "axis";
        if self.count < 2 {
            return Err(invalid(key, format!("`{}` needs count >= 2", self.name.name())));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(invalid(key, "start and stop must be finite"));
        }
        if self.spacing == Spacing::Log && !(self.start > 0.0 && self.stop > 0.0) {
            return Err(invalid(key, "log spacing needs positive start and stop"));
        }
        if self.name == AxisName::NAtoms {
            let ok = self.spacing == Spacing::Linear
                && self
                    .values()
                    .iter()
                    .all(|v| (v - v.round()).abs() < 1e-9 && *v >= 1.0 && *v <= MAX_ATOMS as f64);
            if !ok {
                return Err(invalid(key, format!("n_atoms axis must hit integers in 1..={MAX_ATOMS}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySettings {
    pub t_final: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub burn_in: f64,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        TrajectorySettings {
            t_final: 50.0,
            dt: 2e-3,
            n_traj: 1000,
            burn_in: 0.3,
        }
    }
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub base: SystemParams,
    pub axes: Vec<Axis>,
    pub engine: Engine,
    pub observables: Vec<Quantity>,
    pub seed: u64,
    pub trajectory: TrajectorySettings,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let base = SystemParams::new(2).with_chirality(1.0, 0.6);
        SweepSpec {
            base,
            axes: Vec::new(),
            engine: Engine::Exact,
            observables: default_observables(base.feedback_mode),
            seed: 0,
            trajectory: TrajectorySettings::default(),
        }
    }
}

pub fn default_observables(mode: FeedbackMode) -> Vec<Quantity> {
    let first = match mode {
        FeedbackMode::Homodyne => [Quantity::XAlpha, Quantity::Dx2Alpha],
        _ => [Quantity::K, Quantity::Dk2],
    };
    first
        .into_iter()
        .chain([
            Quantity::Purity,
            Quantity::OverlapGg,
            Quantity::OverlapS,
            Quantity::NullspaceDim,
        ])
        .collect()
}

const TOP_KEYS: [&str; 16] = [
    "n_atoms",
    "rabi",
    "detuning",
    "gamma",
    "delta_gamma",
    "gamma_r",
    "gamma_l",
    "gamma_unguided",
    "feedback_mode",
    "feedback_strength",
    "quadrature_angle",
    "engine",
    "observables",
    "seed",
    "trajectory",
    "axis",
];
const TRAJ_KEYS: [&str; 4] = ["t_final", "dt", "n_traj", "burn_in"];
const AXIS_KEYS: [&str; 5] = ["name", "start", "stop", "count", "spacing"];

/// Evaluates `+ - * /`, parentheses, decimal literals and `pi`; juxtaposition
/// multiplies (`3pi/4`).
pub fn eval_number(text: &str) -> Option<f64> {
    let tokens = tokenize(text)?;
    let mut pos = 0;
    let v = expr(&tokens, &mut pos)?;
    (pos == tokens.len() && v.is_finite()).then_some(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    Op(char),
}

fn tokenize(text: &str) -> Option<Vec<Tok>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if "+-*/()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Tok::Num(s.parse().ok()?));
        } else if chars[i..].starts_with(&['p', 'i']) {
            out.push(Tok::Num(std::f64::consts::PI));
            i += 2;
        } else {
            return None;
        }
    }
    Some(out)
}

fn expr(t: &[Tok], pos: &mut usize) -> Option<f64> {
    let mut v = term(t, pos)?;
    while let Some(Tok::Op(op @ ('+' | '-'))) = t.get(*pos) {
        *pos += 1;
        let r = term(t, pos)?;
        v = if *op == '+' { v + r } else { v - r };
    }
    Some(v)
}

fn term(t: &[Tok], pos: &mut usize) -> Option<f64> {
    let mut v = unary(t, pos)?;
    loop {
        match t.get(*pos) {
            Some(Tok::Op('*')) => {
                *pos += 1;
                v *= unary(t, pos)?;
            }
            Some(Tok::Op('/')) => {
                *pos += 1;
                v /= unary(t, pos)?;
            }
            Some(Tok::Num(_)) | Some(Tok::Op('(')) => v *= unary(t, pos)?,
            _ => return Some(v),
        }
    }
}

fn unary(t: &[Tok], pos: &mut usize) -> Option<f64> {
    match t.get(*pos)? {
        Tok::Op('-') => {
            *pos += 1;
            Some(-unary(t, pos)?)
        }
        Tok::Op('+') => {
            *pos += 1;
            unary(t, pos)
        }
        Tok::Op('(') => {
            *pos += 1;
            let v = expr(t, pos)?;
            (t.get(*pos) == Some(&Tok::Op(')'))).then_some(())?;
            *pos += 1;
            Some(v)
        }
        Tok::Num(x) => {
            *pos += 1;
            Some(*x)
        }
        Tok::Op(_) => None,
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map(|i| offset - i).unwrap_or(offset + 1);
    (line, col)
}

/// Position of the first `key = ...` line, for error reporting.
fn find_key(text: &str, key: &str) -> Option<(usize, usize)> {
    text.lines().enumerate().find_map(|(i, line)| {
        let trimmed = line.trim_start();
        let rest = trimmed.strip_prefix(key)?;
        let rest = rest.trim_start();
        rest.starts_with('=')
            .then(|| (i + 1, line.len() - trimmed.len() + 1))
    })
}

fn check_keys(table: &Table, allowed: &[&str], prefix: &str, text: &str) -> Result<(), ConfigError> {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                key: format!("{prefix}{key}"),
                location: find_key(text, key),
            });
        }
    }
    Ok(())
}

fn number(v: &Value, key: &str) -> Result<f64, ConfigError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        Value::String(s) => eval_number(s).ok_or_else(|| invalid(key, format!("cannot evaluate `{s}`"))),
        _ => Err(invalid(key, "expected a number")),
    }
}

fn integer(v: &Value, key: &str) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::String(s) => s.parse().map_err(|_| invalid(key, "expected a non-negative integer")),
        _ => Err(invalid(key, "expected a non-negative integer")),
    }
}

fn string<'a>(v: &'a Value, key: &str) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| invalid(key, "expected a string"))
}

fn parse_table(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>().map_err(|e| {
        let (line, col) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
        ConfigError::Parse {
            message: e.message().trim().to_string(),
            line,
            col,
        }
    })
}

/// Applies `key=value` overrides (dotted keys reach into tables) to a parsed table.
pub fn apply_overrides(table: &mut Table, overrides: &[String]) -> Result<(), ConfigError> {
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| ConfigError::Override(item.clone()))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| ConfigError::Override(item.clone()))?;
        let mut target = &mut *table;
        for part in parts {
            target = target
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .ok_or_else(|| ConfigError::Override(item.clone()))?;
        }
        target.insert(last.to_string(), value);
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<SweepSpec, ConfigError> {
    parse_config_with(text, &[])
}

pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<SweepSpec, ConfigError> {
    let mut table = parse_table(text)?;
    apply_overrides(&mut table, overrides)?;
    from_table(&table, text)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<SweepSpec, crate::Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_config_with(&text, overrides)?)
}

fn from_table(table: &Table, text: &str) -> Result<SweepSpec, ConfigError> {
    check_keys(table, &TOP_KEYS, "", text)?;
    let get = |k: &str| table.get(k);
    let num_or = |k: &str, default: f64| get(k).map(|v| number(v, k)).unwrap_or(Ok(default));

    let n_atoms = get("n_atoms").map(|v| integer(v, "n_atoms")).unwrap_or(Ok(2))? as usize;
    let split = get("gamma_r").is_some() || get("gamma_l").is_some();
    let total = get("gamma").is_some() || get("delta_gamma").is_some();
    if split && total {
        return Err(invalid("gamma", "give either gamma/delta_gamma or gamma_r/gamma_l, not both"));
    }
    let (gamma_r, gamma_l) = if split {
        (num_or("gamma_r", 0.8)?, num_or("gamma_l", 0.2)?)
    } else {
        let g = num_or("gamma", 1.0)?;
        let dg = num_or("delta_gamma", 0.6)?;
        (0.5 * (g + dg), 0.5 * (g - dg))
    };
    let feedback_mode = match get("feedback_mode").map(|v| string(v, "feedback_mode")).transpose()? {
        None | Some("none") => FeedbackMode::None,
        Some("counting") => FeedbackMode::Counting,
        Some("homodyne") => FeedbackMode::Homodyne,
        Some(other) => return Err(invalid("feedback_mode", format!("`{other}` is not none|counting|homodyne"))),
    };
    let base = SystemParams {
        n_atoms,
        rabi: num_or("rabi", 1.0)?,
        detuning: num_or("detuning", 0.0)?,
        gamma_r,
        gamma_l,
        gamma_unguided: num_or("gamma_unguided", 0.0)?,
        feedback_mode,
        feedback_strength: num_or("feedback_strength", 0.0)?,
        quadrature_angle: num_or("quadrature_angle", 0.0)?,
    };
    base.validate().map_err(|e| invalid("params", e.to_string()))?;

    let engine = match get("engine").map(|v| string(v, "engine")).transpose()? {
        None | Some("exact") => Engine::Exact,
        Some("trajectory") => Engine::Trajectory,
        Some("both") => Engine::Both,
        Some(other) => return Err(invalid("engine", format!("`{other}` is not exact|trajectory|both"))),
    };

    let observables = match get("observables") {
        None => default_observables(feedback_mode),
        Some(Value::Array(items)) => {
            let mut out = Vec::new();
            for item in items {
                let name = string(item, "observables")?;
                let q = Quantity::from_name(name)
                    .ok_or_else(|| invalid("observables", format!("unknown observable `{name}`")))?;
                if !out.contains(&q) {
                    out.push(q);
                }
            }
            out
        }
        Some(_) => return Err(invalid("observables", "expected an array of names")),
    };
    for q in &observables {
        let ok = match feedback_mode {
            FeedbackMode::Counting => !q.is_quadrature(),
            FeedbackMode::Homodyne => !q.is_counting(),
            FeedbackMode::None => true,
        };
        if !ok {
            return Err(invalid(
                "observables",
                format!("`{}` is not defined for feedback_mode = {feedback_mode}", q.name()),
            ));
        }
    }

    let seed = get("seed").map(|v| integer(v, "seed")).unwrap_or(Ok(0))?;

    let mut trajectory = TrajectorySettings::default();
    if let Some(v) = get("trajectory") {
        let t = v.as_table().ok_or_else(|| invalid("trajectory", "expected a table"))?;
        check_keys(t, &TRAJ_KEYS, "trajectory.", text)?;
        if let Some(v) = t.get("t_final") {
            trajectory.t_final = number(v, "trajectory.t_final")?;
        }
        if let Some(v) = t.get("dt") {
            trajectory.dt = number(v, "trajectory.dt")?;
        }
        if let Some(v) = t.get("n_traj") {
            trajectory.n_traj = integer(v, "trajectory.n_traj")? as usize;
        }
        if let Some(v) = t.get("burn_in") {
            trajectory.burn_in = number(v, "trajectory.burn_in")?;
        }
    }
    if !(trajectory.t_final > 0.0 && trajectory.dt > 0.0 && trajectory.dt <= trajectory.t_final) {
        return Err(invalid("trajectory", "need 0 < dt <= t_final"));
    }
    if trajectory.n_traj == 0 {
        return Err(invalid("trajectory.n_traj", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&trajectory.burn_in) {
        return Err(invalid("trajectory.burn_in", "must lie in [0, 1)"));
    }

    let mut axes = Vec::new();
    if let Some(v) = get("axis") {
        let blocks = v.as_array().ok_or_else(|| invalid("axis", "use [[axis]] blocks"))?;
        for block in blocks {
            let t = block.as_table().ok_or_else(|| invalid("axis", "use [[axis]] blocks"))?;
            check_keys(t, &AXIS_KEYS, "axis.", text)?;
            let name = t
                .get("name")
                .map(|v| string(v, "axis.name"))
                .transpose()?
                .ok_or_else(|| invalid("axis.name", "missing"))?;
            let name = AxisName::from_name(name)
                .ok_or_else(|| invalid("axis.name", format!("`{name}` is not a sweepable parameter")))?;
            let field = |k: &str| t.get(k).ok_or_else(|| invalid(&format!("axis.{k}"), "missing"));
            let spacing = match t.get("spacing").map(|v| string(v, "axis.spacing")).transpose()? {
                None | Some("linear") => Spacing::Linear,
                Some("log") => Spacing::Log,
                Some(other) => return Err(invalid("axis.spacing", format!("`{other}` is not linear|log"))),
            };
            let axis = Axis {
                name,
                start: number(field("start")?, "axis.start")?,
                stop: number(field("stop")?, "axis.stop")?,
                count: integer(field("count")?, "axis.count")? as usize,
                spacing,
            };
            axis.validate()?;
            if axes.iter().any(|a: &Axis| a.name == axis.name) {
                return Err(invalid("axis", format!("`{}` swept twice", axis.name.name())));
            }
            axes.push(axis);
        }
    }
    if axes.len() > 2 {
        return Err(invalid("axis", "at most two axes"));
    }
    Ok(SweepSpec {
        base,
        axes,
        engine,
        observables,
        seed,
        trajectory,
    })
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl SweepSpec {
    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid coordinates in row order (first axis outermost).
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let mut rows = vec![Vec::new()];
        for vals in &values {
            rows = rows
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |&v| {
                        let mut r = prefix.clone();
                        r.push(v);
                        r
                    })
                })
                .collect();
        }
        rows
    }

    /// Parameters at one grid point.
    pub fn params_at(&self, coords: &[f64]) -> SystemParams {
        self.axes
            .iter()
            .zip(coords)
            .fold(self.base, |p, (axis, &v)| axis.name.apply(&p, v))
    }

    /// Serializes back to the configuration format.
    pub fn to_toml(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SweepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.base;
        writeln!(f, "n_atoms = {}", p.n_atoms)?;
        writeln!(f, "rabi = {}", fmt_f64(p.rabi))?;
        writeln!(f, "detuning = {}", fmt_f64(p.detuning))?;
        writeln!(f, "gamma_r = {}", fmt_f64(p.gamma_r))?;
        writeln!(f, "gamma_l = {}", fmt_f64(p.gamma_l))?;
        writeln!(f, "gamma_unguided = {}", fmt_f64(p.gamma_unguided))?;
        writeln!(f, "feedback_mode = \"{}\"", p.feedback_mode)?;
        writeln!(f, "feedback_strength = {}", fmt_f64(p.feedback_strength))?;
        writeln!(f, "quadrature_angle = {}", fmt_f64(p.quadrature_angle))?;
        writeln!(f, "engine = \"{}\"", self.engine.name())?;
        let obs: Vec<String> = self.observables.iter().map(|q| format!("\"{}\"", q.name())).collect();
        writeln!(f, "observables = [{}]", obs.join(", "))?;
        writeln!(f, "seed = {}", self.seed)?;
        let t = &self.trajectory;
        writeln!(f, "\n[trajectory]")?;
        writeln!(f, "t_final = {}", fmt_f64(t.t_final))?;
        writeln!(f, "dt = {}", fmt_f64(t.dt))?;
        writeln!(f, "n_traj = {}", t.n_traj)?;
        writeln!(f, "burn_in = {}", fmt_f64(t.burn_in))?;
        for a in &self.axes {
            writeln!(f, "\n[[axis]]")?;
            writeln!(f, "name = \"{}\"", a.name.name())?;
            writeln!(f, "start = {}", fmt_f64(a.start))?;
            writeln!(f, "stop = {}", fmt_f64(a.stop))?;
            writeln!(f, "count = {}", a.count)?;
            writeln!(f, "spacing = \"{}\"", if a.spacing == Spacing::Log { "log" } else { "linear" })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn minimal_rabi_sweep() {
        let spec = parse_config(
            "n_atoms = 2\n[[axis]]\nname = \"rabi\"\nstart = 0\nstop = 3\ncount = 61\n",
        )
        .unwrap();
        assert_eq!(spec.axes.len(), 1);
        assert_eq!(spec.len(), 61);
        let v = spec.axes[0].values();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[60], 3.0);
        assert!((v[1] - 0.05).abs() < 1e-15);
        assert_eq!(spec.engine, Engine::Exact);
        assert!((spec.base.gamma() - 1.0).abs() < 1e-15);
        assert_eq!(spec.base.gamma_unguided, 0.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("n_atoms = 2\nomega_2 = 1.0\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                key: "omega_2".into(),
                location: Some((2, 1))
            }
        );
        assert!(err.to_string().contains("omega_2"));
        let err = parse_config("[trajectory]\nsteps = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { ref key, .. } if key == "trajectory.steps"));
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse_config("n_atoms = 2\nrabi = = 1\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let text = "n_atoms = 3\nrabi = 0.7\ndetuning = 0.1\ndelta_gamma = 0.998\n\
                    feedback_mode = \"homodyne\"\nfeedback_strength = -0.5\nquadrature_angle = \"pi/2\"\n\
                    engine = \"both\"\nseed = 42\n[trajectory]\nn_traj = 200\n\
                    [[axis]]\nname = \"quadrature_angle\"\nstart = 0.1\nstop = \"pi - 0.1\"\ncount = 5\n\
                    [[axis]]\nname = \"feedback_strength\"\nstart = 0.01\nstop = 2\ncount = 4\nspacing = \"log\"\n";
        let spec = parse_config(text).unwrap();
        let again = parse_config(&spec.to_toml()).unwrap();
        assert_eq!(spec, again);
        assert!((spec.base.quadrature_angle - PI / 2.0).abs() < 1e-15);
        assert_eq!(spec.len(), 20);
    }

    #[test]
    fn expressions() {
        assert_eq!(eval_number("pi/2"), Some(PI / 2.0));
        assert_eq!(eval_number("3pi/4"), Some(3.0 * PI / 4.0));
        assert_eq!(eval_number("-(1 + 2) * 2"), Some(-6.0));
        assert_eq!(eval_number("1e-3"), Some(1e-3));
        assert_eq!(eval_number("2 pi"), Some(2.0 * PI));
        assert_eq!(eval_number("pie"), None);
        assert_eq!(eval_number("1/"), None);
    }

    #[test]
    fn validation_errors() {
        for text in [
            "gamma = 1\ngamma_r = 0.5\n",
            "feedback_mode = \"pulsed\"\n",
            "[[axis]]\nname = \"omega\"\nstart = 0\nstop = 1\ncount = 3\n",
            "[[axis]]\nname = \"rabi\"\nstart = 0\nstop = 1\ncount = 1\n",
            "[[axis]]\nname = \"rabi\"\nstart = 0\nstop = 1\ncount = 3\nspacing = \"log\"\n",
            "[[axis]]\nname = \"n_atoms\"\nstart = 1\nstop = 7\ncount = 7\n",
            "feedback_mode = \"counting\"\nobservables = [\"x_alpha\"]\n",
            "n_atoms = 9\n",
        ] {
            assert!(matches!(parse_config(text), Err(ConfigError::Invalid { .. })), "{text}");
        }
    }

    #[test]
    fn grid_is_outer_axis_major() {
        let spec = parse_config(
            "[[axis]]\nname = \"rabi\"\nstart = 0\nstop = 1\ncount = 2\n\
             [[axis]]\nname = \"detuning\"\nstart = 0\nstop = 2\ncount = 3\n",
        )
        .unwrap();
        let g = spec.grid();
        assert_eq!(g, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 2.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let p = spec.params_at(&g[5]);
        assert_eq!((p.rabi, p.detuning), (1.0, 2.0));
    }

    #[test]
    fn overrides() {
        let spec = parse_config_with(
            "n_atoms = 2\n",
            &["rabi=pi".into(), "trajectory.n_traj=7".into(), "feedback_mode=counting".into()],
        )
        .unwrap();
        assert_eq!(spec.base.rabi, PI);
        assert_eq!(spec.trajectory.n_traj, 7);
        assert_eq!(spec.base.feedback_mode, FeedbackMode::Counting);
        assert!(parse_config_with("", &["noequals".into()]).is_err());
    }

    #[test]
    fn delta_gamma_axis_keeps_gamma() {
        let spec = parse_config("gamma = 1\n[[axis]]\nname = \"delta_gamma\"\nstart = 0\nstop = 1\ncount = 3\n").unwrap();
        let p = spec.params_at(&[1.0]);
        assert_eq!((p.gamma_r, p.gamma_l), (1.0, 0.0));
    }

    #[test]
    fn empty_axes_single_point() {
        let spec = parse_config("").unwrap();
        assert_eq!(spec.len(), 1);
        assert_eq!(spec.grid(), vec![Vec::<f64>::new()]);
    }
}
