//! Flat `key=value` run configuration.
//!
//! Entries are separated by newlines or commas, `#` starts a comment.
//! Unknown and repeated keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::fields::{E3Params, HopfParams, InitialField};
use crate::scalar::{Real, Vec3};
use crate::schemes::{LagrangeConfig, NewtonConfig, SaddleSolver, SchemeError, SchemeKind, SwitchRule, TimePhase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given more than once")]
    DuplicateKey(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("key `{key}`: invalid value `{value}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("key `{key}` does not apply to field `{field}`")]
    NotApplicable { key: String, field: &'static str },
}

const KEYS: &[&str] = &[
    "scheme",
    "field",
    "mesh",
    "domain.xy",
    "domain.z",
    "phases",
    "gamma",
    "switch_rule",
    "solver",
    "solver.verify_every",
    "newton.abs_tol",
    "newton.rel_tol",
    "newton.max_iter",
    "newton.damping",
    "newton.max_halvings",
    "output.dir",
    "output.cadence",
    "output.csv",
    "output.vtk",
    "seed",
    "quadrature",
    "hopf.omega1",
    "hopf.omega2",
    "hopf.s",
    "e3.b0",
    "e3.k",
    "e3.a",
    "e3.l",
    "e3.centers",
];

/// How long a phase lasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseLength<T> {
    Steps(usize),
    /// Until the given absolute time, rounded up to whole steps.
    Until(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpec<T> {
    pub dt: T,
    pub tau: T,
    pub length: PhaseLength<T>,
}

impl<T: Real> fmt::Display for PhaseSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dt={} tau={} ", self.dt, self.tau)?;
        match self.length {
            PhaseLength::Steps(n) => write!(f, "steps={n}"),
            PhaseLength::Until(t) => write!(f, "until={t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Sample every `cadence` steps (plus first, last and phase ends).
    pub cadence: usize,
    pub csv: bool,
    pub vtk: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("output"), cadence: 10, csv: true, vtk: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub scheme: SchemeKind,
    pub field: InitialField<T>,
    pub cells: [usize; 3],
    pub half_xy: T,
    pub half_z: T,
    pub phases: Vec<PhaseSpec<T>>,
    pub lagrange: LagrangeConfig<T>,
    /// Check the block saddle solve against a dense one every this many
    /// Lagrange steps; 0 disables.
    pub verify_every: usize,
    pub newton: NewtonConfig<T>,
    pub max_halvings: usize,
    pub output: OutputConfig,
    pub seed: u64,
    /// Gauss points per direction for interpolating the initial field.
    pub quadrature: usize,
}

impl<T: Real> RunConfig<T> {
    /// Defaults for a scheme and field.
    pub fn new(scheme: SchemeKind, field: InitialField<T>) -> Self {
        let warmup_dt = match field {
            InitialField::E3(_) => T::lit(0.1),
            InitialField::Hopf(_) => T::one(),
        };
        Self {
            scheme,
            cells: field.default_cells(),
            half_xy: T::lit(4.0),
            half_z: field.default_half_height(),
            field,
            phases: vec![
                PhaseSpec { dt: warmup_dt, tau: T::one(), length: PhaseLength::Steps(100) },
                PhaseSpec { dt: T::lit(100.0), tau: T::lit(0.1), length: PhaseLength::Until(T::lit(10000.0)) },
            ],
            lagrange: LagrangeConfig::default(),
            verify_every: 0,
            newton: NewtonConfig::default(),
            max_halvings: 3,
            output: OutputConfig::default(),
            seed: 0,
            quadrature: 5,
        }
    }

    /// Phases as step counts, resolving `until` against the preceding
    /// phases.
    pub fn time_phases(&self) -> Result<Vec<TimePhase<T>>, SchemeError> {
        let mut t = T::zero();
        let mut out = Vec::with_capacity(self.phases.len());
        for p in &self.phases {
            let ph = match p.length {
                PhaseLength::Steps(n) => TimePhase::new(p.dt, p.tau, n)?,
                PhaseLength::Until(end) => TimePhase::until(p.dt, p.tau, t, end)?,
            };
            t += ph.duration();
            out.push(ph);
        }
        Ok(out)
    }

    /// Keep only the first `n` steps of the schedule.
    pub fn truncate_steps(&mut self, n: usize) -> Result<(), SchemeError> {
        let mut left = n;
        let mut phases = Vec::new();
        for (spec, ph) in self.phases.iter().zip(self.time_phases()?) {
            if left == 0 {
                break;
            }
            let k = ph.n_steps.min(left);
            left -= k;
            phases.push(PhaseSpec { length: PhaseLength::Steps(k), ..*spec });
        }
        self.phases = phases;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, reason: &str| ConfigError::Value {
            key: key.into(),
            value,
            reason: reason.into(),
        };
        if self.cells.contains(&0) {
            return Err(bad("mesh", format!("{:?}", self.cells), "cell counts must be positive"));
        }
        if !(self.half_xy > T::zero()) {
            return Err(bad("domain.xy", self.half_xy.to_string(), "must be positive"));
        }
        if !(self.half_z > T::zero()) {
            return Err(bad("domain.z", self.half_z.to_string(), "must be positive"));
        }
        if self.phases.is_empty() {
            return Err(bad("phases", String::new(), "at least one phase is required"));
        }
        self.time_phases().map_err(|e| bad("phases", join_phases(&self.phases), &e.to_string()))?;
        if !(self.lagrange.gamma >= T::zero()) {
            return Err(bad("gamma", self.lagrange.gamma.to_string(), "must be non-negative"));
        }
        self.newton.validate().map_err(|e| bad("newton", String::new(), &e.to_string()))?;
        if self.output.cadence == 0 {
            return Err(bad("output.cadence", "0".into(), "must be at least 1"));
        }
        if self.quadrature == 0 {
            return Err(bad("quadrature", "0".into(), "must be at least 1"));
        }
        let key = match self.field {
            InitialField::E3(_) => "e3",
            InitialField::Hopf(_) => "hopf",
        };
        self.field.validate().map_err(|e| bad(key, String::new(), &e.to_string()))?;
        Ok(())
    }
}

fn join_phases<T: Real>(phases: &[PhaseSpec<T>]) -> String {
    phases.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("; ")
}

fn value_err(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), reason: reason.to_string() }
}

fn parse_num<N: FromStr>(key: &str, v: &str) -> Result<N, ConfigError>
where
    N::Err: fmt::Display,
{
    v.parse().map_err(|e| value_err(key, v, e))
}

fn parse_real<T: Real>(key: &str, v: &str) -> Result<T, ConfigError> {
    let x: f64 = parse_num(key, v)?;
    if !x.is_finite() {
        return Err(value_err(key, v, "not a finite number"));
    }
    Ok(T::lit(x))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(value_err(key, v, "expected true or false")),
    }
}

fn parse_mesh(v: &str) -> Result<[usize; 3], ConfigError> {
    let parts: Vec<&str> = v.split(['x', 'X']).map(str::trim).collect();
    if parts.len() != 3 {
        return Err(value_err("mesh", v, "expected NXxNYxNZ"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_num("mesh", p)?;
    }
    Ok(out)
}

fn parse_phases<T: Real>(v: &str) -> Result<Vec<PhaseSpec<T>>, ConfigError> {
    let mut out = Vec::new();
    for item in v.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (mut dt, mut tau, mut length) = (None, None, None);
        for tok in item.split_whitespace() {
            let (k, val) =
                tok.split_once('=').ok_or_else(|| value_err("phases", item, format!("bad token `{tok}`")))?;
            match k {
                "dt" if dt.is_none() => dt = Some(parse_real("phases", val)?),
                "tau" if tau.is_none() => tau = Some(parse_real("phases", val)?),
                "steps" if length.is_none() => length = Some(PhaseLength::Steps(parse_num("phases", val)?)),
                "until" if length.is_none() => length = Some(PhaseLength::Until(parse_real("phases", val)?)),
                _ => return Err(value_err("phases", item, format!("unexpected or repeated `{k}`"))),
            }
        }
        match (dt, tau, length) {
            (Some(dt), Some(tau), Some(length)) => out.push(PhaseSpec { dt, tau, length }),
            _ => return Err(value_err("phases", item, "each phase needs dt, tau and steps or until")),
        }
    }
    if out.is_empty() {
        return Err(value_err("phases", v, "at least one phase is required"));
    }
    Ok(out)
}

fn parse_centers<T: Real>(v: &str) -> Result<[Vec3<T>; 6], ConfigError> {
    let rows: Vec<&str> = v.split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
    if rows.len() != 6 {
        return Err(value_err("e3.centers", v, "expected six `x y z` triples separated by `;`"));
    }
    let mut out = [[T::zero(); 3]; 6];
    for (c, row) in out.iter_mut().zip(rows) {
        let xs: Vec<&str> = row.split_whitespace().collect();
        if xs.len() != 3 {
            return Err(value_err("e3.centers", row, "expected three coordinates"));
        }
        for (ci, x) in c.iter_mut().zip(xs) {
            *ci = parse_real("e3.centers", x)?;
        }
    }
    Ok(out)
}

/// Split a document into `(key, value)` pairs, rejecting unknown and
/// repeated keys.
fn entries(text: &str) -> Result<BTreeMap<&str, &str>, ConfigError> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for item in line.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) =
                item.split_once('=').ok_or_else(|| ConfigError::Syntax { line: n + 1, text: item.to_string() })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
            if map.insert(k, v).is_some() {
                return Err(ConfigError::DuplicateKey(k.to_string()));
            }
        }
    }
    Ok(map)
}

/// Parse and validate a configuration document.
pub fn parse_config<T: Real>(text: &str) -> Result<RunConfig<T>, ConfigError> {
    let mut map = entries(text)?;
    let scheme_v = map.remove("scheme").ok_or(ConfigError::Missing("scheme"))?;
    let scheme: SchemeKind = scheme_v.parse().map_err(|e| value_err("scheme", scheme_v, e))?;
    let field_v = map.remove("field").ok_or(ConfigError::Missing("field"))?;
    let mut field = match field_v.to_ascii_lowercase().as_str() {
        "hopf" => InitialField::Hopf(HopfParams::default()),
        "e3" => InitialField::E3(E3Params::default()),
        _ => return Err(value_err("field", field_v, "expected hopf or e3")),
    };
    let mut cfg = RunConfig::new(scheme, field.clone());
    for (k, v) in map {
        match k {
            "mesh" => cfg.cells = parse_mesh(v)?,
            "domain.xy" => cfg.half_xy = parse_real(k, v)?,
            "domain.z" => cfg.half_z = parse_real(k, v)?,
            "phases" => cfg.phases = parse_phases(v)?,
            "gamma" => cfg.lagrange.gamma = parse_real(k, v)?,
            "switch_rule" => cfg.lagrange.switch_rule = v.parse::<SwitchRule>().map_err(|e| value_err(k, v, e))?,
            "solver" => cfg.lagrange.solver = v.parse::<SaddleSolver>().map_err(|e| value_err(k, v, e))?,
            "solver.verify_every" => cfg.verify_every = parse_num(k, v)?,
            "newton.abs_tol" => cfg.newton.abs_tol = parse_real(k, v)?,
            "newton.rel_tol" => cfg.newton.rel_tol = parse_real(k, v)?,
            "newton.max_iter" => cfg.newton.max_iter = parse_num(k, v)?,
            "newton.damping" => cfg.newton.damping = parse_bool(k, v)?,
            "newton.max_halvings" => cfg.max_halvings = parse_num(k, v)?,
            "output.dir" => cfg.output.dir = PathBuf::from(v),
            "output.cadence" => cfg.output.cadence = parse_num(k, v)?,
            "output.csv" => cfg.output.csv = parse_bool(k, v)?,
            "output.vtk" => cfg.output.vtk = parse_bool(k, v)?,
            "seed" => cfg.seed = parse_num(k, v)?,
            "quadrature" => cfg.quadrature = parse_num(k, v)?,
            _ => match (&mut field, k.split_once('.')) {
                (InitialField::Hopf(p), Some(("hopf", name))) => match name {
                    "omega1" => p.omega1 = parse_real(k, v)?,
                    "omega2" => p.omega2 = parse_real(k, v)?,
                    _ => p.s = parse_real(k, v)?,
                },
                (InitialField::E3(p), Some(("e3", name))) => match name {
                    "b0" => p.b0 = parse_real(k, v)?,
                    "k" => p.k = parse_real(k, v)?,
                    "a" => p.a = parse_real(k, v)?,
                    "l" => p.l = parse_real(k, v)?,
                    _ => p.centers = parse_centers(v)?,
                },
                _ => return Err(ConfigError::NotApplicable { key: k.to_string(), field: field.name() }),
            },
        }
    }
    cfg.field = field;
    cfg.validate()?;
    Ok(cfg)
}

impl<T: Real> FromStr for RunConfig<T> {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_config(s)
    }
}

/// The resolved configuration as a document `parse_config` accepts.
impl<T: Real> fmt::Display for RunConfig<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [nx, ny, nz] = self.cells;
        writeln!(f, "scheme={}", self.scheme)?;
        writeln!(f, "field={}", self.field.name())?;
        writeln!(f, "mesh={nx}x{ny}x{nz}")?;
        writeln!(f, "domain.xy={}", self.half_xy)?;
        writeln!(f, "domain.z={}", self.half_z)?;
        writeln!(f, "phases={}", join_phases(&self.phases))?;
        if let Ok(ph) = self.time_phases() {
            let steps: Vec<String> = ph.iter().map(|p| p.n_steps.to_string()).collect();
            writeln!(f, "# resolved steps per phase: {}", steps.join(", "))?;
        }
        writeln!(f, "gamma={}", self.lagrange.gamma)?;
        writeln!(f, "switch_rule={}", self.lagrange.switch_rule)?;
        writeln!(f, "solver={}", self.lagrange.solver)?;
        writeln!(f, "solver.verify_every={}", self.verify_every)?;
        writeln!(f, "newton.abs_tol={:e}", self.newton.abs_tol)?;
        writeln!(f, "newton.rel_tol={:e}", self.newton.rel_tol)?;
        writeln!(f, "newton.max_iter={}", self.newton.max_iter)?;
        writeln!(f, "newton.damping={}", self.newton.damping)?;
        writeln!(f, "newton.max_halvings={}", self.max_halvings)?;
        writeln!(f, "output.dir={}", self.output.dir.display())?;
        writeln!(f, "output.cadence={}", self.output.cadence)?;
        writeln!(f, "output.csv={}", self.output.csv)?;
        writeln!(f, "output.vtk={}", self.output.vtk)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "quadrature={}", self.quadrature)?;
        match &self.field {
            InitialField::Hopf(p) => {
                writeln!(f, "hopf.omega1={}", p.omega1)?;
                writeln!(f, "hopf.omega2={}", p.omega2)?;
                writeln!(f, "hopf.s={}", p.s)
            }
            InitialField::E3(p) => {
                writeln!(f, "e3.b0={}", p.b0)?;
                writeln!(f, "e3.k={}", p.k)?;
                writeln!(f, "e3.a={}", p.a)?;
                writeln!(f, "e3.l={}", p.l)?;
                let c: Vec<String> = p.centers.iter().map(|c| format!("{} {} {}", c[0], c[1], c[2])).collect();
                writeln!(f, "e3.centers={}", c.join("; "))
            }
        }
    }
}
