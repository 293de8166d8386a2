//! Fully discrete magneto-frictional time stepping.
//!
//! Three schemes share one Newton driver and one cell-by-cell assembler:
//!
//! * [`SchemeKind::NonConservative`]: Crank-Nicolson on `(B, E, j)`,
//!   energy-decreasing, helicity not preserved.
//! * [`SchemeKind::Projection`]: adds the L2 projection `H` of `B` onto
//!   H(curl) and the velocity `u`; energy-decreasing and helicity-preserving.
//! * [`SchemeKind::LagrangeMultiplier`]: implicit Euler on the potential
//!   `A` with scalar multipliers enforcing the energy law and the global
//!   helicity; the linearised saddle systems are solved by preconditioned
//!   FGMRES.
//!
//! `B` is never an unknown: it is eliminated through `B^{n+1} = B^n - dt
//! curl E` (Crank-Nicolson schemes) or `B = curl A`, both of which keep the
//! discrete divergence exactly constant.

mod assembler;
mod kernels;
mod newton;

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use thiserror::Error;

use assembler::{Block, CellAssembler};
use kernels::{lm_out, LagrangeParams, LocalConsts, StepParams};
pub use newton::{newton_solve, NewtonConfig, NewtonOutcome, NonlinearSystem};

use crate::diagnostics::{current, Diagnostics, DiagnosticsError};
use crate::feec::{FeecError, FieldCoefficients, OperatorSet, SpaceKind};
use crate::linalg::{
    fgmres, BlockPreconditioner, BlockSaddleSystem, DenseLu, DirectSolver, LinalgError, SaddleOperator, SolverConfig,
};
use crate::scalar::{norm2, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("step from t = {t} with dt = {dt} rejected after {halvings} halvings: {source}")]
    StepRejected {
        t: f64,
        dt: f64,
        halvings: usize,
        #[source]
        source: Box<SchemeError>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("state was initialised for the {got} scheme, stepper runs {expected}")]
    StateMismatch { expected: SchemeKind, got: SchemeKind },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Feec(#[from] FeecError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

impl SchemeError {
    /// Failures that a smaller time step may cure.
    fn recoverable(&self) -> bool {
        matches!(self, SchemeError::NewtonDiverged { .. } | SchemeError::Linalg(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    NonConservative,
    Projection,
    LagrangeMultiplier,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] =
        [SchemeKind::NonConservative, SchemeKind::Projection, SchemeKind::LagrangeMultiplier];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::NonConservative => "nonconservative",
            SchemeKind::Projection => "projection",
            SchemeKind::LagrangeMultiplier => "lagrange",
        }
    }

    /// Whether the scheme is designed to preserve helicity.
    pub fn conserves_helicity(self) -> bool {
        self != SchemeKind::NonConservative
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nonconservative" | "non-conservative" | "nc" => Ok(SchemeKind::NonConservative),
            "projection" | "proj" => Ok(SchemeKind::Projection),
            "lagrange" | "lagrange-multiplier" | "lm" => Ok(SchemeKind::LagrangeMultiplier),
            other => Err(SchemeError::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// A run of `n_steps` equal steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimePhase<T> {
    pub dt: T,
    pub tau: T,
    pub n_steps: usize,
}

impl<T: Real> TimePhase<T> {
    pub fn new(dt: T, tau: T, n_steps: usize) -> Result<Self, SchemeError> {
        let p = Self { dt, tau, n_steps };
        p.validate()?;
        Ok(p)
    }

    /// Enough steps of size `dt` to reach `t_end` from `t_start`.
    pub fn until(dt: T, tau: T, t_start: T, t_end: T) -> Result<Self, SchemeError> {
        if !(dt > T::zero()) {
            return Err(SchemeError::Config("phase dt must be positive".into()));
        }
        let steps = ((t_end - t_start) / dt).ceil().to_f64_lossy();
        if !(steps >= 1.0) {
            return Err(SchemeError::Config(format!(
                "phase end time {} does not lie after {}",
                t_end.to_f64_lossy(),
                t_start.to_f64_lossy()
            )));
        }
        Self::new(dt, tau, steps as usize)
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(SchemeError::Config("phase dt must be positive".into()));
        }
        if !(self.tau > T::zero() && self.tau.is_finite()) {
            return Err(SchemeError::Config("phase tau must be positive".into()));
        }
        if self.n_steps == 0 {
            return Err(SchemeError::Config("phase needs at least one step".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> T {
        self.dt * T::from_usize_lossy(self.n_steps)
    }
}

/// Which multiplier equations the Lagrange scheme solves in a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagrangeMode {
    /// Energy law and helicity constraint.
    Full,
    /// `lambda_E = 0`, helicity constraint only.
    Reduced,
}

/// Reading of the energy-rate switching test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchRule {
    /// Full system when `|dE/dt| < gamma`.
    Magnitude,
    /// Full system when `dE/dt < gamma` (signed).
    Literal,
}

impl FromStr for SwitchRule {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "magnitude" => Ok(SwitchRule::Magnitude),
            "literal" => Ok(SwitchRule::Literal),
            other => Err(SchemeError::Config(format!("unknown switch rule '{other}'"))),
        }
    }
}

impl fmt::Display for SwitchRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwitchRule::Magnitude => "magnitude",
            SwitchRule::Literal => "literal",
        })
    }
}

/// Solver for the linearised multiplier saddle systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaddleSolver {
    /// FGMRES with the block factorisation preconditioner.
    Block,
    /// Dense LU of the monolithic system.
    Dense,
}

impl FromStr for SaddleSolver {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "block" | "fgmres" => Ok(SaddleSolver::Block),
            "dense" | "direct" => Ok(SaddleSolver::Dense),
            other => Err(SchemeError::Config(format!("unknown solver '{other}'"))),
        }
    }
}

impl fmt::Display for SaddleSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SaddleSolver::Block => "block",
            SaddleSolver::Dense => "dense",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeConfig<T> {
    pub gamma: T,
    pub switch_rule: SwitchRule,
    pub solver: SaddleSolver,
    /// Compare every block solve against a dense monolithic solve.
    pub verify_monolithic: bool,
}

impl<T: Real> Default for LagrangeConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(9e-5),
            switch_rule: SwitchRule::Magnitude,
            solver: SaddleSolver::Block,
            verify_monolithic: false,
        }
    }
}

/// Discrete fields carried between steps. Half-step unknowns of the
/// Crank-Nicolson schemes are kept as the Newton initial guess.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState<T> {
    pub kind: SchemeKind,
    pub t: T,
    pub b: FieldCoefficients<T>,
    pub e: FieldCoefficients<T>,
    pub j: FieldCoefficients<T>,
    /// Projection and Lagrange schemes.
    pub u: Option<FieldCoefficients<T>>,
    /// Projection scheme.
    pub h: Option<FieldCoefficients<T>>,
    /// Lagrange scheme; `b == curl a` exactly.
    pub a: Option<FieldCoefficients<T>>,
    pub lambda_e: T,
    pub lambda_h: T,
    /// Energy before the last accepted (sub)step.
    pub energy_prev: Option<T>,
    /// `(E^{n+1} - E^n) / dt` of the last accepted (sub)step.
    pub energy_rate: Option<T>,
    /// Helicity imposed by the Lagrange scheme.
    pub helicity_ref: Option<T>,
    pub steps: usize,
}

impl<T: Real> SchemeState<T> {
    /// Initial state from a solenoidal `B`. The Lagrange scheme recovers
    /// its potential and replaces `B` by `curl A`.
    pub fn new(diag: &Diagnostics<'_, T>, kind: SchemeKind, b0: FieldCoefficients<T>) -> Result<Self, SchemeError> {
        let ops = diag.ops();
        b0.expect(SpaceKind::Hdiv)?;
        let (b, a, helicity_ref) = if kind == SchemeKind::LagrangeMultiplier {
            let a = diag.recover_potential(&b0)?;
            let b = FieldCoefficients::new(&ops.hdiv, ops.apply_curl(&a.values))?;
            let h = ops.mcd.bilinear(&a.values, &b.values);
            (b, Some(a), Some(h))
        } else {
            (b0, None, None)
        };
        let j = current(ops, &b)?;
        let h = (kind == SchemeKind::Projection).then(|| ops.l2_project_div_to_curl(&b)).transpose()?;
        let u = (kind != SchemeKind::NonConservative).then(|| FieldCoefficients::zeros(&ops.hdiv));
        Ok(Self {
            kind,
            t: T::zero(),
            b,
            e: FieldCoefficients::zeros(&ops.hcurl),
            j,
            u,
            h,
            a,
            lambda_e: T::zero(),
            lambda_h: T::zero(),
            energy_prev: None,
            energy_rate: None,
            helicity_ref,
            steps: 0,
        })
    }

    pub fn energy(&self, ops: &OperatorSet<T>) -> T {
        ops.md.bilinear(&self.b.values, &self.b.values)
    }
}

/// Per-step solver statistics and identity residuals (worst over
/// substeps).
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T> {
    pub dt: T,
    pub substeps: usize,
    pub halvings: usize,
    pub newton_iters: usize,
    pub max_newton_iters: usize,
    /// Requested Lagrange mode.
    pub mode: Option<LagrangeMode>,
    /// Substeps that fell back from the full to the reduced system.
    pub fallbacks: usize,
    /// `|(E, H)| / (|E| |H|)` for the projection scheme.
    pub orthogonality: Option<T>,
    /// Energy-law residual times `dt / max(1, E^n)` (full mode only).
    pub energy_residual: Option<T>,
    /// `|H^{n+1} - H_ref| / max(1, |H_ref|)`.
    pub helicity_residual: Option<T>,
    /// Relative difference between block and monolithic saddle solves.
    pub monolithic_error: Option<T>,
    pub max_fgmres_iters: usize,
    pub max_schur_iters: usize,
}

impl<T: Real> StepReport<T> {
    fn new(dt: T) -> Self {
        Self {
            dt,
            substeps: 0,
            halvings: 0,
            newton_iters: 0,
            max_newton_iters: 0,
            mode: None,
            fallbacks: 0,
            orthogonality: None,
            energy_residual: None,
            helicity_residual: None,
            monolithic_error: None,
            max_fgmres_iters: 0,
            max_schur_iters: 0,
        }
    }
}

fn worst<T: Real>(slot: &mut Option<T>, v: T) {
    *slot = Some(slot.map_or(v, |s| s.max(v)));
}

/// Advances a [`SchemeState`] of one scheme on fixed operators.
pub struct Stepper<'a, T: Real> {
    ops: &'a OperatorSet<T>,
    kind: SchemeKind,
    pub newton: NewtonConfig<T>,
    pub solver: SolverConfig<T>,
    pub lagrange: LagrangeConfig<T>,
    /// Recursive halvings of a failing step before it is rejected.
    pub max_halvings: usize,
    consts: LocalConsts<T>,
    assembler: CellAssembler<T>,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(ops: &'a OperatorSet<T>, kind: SchemeKind) -> Self {
        let blocks: &[Block] = match kind {
            SchemeKind::NonConservative => &[Block::Edge, Block::Edge],
            SchemeKind::Projection => &[Block::Face, Block::Edge, Block::Edge, Block::Edge],
            SchemeKind::LagrangeMultiplier => &[Block::Face, Block::Edge, Block::Edge, Block::Edge],
        };
        Self {
            ops,
            kind,
            newton: NewtonConfig::default(),
            solver: SolverConfig::default(),
            lagrange: LagrangeConfig::default(),
            max_halvings: 3,
            consts: LocalConsts::new(ops),
            assembler: CellAssembler::new(ops, blocks),
        }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn ops(&self) -> &'a OperatorSet<T> {
        self.ops
    }

    /// Number of field unknowns of one Newton system.
    pub fn field_dim(&self) -> usize {
        self.assembler.dim()
    }

    /// Mode the switching rule selects for the next step.
    pub fn select_mode(&self, state: &SchemeState<T>) -> LagrangeMode {
        match state.energy_rate {
            None => LagrangeMode::Full,
            Some(rate) => {
                let full = match self.lagrange.switch_rule {
                    SwitchRule::Magnitude => rate.abs() < self.lagrange.gamma,
                    SwitchRule::Literal => rate < self.lagrange.gamma,
                };
                if full {
                    LagrangeMode::Full
                } else {
                    LagrangeMode::Reduced
                }
            }
        }
    }

    /// One time step of size `dt`, halving on failure.
    pub fn step(&self, state: &mut SchemeState<T>, dt: T, tau: T) -> Result<StepReport<T>, SchemeError> {
        if state.kind != self.kind {
            return Err(SchemeError::StateMismatch { expected: self.kind, got: state.kind });
        }
        TimePhase::new(dt, tau, 1)?;
        let mut report = StepReport::new(dt);
        let mode = (self.kind == SchemeKind::LagrangeMultiplier).then(|| self.select_mode(state));
        report.mode = mode;
        let t0 = state.t;
        self.advance(state, dt, tau, mode, 0, &mut report).map_err(|e| SchemeError::StepRejected {
            t: t0.to_f64_lossy(),
            dt: dt.to_f64_lossy(),
            halvings: report.halvings,
            source: Box::new(e),
        })?;
        state.steps += 1;
        Ok(report)
    }

    fn advance(
        &self,
        state: &mut SchemeState<T>,
        dt: T,
        tau: T,
        mode: Option<LagrangeMode>,
        depth: usize,
        report: &mut StepReport<T>,
    ) -> Result<(), SchemeError> {
        match self.substep(state, dt, tau, mode, report) {
            Ok(()) => Ok(()),
            Err(e) if e.recoverable() && depth < self.max_halvings => {
                warn!(
                    "{} step at t = {} (dt = {}) failed: {e}; halving",
                    self.kind,
                    state.t.to_f64_lossy(),
                    dt.to_f64_lossy()
                );
                report.halvings += 1;
                let half = dt * T::lit(0.5);
                self.advance(state, half, tau, mode, depth + 1, report)?;
                self.advance(state, half, tau, mode, depth + 1, report)
            }
            Err(e) => Err(e),
        }
    }

    fn substep(
        &self,
        state: &mut SchemeState<T>,
        dt: T,
        tau: T,
        mode: Option<LagrangeMode>,
        report: &mut StepReport<T>,
    ) -> Result<(), SchemeError> {
        let e0 = state.energy(self.ops);
        match mode {
            Some(LagrangeMode::Full) => match self.solve_step(state, dt, tau, Some(LagrangeMode::Full), report) {
                Ok(()) => {}
                Err(e) if e.recoverable() => {
                    warn!(
                        "full multiplier system failed at t = {} ({e}); falling back to the helicity constraint only",
                        state.t.to_f64_lossy()
                    );
                    report.fallbacks += 1;
                    self.solve_step(state, dt, tau, Some(LagrangeMode::Reduced), report)?;
                }
                Err(e) => return Err(e),
            },
            other => self.solve_step(state, dt, tau, other, report)?,
        }
        let e1 = state.energy(self.ops);
        state.energy_prev = Some(e0);
        state.energy_rate = Some((e1 - e0) / dt);
        state.t += dt;
        report.substeps += 1;
        Ok(())
    }

    /// Nonlinear system of one step of size `dt` from `state`.
    pub fn system<'s>(
        &'s self,
        state: &SchemeState<T>,
        dt: T,
        tau: T,
        mode: Option<LagrangeMode>,
    ) -> Result<StepSystem<'s, 'a, T>, SchemeError> {
        let params = StepParams { dt, tau };
        let data = match self.kind {
            SchemeKind::NonConservative => SystemData::NonConservative { bn: state.b.values.clone() },
            SchemeKind::Projection => SystemData::Projection { bn: state.b.values.clone() },
            SchemeKind::LagrangeMultiplier => SystemData::Lagrange {
                an: require(&state.a, "a")?.values.clone(),
                energy_n: state.energy(self.ops),
                helicity_ref: state
                    .helicity_ref
                    .ok_or_else(|| SchemeError::Config("Lagrange state lacks a helicity reference".into()))?,
                mode: mode.unwrap_or(LagrangeMode::Full),
            },
        };
        Ok(StepSystem { stepper: self, data, params, stats: SolveStats::default() })
    }

    fn solve_step(
        &self,
        state: &mut SchemeState<T>,
        dt: T,
        tau: T,
        mode: Option<LagrangeMode>,
        report: &mut StepReport<T>,
    ) -> Result<(), SchemeError> {
        let ops = self.ops;
        let mut sys = self.system(state, dt, tau, mode)?;
        let x0 = sys.initial_guess(state)?;
        let out = newton_solve(&mut sys, x0, &self.newton)?;
        debug!(
            "{} t = {} dt = {}: {} Newton iterations, residual {:e}",
            self.kind,
            state.t.to_f64_lossy(),
            dt.to_f64_lossy(),
            out.iterations,
            out.residual.to_f64_lossy()
        );
        report.newton_iters += out.iterations;
        report.max_newton_iters = report.max_newton_iters.max(out.iterations);
        report.max_fgmres_iters = report.max_fgmres_iters.max(sys.stats.max_fgmres);
        report.max_schur_iters = report.max_schur_iters.max(sys.stats.max_schur);
        if let Some(m) = sys.stats.max_monolithic {
            worst(&mut report.monolithic_error, m);
        }
        let x = out.x;
        let fc = |kind: SpaceKind, v: &[T]| FieldCoefficients::new(ops.space(kind), v.to_vec());
        let (ne, nf) = (ops.hcurl.dim(), ops.hdiv.dim());
        let crank_nicolson_update = |e: &[T]| {
            let ce = ops.apply_curl(e);
            state.b.values.iter().zip(&ce).map(|(&b, &c)| b - dt * c).collect::<Vec<T>>()
        };
        match self.kind {
            SchemeKind::NonConservative => {
                let e = &x[..ne];
                let b = crank_nicolson_update(e);
                state.b = fc(SpaceKind::Hdiv, &b)?;
                state.e = fc(SpaceKind::Hcurl, e)?;
                state.j = fc(SpaceKind::Hcurl, &x[ne..2 * ne])?;
            }
            SchemeKind::Projection => {
                let u = &x[..nf];
                let e = &x[nf..nf + ne];
                let j = &x[nf + ne..nf + 2 * ne];
                let h = &x[nf + 2 * ne..nf + 3 * ne];
                let eh = ops.mc.bilinear(e, h);
                let scale = (ops.mc.bilinear(e, e) * ops.mc.bilinear(h, h)).sqrt();
                worst(&mut report.orthogonality, if scale > T::zero() { eh.abs() / scale } else { eh.abs() });
                let b = crank_nicolson_update(e);
                state.b = fc(SpaceKind::Hdiv, &b)?;
                state.u = Some(fc(SpaceKind::Hdiv, u)?);
                state.e = fc(SpaceKind::Hcurl, e)?;
                state.j = fc(SpaceKind::Hcurl, j)?;
                state.h = Some(fc(SpaceKind::Hcurl, h)?);
            }
            SchemeKind::LagrangeMultiplier => {
                let mode = mode.unwrap_or(LagrangeMode::Full);
                let n = nf + 3 * ne;
                let (le, lh) = match mode {
                    LagrangeMode::Full => (x[n], x[n + 1]),
                    LagrangeMode::Reduced => (T::zero(), x[n]),
                };
                let u = &x[..nf];
                let a = &x[nf..nf + ne];
                let e = &x[nf + ne..nf + 2 * ne];
                let j = &x[nf + 2 * ne..n];
                let b = ops.apply_curl(a);
                let e0 = state.energy(ops);
                let e1 = ops.md.bilinear(&b, &b);
                let h_ref = state.helicity_ref.unwrap_or_else(T::zero);
                let h1 = ops.mcd.bilinear(a, &b);
                worst(&mut report.helicity_residual, (h1 - h_ref).abs() / h_ref.abs().max(T::one()));
                if mode == LagrangeMode::Full {
                    let d = sys.dissipation(&x);
                    let law = (e1 - e0) / dt + T::lit(2.0) * tau * d;
                    worst(&mut report.energy_residual, law.abs() * dt / e0.max(T::one()));
                }
                state.b = fc(SpaceKind::Hdiv, &b)?;
                state.u = Some(fc(SpaceKind::Hdiv, u)?);
                state.a = Some(fc(SpaceKind::Hcurl, a)?);
                state.e = fc(SpaceKind::Hcurl, e)?;
                state.j = fc(SpaceKind::Hcurl, j)?;
                state.lambda_e = le;
                state.lambda_h = lh;
            }
        }
        Ok(())
    }
}

fn require<'s, T>(f: &'s Option<FieldCoefficients<T>>, name: &str) -> Result<&'s FieldCoefficients<T>, SchemeError> {
    f.as_ref().ok_or_else(|| SchemeError::Config(format!("state lacks the '{name}' field")))
}

enum SystemData<T> {
    NonConservative { bn: Vec<T> },
    Projection { bn: Vec<T> },
    Lagrange { an: Vec<T>, energy_n: T, helicity_ref: T, mode: LagrangeMode },
}

#[derive(Debug, Clone, Default)]
struct SolveStats<T> {
    max_fgmres: usize,
    max_schur: usize,
    max_monolithic: Option<T>,
}

/// The nonlinear system of one time step. Unknowns are ordered as the
/// scheme's field blocks followed by the active multipliers.
pub struct StepSystem<'s, 'a, T: Real> {
    stepper: &'s Stepper<'a, T>,
    data: SystemData<T>,
    params: StepParams<T>,
    stats: SolveStats<T>,
}

impl<T: Real> StepSystem<'_, '_, T> {
    pub fn field_dim(&self) -> usize {
        self.stepper.assembler.dim()
    }

    pub fn multiplier_dim(&self) -> usize {
        match self.data {
            SystemData::Lagrange { mode: LagrangeMode::Full, .. } => 2,
            SystemData::Lagrange { mode: LagrangeMode::Reduced, .. } => 1,
            _ => 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.field_dim() + self.multiplier_dim()
    }

    /// Previous step's unknowns.
    pub fn initial_guess(&self, state: &SchemeState<T>) -> Result<Vec<T>, SchemeError> {
        let mut x = Vec::with_capacity(self.dim());
        match &self.data {
            SystemData::NonConservative { .. } => {
                x.extend_from_slice(&state.e.values);
                x.extend_from_slice(&state.j.values);
            }
            SystemData::Projection { .. } => {
                x.extend_from_slice(&require(&state.u, "u")?.values);
                x.extend_from_slice(&state.e.values);
                x.extend_from_slice(&state.j.values);
                x.extend_from_slice(&require(&state.h, "h")?.values);
            }
            SystemData::Lagrange { mode, .. } => {
                x.extend_from_slice(&require(&state.u, "u")?.values);
                x.extend_from_slice(&require(&state.a, "a")?.values);
                x.extend_from_slice(&state.e.values);
                x.extend_from_slice(&state.j.values);
                if *mode == LagrangeMode::Full {
                    x.push(state.lambda_e);
                }
                x.push(state.lambda_h);
            }
        }
        Ok(x)
    }

    fn multipliers(&self, x: &[T]) -> (T, T) {
        let n = self.field_dim();
        match self.data {
            SystemData::Lagrange { mode: LagrangeMode::Full, .. } => (x[n], x[n + 1]),
            SystemData::Lagrange { mode: LagrangeMode::Reduced, .. } => (T::zero(), x[n]),
            _ => (T::zero(), T::zero()),
        }
    }

    fn assemble(&self, x: &[T], jacobian: bool) -> assembler::Assembled<T> {
        let st = self.stepper;
        let (ops, k, p) = (st.ops, &st.consts, self.params);
        match &self.data {
            SystemData::NonConservative { bn } => st.assembler.assemble(x, jacobian, 0, 0, |c, xl, out| {
                kernels::nonconservative(ops, k, &ops.gather_faces(c, bn), p, xl, out)
            }),
            SystemData::Projection { bn } => st.assembler.assemble(x, jacobian, 0, 0, |c, xl, out| {
                kernels::projection(ops, k, &ops.gather_faces(c, bn), p, xl, out)
            }),
            SystemData::Lagrange { an, .. } => {
                let (lambda_e, lambda_h) = self.multipliers(x);
                let lp = LagrangeParams { step: p, lambda_e, lambda_h };
                st.assembler.assemble(x, jacobian, lm_out::N_VECS, lm_out::N_SCALARS, |c, xl, out| {
                    kernels::lagrange(ops, k, &ops.gather_edges(c, an), lp, xl, out)
                })
            }
        }
    }

    fn dissipation(&self, x: &[T]) -> T {
        self.assemble(x, false).scalars[lm_out::DISSIPATION]
    }

    fn saddle(&self, asm: assembler::Assembled<T>) -> Result<BlockSaddleSystem<T>, SchemeError> {
        let mode = match self.data {
            SystemData::Lagrange { mode, .. } => mode,
            _ => unreachable!("saddle system of a scheme without multipliers"),
        };
        let mut v = asm.vecs;
        let take = |v: &mut Vec<Vec<T>>, i: usize| std::mem::take(&mut v[i]);
        let (cols, rows) = match mode {
            LagrangeMode::Full => (
                vec![take(&mut v, lm_out::COL_E), take(&mut v, lm_out::COL_H)],
                vec![take(&mut v, lm_out::ROW_E), take(&mut v, lm_out::ROW_H)],
            ),
            LagrangeMode::Reduced => (vec![take(&mut v, lm_out::COL_H)], vec![take(&mut v, lm_out::ROW_H)]),
        };
        Ok(BlockSaddleSystem::new(asm.jac.expect("jacobian requested"), cols, rows)?)
    }

    /// `J(x) v` with the assembled Jacobian.
    pub fn jacobian_apply(&self, x: &[T], v: &[T]) -> Result<Vec<T>, SchemeError> {
        let asm = self.assemble(x, true);
        match self.data {
            SystemData::Lagrange { .. } => {
                let sys = self.saddle(asm)?;
                let mut y = vec![T::zero(); sys.dim()];
                sys.apply_full(v, &mut y);
                Ok(y)
            }
            _ => Ok(asm.jac.expect("jacobian requested").matvec(v)),
        }
    }

    fn direct_solver(&self, a: crate::linalg::CsrMatrix<T>) -> Result<DirectSolver<T>, SchemeError> {
        let st = self.stepper;
        Ok(DirectSolver::new(a, Some(st.assembler.ordering().to_vec()), st.solver.direct_residual)?)
    }
}

impl<T: Real> NonlinearSystem<T> for StepSystem<'_, '_, T> {
    fn residual(&mut self, x: &[T]) -> Result<Vec<T>, SchemeError> {
        let asm = self.assemble(x, false);
        let mut r = asm.r;
        if let SystemData::Lagrange { energy_n, helicity_ref, mode, .. } = self.data {
            let s = &asm.scalars;
            if mode == LagrangeMode::Full {
                let p = self.params;
                r.push((s[lm_out::ENERGY] - energy_n) / p.dt + T::lit(2.0) * p.tau * s[lm_out::DISSIPATION]);
            }
            r.push(s[lm_out::HELICITY] - helicity_ref);
        }
        Ok(r)
    }

    fn solve_jacobian(&mut self, x: &[T], rhs: &[T]) -> Result<Vec<T>, SchemeError> {
        let asm = self.assemble(x, true);
        if !matches!(self.data, SystemData::Lagrange { .. }) {
            let solver = self.direct_solver(asm.jac.expect("jacobian requested"))?;
            return Ok(solver.solve(rhs)?);
        }
        let sys = self.saddle(asm)?;
        let cfg = self.stepper.solver;
        let lm = self.stepper.lagrange;
        let dense = |sys: &BlockSaddleSystem<T>| -> Result<Vec<T>, SchemeError> {
            let m = sys.to_dense();
            let lu = DenseLu::factor(m.clone())?;
            Ok(lu.solve_checked(&m, rhs, cfg.direct_residual)?)
        };
        match lm.solver {
            SaddleSolver::Dense => dense(&sys),
            SaddleSolver::Block => {
                let a_solver = self.direct_solver(sys.a.clone())?;
                let pre = BlockPreconditioner::new(&sys, &a_solver, cfg.schur_maxit);
                let out = fgmres(&SaddleOperator(&sys), &pre, rhs, None, cfg.outer_tol, cfg.outer_maxit)?;
                if !out.converged {
                    return Err(LinalgError::NotConverged {
                        iterations: out.iterations,
                        residual: out.residual.to_f64_lossy(),
                    }
                    .into());
                }
                self.stats.max_fgmres = self.stats.max_fgmres.max(out.iterations);
                self.stats.max_schur = self.stats.max_schur.max(pre.max_inner_iterations());
                if lm.verify_monolithic {
                    let reference = dense(&sys)?;
                    let diff: Vec<T> = out.x.iter().zip(&reference).map(|(&a, &b)| a - b).collect();
                    let rn = norm2(&reference);
                    let rel = norm2(&diff) / if rn > T::zero() { rn } else { T::one() };
                    worst(&mut self.stats.max_monolithic, rel);
                }
                Ok(out.x)
            }
        }
    }
}

/// One non-conservative step with default solver settings.
pub fn step_nonconservative<T: Real>(
    state: &mut SchemeState<T>,
    ops: &OperatorSet<T>,
    phase: &TimePhase<T>,
) -> Result<StepReport<T>, SchemeError> {
    Stepper::new(ops, SchemeKind::NonConservative).step(state, phase.dt, phase.tau)
}

/// One projection step with default solver settings.
pub fn step_projection<T: Real>(
    state: &mut SchemeState<T>,
    ops: &OperatorSet<T>,
    phase: &TimePhase<T>,
) -> Result<StepReport<T>, SchemeError> {
    Stepper::new(ops, SchemeKind::Projection).step(state, phase.dt, phase.tau)
}

/// One Lagrange multiplier step with switching threshold `gamma`.
pub fn step_lagrange<T: Real>(
    state: &mut SchemeState<T>,
    ops: &OperatorSet<T>,
    phase: &TimePhase<T>,
    gamma: T,
) -> Result<StepReport<T>, SchemeError> {
    let mut s = Stepper::new(ops, SchemeKind::LagrangeMultiplier);
    s.lagrange.gamma = gamma;
    s.step(state, phase.dt, phase.tau)
}

#[cfg(test)]
mod tests;
