//! A full simulation: mesh, operators, initial field, phased time loop,
//! sampled diagnostics and output files.

use std::path::Path;

use log::{debug, info};

use crate::config::RunConfig;
use crate::diagnostics::{div_norm, Diagnostics, DiagnosticsRecord};
use crate::feec::{FieldCoefficients, OperatorSet};
use crate::fields::init_field;
use crate::mesh::{CuboidDomain, StructuredHexMesh};
use crate::output::{ensure_dir, snapshot_name, timeseries_csv, write_file, write_vtk};
use crate::scalar::{norm2, Real};
use crate::schemes::{SchemeState, StepReport, Stepper};
use crate::Error;

/// Per accepted step, cheap quantities that are tracked at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSample<T> {
    pub step: usize,
    pub phase: usize,
    pub t: T,
    pub energy: T,
    pub div_norm: T,
    pub b_norm: T,
    /// Exact helicity of the carried potential (Lagrange scheme only).
    pub helicity: Option<T>,
    pub report: StepReport<T>,
}

pub struct RunOutcome<T: Real> {
    /// Sampled records, the initial state first.
    pub records: Vec<DiagnosticsRecord<T>>,
    pub steps: Vec<StepSample<T>>,
    pub state: SchemeState<T>,
    pub ops: OperatorSet<T>,
}

impl<T: Real> RunOutcome<T> {
    pub fn initial(&self) -> &DiagnosticsRecord<T> {
        &self.records[0]
    }

    pub fn last(&self) -> &DiagnosticsRecord<T> {
        self.records.last().expect("initial record present")
    }

    pub fn csv(&self) -> String {
        timeseries_csv(&self.records)
    }
}

pub fn build_operators<T: Real>(cfg: &RunConfig<T>) -> Result<OperatorSet<T>, Error> {
    let domain = CuboidDomain::centered(cfg.half_xy, cfg.half_z)?;
    let [nx, ny, nz] = cfg.cells;
    Ok(OperatorSet::new(StructuredHexMesh::new(domain, nx, ny, nz)?))
}

/// Run `cfg`, writing outputs when enabled. Any rejected step aborts the
/// run.
pub fn run_simulation<T: Real>(cfg: &RunConfig<T>) -> Result<RunOutcome<T>, Error> {
    cfg.validate()?;
    let phases = cfg.time_phases()?;
    let ops = build_operators(cfg)?;
    let writing = cfg.output.csv || cfg.output.vtk;
    let dir = cfg.output.dir.as_path();
    if writing {
        ensure_dir(dir)?;
        write_file(&dir.join("resolved_config.txt"), &cfg.to_string())?;
    }
    let background = cfg.field.background();
    let snapshot = |t: T, b: &FieldCoefficients<T>| -> Result<(), Error> {
        if cfg.output.vtk {
            let title = format!("{} {} t={}", cfg.scheme, cfg.field.name(), t);
            write_vtk(&dir.join(snapshot_name(t)), &ops, b, background, &title)?;
        }
        Ok(())
    };

    let diag = Diagnostics::new(&ops);
    let b0 = init_field(&ops, &cfg.field, cfg.quadrature)?;
    let mut state = SchemeState::new(&diag, cfg.scheme, b0)?;
    let mut stepper = Stepper::new(&ops, cfg.scheme);
    stepper.newton = cfg.newton;
    stepper.lagrange = cfg.lagrange;
    stepper.max_halvings = cfg.max_halvings;

    let sample = |state: &SchemeState<T>, iters| {
        diag.record(state.t, &state.b, state.a.as_ref(), (state.lambda_e, state.lambda_h), iters)
    };
    let mut records = vec![sample(&state, 0)?];
    snapshot(state.t, &state.b)?;
    info!(
        "{} / {}: {} cells, {} phases, E0 = {:e}",
        cfg.scheme,
        cfg.field.name(),
        ops.mesh().n_cells(),
        phases.len(),
        records[0].energy
    );

    let mut steps = Vec::new();
    let mut n = 0;
    for (pi, phase) in phases.iter().enumerate() {
        for k in 0..phase.n_steps {
            n += 1;
            stepper.lagrange.verify_monolithic =
                cfg.lagrange.verify_monolithic || (cfg.verify_every > 0 && n % cfg.verify_every == 0);
            let report = stepper.step(&mut state, phase.dt, phase.tau).map_err(|source| Error::Step {
                step: n,
                phase: pi,
                source,
            })?;
            let helicity = state.a.as_ref().map(|a| ops.mcd.bilinear(&a.values, &state.b.values));
            let iters = report.newton_iters;
            steps.push(StepSample {
                step: n,
                phase: pi,
                t: state.t,
                energy: state.energy(&ops),
                div_norm: div_norm(&ops, &state.b.values),
                b_norm: norm2(&state.b.values),
                helicity,
                report,
            });
            debug!("step {n}: t = {}, E = {:e}, newton {iters}", state.t, steps[n - 1].energy);
            let phase_end = k + 1 == phase.n_steps;
            if n % cfg.output.cadence == 0 || phase_end {
                records.push(sample(&state, iters)?);
                snapshot(state.t, &state.b)?;
            }
        }
        info!("phase {pi} done at t = {}, E = {:e}", state.t, state.energy(&ops));
    }
    if cfg.output.csv {
        write_file(&dir.join("timeseries.csv"), &timeseries_csv(&records))?;
    }
    Ok(RunOutcome { records, steps, state, ops })
}

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Per-step structural invariants of a finished run.
pub fn invariant_checks<T: Real>(out: &RunOutcome<T>) -> Vec<Check> {
    let f = |x: T| x.to_f64_lossy();
    let kind = out.state.kind;
    let mut checks = Vec::new();

    let worst_div = out.steps.iter().map(|s| f(s.div_norm) / f(s.b_norm).max(1.0)).fold(0.0, f64::max);
    checks.push(Check {
        name: "gauss law",
        passed: worst_div <= 1e-11,
        detail: format!("max |div B| / max(1, |B|) = {worst_div:.3e} (bound 1e-11)"),
    });

    let mut e_prev = f(out.initial().energy);
    let mut worst_rise = f64::NEG_INFINITY;
    for s in &out.steps {
        let e = f(s.energy);
        worst_rise = worst_rise.max((e - e_prev) / e_prev.max(1.0));
        e_prev = e;
    }
    checks.push(Check {
        name: "energy decrease",
        passed: worst_rise <= 1e-9,
        detail: format!("max (E[n+1] - E[n]) / max(1, E[n]) = {worst_rise:.3e} (bound 1e-9)"),
    });

    let max_newton = out.steps.iter().map(|s| s.report.max_newton_iters).max().unwrap_or(0);
    checks.push(Check {
        name: "newton iterations",
        passed: max_newton <= 10,
        detail: format!("max {max_newton} per step (bound 10)"),
    });

    if kind.conserves_helicity() {
        let h0 = f(out.initial().helicity);
        let scale = h0.abs().max(1.0);
        let sampled = out.records.iter().map(|r| f(r.helicity));
        let stepped = out.steps.iter().filter_map(|s| s.helicity.map(f));
        let drift = sampled.chain(stepped).map(|h| (h - h0).abs() / scale).fold(0.0, f64::max);
        checks.push(Check {
            name: "helicity conservation",
            passed: drift <= 1e-8,
            detail: format!("max |H - H0| / max(1, |H0|) = {drift:.3e} (bound 1e-8)"),
        });
    }
    if kind == crate::schemes::SchemeKind::Projection {
        let orth = out.steps.iter().filter_map(|s| s.report.orthogonality.map(f)).fold(0.0, f64::max);
        checks.push(Check {
            name: "orthogonality",
            passed: orth <= 1e-12,
            detail: format!("max |(E, H)| / (|E| |H|) = {orth:.3e} (bound 1e-12)"),
        });
    }
    if kind == crate::schemes::SchemeKind::LagrangeMultiplier {
        let hel = out.steps.iter().filter_map(|s| s.report.helicity_residual.map(f)).fold(0.0, f64::max);
        let en = out.steps.iter().filter_map(|s| s.report.energy_residual.map(f)).fold(0.0, f64::max);
        checks.push(Check {
            name: "multiplier identities",
            passed: hel <= 1e-9 && en <= 1e-9,
            detail: format!("helicity residual {hel:.3e}, energy-law residual {en:.3e} (bound 1e-9)"),
        });
    }
    checks
}

/// Parse a configuration file and apply `key=value` overrides on top.
pub fn load_config<T: Real>(path: &Path, overrides: &[String]) -> Result<RunConfig<T>, Error> {
    let mut text =
        std::fs::read_to_string(path).map_err(|source| crate::output::OutputError::Io { path: path.into(), source })?;
    let mut over = String::new();
    for o in overrides {
        over.push_str(o);
        over.push('\n');
    }
    if !over.is_empty() {
        text = merge_overrides(&text, &over);
    }
    Ok(crate::config::parse_config(&text)?)
}

/// Drop entries of `base` whose key appears in `over`, then append
/// `over`.
fn merge_overrides(base: &str, over: &str) -> String {
    let key = |item: &str| item.split_once('=').map(|(k, _)| k.trim().to_string());
    let replaced: Vec<String> = over.lines().flat_map(|l| l.split(',').filter_map(key).collect::<Vec<_>>()).collect();
    let mut out = String::new();
    for line in base.lines() {
        let body = line.split('#').next().unwrap_or("");
        let kept: Vec<&str> = body
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .filter(|item| key(item).is_none_or(|k| !replaced.contains(&k)))
            .collect();
        out.push_str(&kept.join(", "));
        out.push('\n');
    }
    out.push_str(over);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::output::CSV_HEADER;

    fn small(scheme: &str, dir: &Path, extra: &str) -> RunConfig<f64> {
        parse_config(&format!(
            "scheme={scheme}, field=hopf, mesh=3x3x4, phases=dt=1 tau=1 steps=3; dt=10 tau=0.1 steps=2, \
             output.cadence=2, output.dir={}{extra}",
            dir.display()
        ))
        .unwrap()
    }

    #[test]
    fn writes_outputs_deterministically() {
        let tmp = tempfile::tempdir().unwrap();
        for scheme in ["nc", "projection", "lagrange"] {
            let (d1, d2) = (tmp.path().join(format!("{scheme}1")), tmp.path().join(format!("{scheme}2")));
            let out = run_simulation(&small(scheme, &d1, "")).unwrap();
            run_simulation(&small(scheme, &d2, "")).unwrap();
            let csv = std::fs::read(d1.join("timeseries.csv")).unwrap();
            assert_eq!(csv, std::fs::read(d2.join("timeseries.csv")).unwrap(), "{scheme}");
            let text = String::from_utf8(csv).unwrap();
            assert_eq!(text, out.csv());
            assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
            // t = 0, step 2, phase end at step 3, step 4, final step 5
            let ts: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
            assert_eq!(ts, vec![0.0, 2.0, 3.0, 13.0, 23.0]);
            let mut vtk: Vec<String> = std::fs::read_dir(&d1)
                .unwrap()
                .map(|e| e.unwrap().file_name().into_string().unwrap())
                .filter(|n| n.ends_with(".vtk"))
                .collect();
            vtk.sort();
            assert_eq!(vtk.len(), 5);
            let first = std::fs::read_to_string(d1.join(&vtk[0])).unwrap();
            assert!(first.starts_with("# vtk DataFile Version 3.0\n"));
            let resolved = std::fs::read_to_string(d1.join("resolved_config.txt")).unwrap();
            assert_eq!(parse_config::<f64>(&resolved).unwrap(), small(scheme, &d1, ""));
            assert_eq!(out.steps.len(), 5);
            assert_eq!(out.state.steps, 5);
        }
    }

    #[test]
    fn disabled_outputs_write_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("none");
        let out = run_simulation(&small("nc", &dir, ", output.csv=false, output.vtk=false")).unwrap();
        assert!(!dir.exists());
        assert_eq!(out.records.len(), 5);
    }

    #[test]
    fn rejected_step_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small(
            "projection",
            tmp.path(),
            ", newton.max_iter=1, newton.abs_tol=1e-30, newton.rel_tol=1e-30, newton.max_halvings=1, output.vtk=false",
        );
        match run_simulation(&cfg) {
            Err(Error::Step { step: 1, phase: 0, .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("run should fail"),
        }
        assert!(!tmp.path().join("timeseries.csv").exists());
    }

    #[test]
    fn hopf_projection_hundred_steps() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg: RunConfig<f64> = parse_config(&format!(
            "scheme=projection, field=hopf, phases=dt=1 tau=1 steps=100, output.vtk=false, output.dir={}",
            tmp.path().display()
        ))
        .unwrap();
        run_simulation(&cfg).unwrap();
        let text = std::fs::read_to_string(tmp.path().join("timeseries.csv")).unwrap();
        let rows: Vec<Vec<f64>> =
            text.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 11);
        let h0 = rows[0][2];
        for w in rows.windows(2) {
            assert!(w[1][1] <= w[0][1], "energy {} -> {}", w[0][1], w[1][1]);
        }
        for r in &rows {
            assert!((r[2] - h0).abs() <= 1e-9 * h0.abs(), "helicity {h0} -> {}", r[2]);
        }
    }

    #[test]
    fn overrides_replace_keys() {
        let m = merge_overrides("scheme=nc, field=hopf # c\ngamma=1\n", "gamma=2\nscheme=lm\n");
        let cfg: RunConfig<f64> = crate::config::parse_config(&m).unwrap();
        assert_eq!(cfg.lagrange.gamma, 2.0);
        assert_eq!(cfg.scheme, crate::schemes::SchemeKind::LagrangeMultiplier);
    }
}
