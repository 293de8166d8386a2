use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use magrelax::config::RunConfig;
use magrelax::output::{ensure_dir, write_file};
use magrelax::run::{invariant_checks, load_config, run_simulation};
use magrelax::{Error, SchemeKind};

#[derive(Parser)]
#[command(name = "magrelax", version, about = "Magneto-frictional relaxation with finite element exterior calculus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run {
        config: PathBuf,
        /// Override a key, e.g. `--set output.cadence=1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the first steps of a configuration and check the invariants.
    Check {
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run all three schemes on one configuration.
    Compare {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn run(config: PathBuf, set: Vec<String>) -> Result<ExitCode, Error> {
    let cfg: RunConfig<f64> = load_config(&config, &set)?;
    let out = run_simulation(&cfg)?;
    let (first, last) = (out.initial(), out.last());
    println!(
        "{} / {}: t = {}, E = {:.6e} (E0 = {:.6e}), H = {:.6e} (H0 = {:.6e}), output in {}",
        cfg.scheme,
        cfg.field.name(),
        last.t,
        last.energy,
        first.energy,
        last.helicity,
        first.helicity,
        cfg.output.dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn check(config: PathBuf, steps: usize, set: Vec<String>) -> Result<ExitCode, Error> {
    let mut cfg: RunConfig<f64> = load_config(&config, &set)?;
    cfg.truncate_steps(steps)?;
    cfg.output.csv = false;
    cfg.output.vtk = false;
    let out = run_simulation(&cfg)?;
    let checks = invariant_checks(&out);
    for c in &checks {
        println!("{c}");
    }
    Ok(if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn compare(config: PathBuf, set: Vec<String>) -> Result<ExitCode, Error> {
    let base: RunConfig<f64> = load_config(&config, &set)?;
    let root = base.output.dir.clone();
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = SchemeKind::ALL
            .iter()
            .map(|&kind| {
                let mut cfg = base.clone();
                cfg.scheme = kind;
                cfg.output.dir = root.join(kind.name());
                s.spawn(move || run_simulation(&cfg).map(|o| (kind, o.initial().clone(), o.last().clone())))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });
    let mut summary = String::from("scheme,t,energy,energy_ratio,helicity,helicity_drift\n");
    for r in results {
        let (kind, first, last) = r?;
        let ratio = last.energy / first.energy;
        let drift = (last.helicity - first.helicity).abs();
        println!(
            "{:<16} E = {:.6e}  E/E0 = {:.4e}  H = {:.6e}  |H - H0| = {:.3e}",
            kind.name(),
            last.energy,
            ratio,
            last.helicity,
            drift
        );
        summary.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            kind.name(),
            last.t,
            last.energy,
            ratio,
            last.helicity,
            drift
        ));
    }
    ensure_dir(&root)?;
    write_file(&root.join("summary.csv"), &summary)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, set } => run(config, set),
        Command::Check { config, steps, set } => check(config, steps, set),
        Command::Compare { config, set } => compare(config, set),
    };
    // messages already embed their causes
    result.unwrap_or_else(|e| {
        error!("{e}");
        ExitCode::from(2)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &std::path::Path, body: &str) -> PathBuf {
        let path = dir.join("run.cfg");
        std::fs::write(&path, body).unwrap();
        path
    }

    const SMALL: &str = "scheme=projection\nfield=hopf\nmesh=3x3x4\nphases=dt=1 tau=1 steps=4\noutput.vtk=false\n";

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from(["magrelax", "check", "a.cfg", "--steps", "3", "--set", "gamma=1"]).unwrap();
        match cli.command {
            Command::Check { steps, set, .. } => assert_eq!((steps, set), (3, vec!["gamma=1".to_string()])),
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["magrelax", "frobnicate"]).is_err());
    }

    #[test]
    fn run_and_check() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path(), SMALL);
        let out = tmp.path().join("out");
        let set = vec![format!("output.dir={}", out.display())];
        assert_eq!(run(cfg.clone(), set).unwrap(), ExitCode::SUCCESS);
        assert!(out.join("timeseries.csv").exists() && out.join("resolved_config.txt").exists());
        assert_eq!(check(cfg.clone(), 2, vec!["scheme=lm".into()]).unwrap(), ExitCode::SUCCESS);
        // an impossible Newton budget rejects the first step
        let err = check(cfg, 2, vec!["newton.max_iter=1, newton.abs_tol=1e-30, newton.rel_tol=1e-30".into()]);
        assert!(matches!(err, Err(Error::Step { step: 1, .. })));
    }

    #[test]
    fn bad_key_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path(), SMALL);
        let err = run(cfg, vec!["colour=red".into()]).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn compare_writes_summary() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path(), SMALL);
        let out = tmp.path().join("cmp");
        assert_eq!(compare(cfg, vec![format!("output.dir={}", out.display())]).unwrap(), ExitCode::SUCCESS);
        let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 4);
        for k in SchemeKind::ALL {
            assert!(out.join(k.name()).join("timeseries.csv").exists());
            assert!(summary.contains(k.name()));
        }
    }
}
