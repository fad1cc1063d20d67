//! Batch front end behind the `magdirac` binary.
//!
//! Exit codes: 0 success, 1 config or IO error, 2 non-convergence,
//! 3 checks failed.

mod selftest;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::diagnostics::{run_diagnostics, DiagnosticsReport};
use crate::error::Error;
use crate::snapshot::{self, write_atomic, write_csv};
use crate::solver::{solve_coupled, solve_spinor, SolveStatus};
use crate::surface::requested_threads;

pub use selftest::{run_selftest, SelftestCase, SelftestReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NONCONVERGED: i32 = 2;
pub const EXIT_CHECKS_FAILED: i32 = 3;

const DEFAULT_OUT: &str = "magdirac-out";

#[derive(Debug, Parser)]
#[command(
    name = "magdirac",
    version,
    about = "Magnetic Dirac-harmonic maps on flat lattices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the summary on standard output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the coupled solver and write the report, fields and diagnostics.
    Solve,
    /// Low twisted-Dirac spectrum for the configured map.
    Spectrum,
    /// Run the enabled diagnostics on field snapshots.
    Diagnose {
        /// Snapshot CSV files; defaults to the config's initial fields.
        snapshots: Vec<PathBuf>,
    },
    /// Built-in invariant suite.
    Selftest,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = requested_threads();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return EXIT_CONFIG;
        }
    };
    pool.install(|| match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    })
}

/// Exit code for an error that aborted a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::EigenNotConverged { .. } | Error::StepUnderflow { .. } => EXIT_NONCONVERGED,
        _ => EXIT_CONFIG,
    }
}

fn dispatch(cli: &Cli) -> crate::Result<i32> {
    match &cli.command {
        Command::Solve => {
            let cfg = load(cli)?;
            cmd_solve(&cfg, &out_dir(cli, cfg.out.as_deref()), cli.quiet)
        }
        Command::Spectrum => {
            let cfg = load(cli)?;
            cmd_spectrum(&cfg, &out_dir(cli, cfg.out.as_deref()), cli.quiet)
        }
        Command::Diagnose { snapshots } => {
            let cfg = load(cli)?;
            cmd_diagnose(
                &cfg,
                snapshots,
                &out_dir(cli, cfg.out.as_deref()),
                cli.quiet,
            )
        }
        Command::Selftest => cmd_selftest(cli.seed.unwrap_or(0), cli.out.as_deref(), cli.quiet),
    }
}

fn load(cli: &Cli) -> crate::Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg_out: Option<&Path>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg_out.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> crate::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn warn_all(report: &DiagnosticsReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

/// Solves, then writes `solve_report.json`, `fields.csv` (a snapshot),
/// `residuals.csv` and `diagnostics.json` into `out`.
pub fn cmd_solve(cfg: &RunConfig, out: &Path, quiet: bool) -> crate::Result<i32> {
    let model = cfg.model()?;
    let (phi, psi) = cfg.initial_fields(&model)?;
    let (phi, psi, report) = solve_coupled(&model, phi, psi, &cfg.solve, cfg.seed)?;
    write_json(&out.join("solve_report.json"), &report)?;
    snapshot::write_fields(&out.join("fields.csv"), &model.lattice, &phi, &psi)?;
    let header = ["step", "map_residual", "spinor_residual", "energy"];
    let rows: Vec<(usize, Vec<f64>)> = report
        .residual_history
        .iter()
        .map(|s| (s.step, vec![s.map, s.spinor, s.energy]))
        .collect();
    write_csv(&out.join("residuals.csv"), &header, &rows)?;
    let diag = run_diagnostics(&model, &phi, &psi, &cfg.diagnostics, cfg.seed)?;
    write_json(&out.join("diagnostics.json"), &diag)?;
    warn_all(&diag);
    if report.model_limit {
        eprintln!(
            "warning: target {} is not compact; results lie outside the closed-target theory",
            model.target.label()
        );
    }
    let last = report.final_residuals();
    if !quiet {
        println!(
            "status {:?} after {} iterations: energy {:.6e}, map residual {:.3e}, spinor residual {:.3e}",
            report.status, report.iterations, report.energy.total, last.map, last.spinor
        );
        for c in &diag.checks {
            println!(
                "  {:<24} {:?} ({:.3e} / {:.1e})",
                c.name, c.status, c.value, c.tolerance
            );
        }
    }
    Ok(match report.status {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::MaxOuter | SolveStatus::NoKernel => EXIT_NONCONVERGED,
    })
}

/// Writes `spectrum.csv`: the lowest `k_eigs` eigenvalues sorted by `|λ|`.
pub fn cmd_spectrum(cfg: &RunConfig, out: &Path, quiet: bool) -> crate::Result<i32> {
    let model = cfg.model()?;
    let (phi, _) = cfg.initial_fields(&model)?;
    let spec = solve_spinor(
        &model,
        &phi,
        cfg.solve.k_eigs,
        cfg.solve.tol_spinor,
        cfg.solve.eig_max_iter,
        cfg.seed,
        None,
    )?;
    let header = ["index", "eigenvalue", "abs_eigenvalue", "residual"];
    let rows: Vec<(usize, Vec<f64>)> = spec
        .eigenvalues
        .iter()
        .zip(&spec.residuals)
        .enumerate()
        .map(|(i, (&l, &r))| (i, vec![l, l.abs(), r]))
        .collect();
    write_csv(&out.join("spectrum.csv"), &header, &rows)?;
    if !quiet {
        println!(
            "{} eigenvalues, kernel dimension {} (threshold {:.3e})",
            spec.eigenvalues.len(),
            spec.kernel_dim(),
            spec.kernel_threshold
        );
        for l in &spec.eigenvalues {
            println!("  {l:+.12e}");
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DiagnoseEntry {
    snapshot: Option<String>,
    report: DiagnosticsReport,
}

/// Runs the enabled diagnostics on each snapshot and writes
/// `diagnose.json`. Exit 0 iff no enabled check failed.
pub fn cmd_diagnose(
    cfg: &RunConfig,
    snapshots: &[PathBuf],
    out: &Path,
    quiet: bool,
) -> crate::Result<i32> {
    let model = cfg.model()?;
    let mut inputs = Vec::new();
    if snapshots.is_empty() {
        inputs.push((None, cfg.initial_fields(&model)?));
    }
    for path in snapshots {
        let fields = snapshot::read_fields(path, &model.lattice, &model.target)?;
        inputs.push((Some(path.display().to_string()), fields));
    }
    let mut entries = Vec::new();
    for (name, (phi, psi)) in inputs {
        let report = run_diagnostics(&model, &phi, &psi, &cfg.diagnostics, cfg.seed)?;
        warn_all(&report);
        entries.push(DiagnoseEntry {
            snapshot: name,
            report,
        });
    }
    write_json(&out.join("diagnose.json"), &entries)?;
    let passed = entries.iter().all(|e| e.report.passed());
    if !quiet {
        for e in &entries {
            println!("{}", e.snapshot.as_deref().unwrap_or("<config fields>"));
            for c in &e.report.checks {
                println!(
                    "  {:<24} {:?} ({:.3e} / {:.1e})",
                    c.name, c.status, c.value, c.tolerance
                );
            }
        }
        println!(
            "{}",
            if passed {
                "all checks passed"
            } else {
                "checks failed"
            }
        );
    }
    Ok(if passed { EXIT_OK } else { EXIT_CHECKS_FAILED })
}

/// Runs the built-in suite. The JSON report goes to `out/selftest.json`
/// when an output directory is given and to standard output otherwise.
pub fn cmd_selftest(seed: u64, out: Option<&Path>, quiet: bool) -> crate::Result<i32> {
    let report = run_selftest(seed)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match out {
        Some(dir) => {
            write_atomic(&dir.join("selftest.json"), text.as_bytes())?;
            if !quiet {
                for c in &report.cases {
                    let tag = if c.passed { "PASS" } else { "FAIL" };
                    println!(
                        "{tag} {:<28} {:.3e} (tol {:.1e})",
                        c.name, c.value, c.tolerance
                    );
                }
            }
        }
        None => {
            if !quiet {
                print!("{text}");
            }
        }
    }
    Ok(if report.passed {
        EXIT_OK
    } else {
        EXIT_CHECKS_FAILED
    })
}
