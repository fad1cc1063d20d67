//! Config-driven batch run, the library side of `magdirac solve`. Loads a
//! JSON config, solves, writes the report, snapshot and diagnostics, then
//! reloads the snapshot and re-runs the diagnostics on it.

use std::path::PathBuf;

use magdirac::cli::cmd_solve;
use magdirac::config::RunConfig;
use magdirac::diagnostics::run_diagnostics;
use magdirac::snapshot::read_fields;
use magdirac::Result;

pub fn run_example() -> Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/h_surface.json");
    let cfg = RunConfig::load(&path)?;
    let out = std::env::temp_dir().join(format!("magdirac-config-run-{}", std::process::id()));
    let code = cmd_solve(&cfg, &out, false)?;
    println!("exit code {code}, outputs in {}", out.display());

    let model = cfg.model()?;
    let (phi, psi) = read_fields(&out.join("fields.csv"), &model.lattice, &model.target)?;
    let report = run_diagnostics(&model, &phi, &psi, &cfg.diagnostics, cfg.seed)?;
    println!("reloaded snapshot: all checks passed = {}", report.passed());
    std::fs::remove_dir_all(&out)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
