use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use magdirac::snapshot::{fields_to_csv, read_fields};
use magdirac::{Lattice, TargetManifold};
use serde_json::{json, Value};

fn magdirac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magdirac"))
        .args(args)
        .env("MAGDIRAC_THREADS", "1")
        .output()
        .expect("run magdirac")
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn random_flat_config(diagnostics: Value) -> Value {
    json!({
        "version": 1,
        "lattice": {"kind": "torus", "n1": 16, "n2": 16},
        "target": {"name": "sphere", "n": 2},
        "init": {
            "map": {"kind": "random-smooth", "point": [0, 0, 1], "amplitude": 0.8, "cutoff": 3},
            "spinor": {"kind": "random-smooth", "amplitude": 1.0, "cutoff": 3}
        },
        "diagnostics": diagnostics,
        "seed": 4
    })
}

#[test]
fn h_surface_solve_writes_outputs_and_its_snapshot_diagnoses_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = configs().join("h_surface.json");
    let o = magdirac(&["solve", "--config", s(&cfg), "--out", s(&out), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "solve_report.json",
        "fields.csv",
        "residuals.csv",
        "diagnostics.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = read_json(&out.join("solve_report.json"));
    assert_eq!(report["status"], "converged");
    assert!(stderr(&o).contains("not compact"));

    // The snapshot reloads bit for bit.
    let lattice = Lattice::square_torus(16).unwrap();
    let target = TargetManifold::flat(3).unwrap();
    let (phi, psi) = read_fields(&out.join("fields.csv"), &lattice, &target).unwrap();
    let text = fields_to_csv(&lattice, &phi, &psi).unwrap();
    assert_eq!(
        text,
        std::fs::read_to_string(out.join("fields.csv")).unwrap()
    );

    let diag_out = tmp.path().join("diag");
    let o = magdirac(&[
        "diagnose",
        "--config",
        s(&cfg),
        "--out",
        s(&diag_out),
        "--quiet",
        s(&out.join("fields.csv")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let entries = read_json(&diag_out.join("diagnose.json"));
    assert_eq!(entries.as_array().unwrap().len(), 1);
}

#[test]
fn missing_target_name_exits_1_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = random_flat_config(json!({}));
    cfg["target"] = json!({"n": 2});
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let o = magdirac(&["solve", "--config", s(&path), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("name"), "{}", stderr(&o));
}

#[test]
fn unknown_key_and_missing_config_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = random_flat_config(json!({}));
    cfg["solve"] = json!({"tol_mpa": 1e-8});
    let path = write_config(tmp.path(), "typo.json", &cfg);
    let o = magdirac(&["solve", "--config", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tol_mpa"), "{}", stderr(&o));

    let o = magdirac(&["solve"]);
    assert_eq!(o.status.code(), Some(1));
    let o = magdirac(&["solve", "--config", s(&tmp.path().join("absent.json"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exhausted_budget_exits_2_and_flags_max_outer() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: Value =
        serde_json::from_str(&std::fs::read_to_string(configs().join("h_surface.json")).unwrap())
            .unwrap();
    cfg["solve"]["max_outer"] = json!(5);
    cfg["diagnostics"] = json!({"stress": false, "divergence": false, "hopf": false,
                                "conformal": false, "gradient": false});
    let path = write_config(tmp.path(), "budget.json", &cfg);
    let out = tmp.path().join("run");
    let o = magdirac(&["solve", "--config", s(&path), "--out", s(&out), "--quiet"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report = read_json(&out.join("solve_report.json"));
    assert_eq!(report["status"], "max-outer");
    assert!(out.join("fields.csv").is_file());
}

#[test]
fn diagnose_on_random_fields_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = random_flat_config(json!({"gradient": false, "conformal": false}));
    let path = write_config(tmp.path(), "random.json", &cfg);
    let o = magdirac(&["diagnose", "--config", s(&path), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("checks failed"));
}

#[test]
fn empty_toggle_set_exits_0_with_a_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = random_flat_config(json!({"stress": false, "divergence": false, "hopf": false,
                                        "conformal": false, "gradient": false}));
    let path = write_config(tmp.path(), "none.json", &cfg);
    let o = magdirac(&[
        "diagnose",
        "--config",
        s(&path),
        "--out",
        s(tmp.path()),
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("no diagnostics enabled"));
    let entries = read_json(&tmp.path().join("diagnose.json"));
    assert!(entries[0]["report"]["checks"]
        .as_array()
        .unwrap()
        .is_empty());
}

#[test]
fn malformed_snapshot_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "site,i1,i2,x,y,phi0\n0,0,0,0,0,not-a-number\n").unwrap();
    let mut cfg = random_flat_config(json!({}));
    cfg["snapshot"] = json!("bad.csv");
    let path = write_config(tmp.path(), "snap.json", &cfg);
    let o = magdirac(&["spectrum", "--config", s(&path), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let cfg = random_flat_config(json!({}));
    let path = write_config(tmp.path(), "plain.json", &cfg);
    let o = magdirac(&[
        "diagnose",
        "--config",
        s(&path),
        "--out",
        s(tmp.path()),
        s(&bad),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

fn spectrum_rows(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn spectrum_lists_kernel_first_and_antiperiodic_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("sphere_spectrum.json");
    let out = tmp.path().join("pp");
    let o = magdirac(&["spectrum", "--config", s(&cfg), "--out", s(&out), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let abs = spectrum_rows(&out.join("spectrum.csv"));
    assert!(abs[..4].iter().all(|l| *l < 1e-8), "{abs:?}");
    assert!(abs[4] > 0.9, "{abs:?}");

    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["spin"] = json!({"phase1": "antiperiodic", "phase2": "periodic"});
    let path = write_config(tmp.path(), "ap.json", &v);
    let out = tmp.path().join("ap");
    let o = magdirac(&[
        "spectrum",
        "--config",
        s(&path),
        "--out",
        s(&out),
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let abs = spectrum_rows(&out.join("spectrum.csv"));
    // k_min = 2π/L · ½ = ½ on the 2π torus.
    assert!(abs.iter().all(|l| *l >= 0.5 - 1e-8), "{abs:?}");
}

#[test]
fn selftest_writes_report_and_help_exits_0() {
    let tmp = tempfile::tempdir().unwrap();
    let o = magdirac(&["selftest", "--seed", "3", "--out", s(tmp.path()), "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    let report = read_json(&tmp.path().join("selftest.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["seed"], 3);

    assert_eq!(magdirac(&["--help"]).status.code(), Some(0));
    assert_eq!(magdirac(&["frobnicate"]).status.code(), Some(1));
}
