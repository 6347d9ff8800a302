use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lorenz-bif"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn equilibria_at_28() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["equilibria", "--r", "28", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let eqs = read_json(&dir.path().join("equilibria.json"));
    let eqs = eqs.as_array().unwrap();
    assert_eq!(eqs.len(), 3);
    for e in eqs {
        assert!(e["location"].is_object());
        assert_eq!(e["eigenvalues"].as_array().unwrap().len(), 3);
        assert!(e["classification"].is_string());
    }
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "equilibria");
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"].as_str().unwrap().ends_with("equilibria.json") && f["rows"] == 3));
    assert!(files.iter().any(|f| f["path"].as_str().unwrap().ends_with("config.resolved")));
    for f in files {
        assert!(Path::new(f["path"].as_str().unwrap()).exists());
    }
}

#[test]
fn invalid_parameter_is_a_usage_error_without_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = run(&["equilibria", "--r", "28", "--sigma", "-1", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
    assert!(!out_dir.join("manifest.json").exists());
}

#[test]
fn unknown_subcommand_and_flag() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = run(&["equilibria", "--r", "28", "--rho", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_one_without_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["homoclinic-search", "--bracket", "20,22", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bracket"));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# test\nsigma = 16\nseed = 4\n").unwrap();
    let out = run(&[
        "equilibria",
        "--r",
        "28",
        "--config",
        conf.to_str().unwrap(),
        "--sigma",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config"]["sigma"], 10.0);
    assert_eq!(manifest["config"]["seed"], 4);
    let resolved = std::fs::read_to_string(dir.path().join("config.resolved")).unwrap();
    assert!(resolved.contains("sigma = 10.0"));
    assert!(resolved.contains("seed = 4"));
}

#[test]
fn bad_config_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (text, needle) in [("t_max = -5\n", "t_max"), ("rho = 28\n", "rho"), ("\nb = x\n", "line 2")] {
        let conf = dir.path().join("bad.conf");
        std::fs::write(&conf, text).unwrap();
        let out = run(&["equilibria", "--r", "28", "--config", conf.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(needle), "{text}");
    }
}

#[test]
fn resolved_config_reproduces_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = run(&["return-map", "--r", "28", "--n", "300", "--tol-rel", "1e-9", "--out", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let conf = a.join("config.resolved");
    let out = run(&["return-map", "--r", "28", "--n", "300", "--config", conf.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let ca = std::fs::read(a.join("return_map.csv")).unwrap();
    let cb = std::fs::read(b.join("return_map.csv")).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert!(text.starts_with("zmax_i,zmax_next\n"));
    assert_eq!(text.lines().count(), 300);
}

#[test]
fn cycle_point_mode_at_350() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "cycle",
        "--r",
        "350",
        "--seed-mode",
        "point",
        "--point",
        "22.35,-52.38,349",
        "--returns",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let o = read_json(&dir.path().join("cycle.json"));
    for key in ["anchor", "period", "multipliers", "stability", "symmetric", "signature"] {
        assert!(!o[key].is_null(), "{key}");
    }
    assert_eq!(o["stability"], "stable");
    assert_eq!(o["symmetric"], true);
}

#[test]
fn sweep_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep", "--r-from", "10", "--r-to", "12", "--step", "1", "--transient", "20", "--total", "100", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(lines.next(), Some("r,lam1,lam2,lam3,verdict,n_clusters"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|l| l.contains(",fixed-point,")));
    assert!(std::fs::read_to_string(dir.path().join("sweep_zmax.csv")).unwrap().starts_with("r,zmax\n"));
}

#[test]
fn report_out_may_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("claims.json");
    // the cheap claims only; the full report is exercised by the acceptance run
    let skip = "saddle-cycles,saddle-cycles-shrink,chaos-window,periodicity-windows,fractal-structure,\
unique-stable-cycle,ms-no-saddle-cycles,ms-single-contour,ms-return-map,ms-r4,ms-symmetry-breaking,\
ms-subharmonic-cascade,g-stable-cycles,g-period-doubling,g-saddle-foci,g-stable-cycles-above-ra,g-two-stable-cycles,\
separatrices-attracted-below-r1,homoclinic-r1,separatrices-cross-above-r1,fate-transition-r2";
    let out = run(&["scenario-report", "--skip", skip, "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&target);
    let claims = report["claims"].as_array().unwrap();
    assert_eq!(claims.len(), 5);
    assert!(claims.iter().all(|c| c["verdict"] == "supported"));
    assert!(dir.path().join("manifest.json").exists());
}
