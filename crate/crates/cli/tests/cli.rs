use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modal_stream::foep::EigenspaceState;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_modal-stream"));
    c.env("MODAL_STREAM_THREADS", "2");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a case into `out` and returns the single run directory created.
fn run_case(out: &Path, case: &str, extra: &[&str]) -> PathBuf {
    let out_s = out.to_str().unwrap();
    let mut args = vec!["run", case, "--out", out_s];
    args.extend_from_slice(extra);
    ok(&args);
    let mut dirs: Vec<PathBuf> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs.pop().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL: [&str; 4] = ["--set", "sim.ensemble_size=2", "--set", "sim.duration=60"];

#[test]
fn identical_inputs_give_identical_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_case(&tmp.path().join("a"), "cs1", &[&["--seed", "7"][..], &SMALL].concat());
    let b = run_case(&tmp.path().join("b"), "cs1", &[&["--seed", "7"][..], &SMALL].concat());
    assert_eq!(a.file_name(), b.file_name());
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name:?}");
    }

    let m = manifest(&a);
    assert_eq!(m["status"], "complete");
    assert_eq!(m["seed"], 7);
    assert!(m["timings"].is_null());
    let listed: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    for name in &names {
        let name = name.to_str().unwrap();
        assert!(name == "manifest.json" || listed.contains(&name), "{name} missing from manifest");
    }
    for required in ["responses.csv", "modes_final.csv", "mac_convergence.csv", "psd_physical.csv", "psd_modal.csv"] {
        assert!(listed.contains(&required), "{required}");
    }

    let out = ok(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--json"]);
    let cmp: Value = serde_json::from_str(&out).unwrap();
    for mode in cmp["modes"].as_array().unwrap() {
        assert_eq!(mode["mac_delta"], 0.0);
        assert_eq!(mode["freq_delta_hz"], 0.0);
    }
}

#[test]
fn snapshot_restores_eigenspace() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_case(tmp.path(), "cs1", &[&SMALL[..], &["--record-timings"]].concat());
    let m = manifest(&dir);
    let bytes = hex::decode(m["snapshot"]["eigenspace_hex"].as_str().unwrap()).unwrap();
    let state = EigenspaceState::from_bytes(&bytes).unwrap();
    assert_eq!(state.dim(), 3);
    assert_eq!(state.count, m["snapshot"]["sample"].as_u64().unwrap());
    assert!(m["timings"]["identify"].as_f64().unwrap() > 0.0);
}

#[test]
fn batch_and_recursive_runs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let rec = run_case(&tmp.path().join("r"), "cs1", &SMALL);
    let bat = run_case(&tmp.path().join("b"), "cs1", &[&SMALL[..], &["--set", "identification.method=batch"]].concat());
    let out = ok(&["compare", rec.to_str().unwrap(), bat.to_str().unwrap(), "--json"]);
    let cmp: Value = serde_json::from_str(&out).unwrap();
    for mode in cmp["modes"].as_array().unwrap() {
        assert!(mode["mac_delta"].as_f64().unwrap().abs() < 0.02, "{mode}");
    }
}

#[test]
fn comparing_different_fixtures_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_case(&tmp.path().join("a"), "cs1", &SMALL);
    let b = run_case(&tmp.path().join("b"), "cs2", &[&SMALL[..], &["--set", "baseline.real=false"]].concat());
    let out = run(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("incompatible fixtures"));
}

#[test]
fn cs2_summary_meets_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_case(tmp.path(), "cs2", &[]);
    let m = manifest(&dir);
    let mac: Vec<f64> = m["summary"]["median_mac"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (v, floor) in mac.iter().zip([0.97, 0.97, 0.95]) {
        assert!(*v >= floor, "{mac:?}");
    }
    assert!(m["summary"]["median_baseline_mac"].is_array());
}

#[test]
fn config_file_and_flags_combine() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# short run\nsim.ensemble_size = 1\nsim.duration = 40\nfoep.forgetting = 0.999\n").unwrap();
    let dir = run_case(&tmp.path().join("out"), "cs1", &["--config", cfg.to_str().unwrap(), "--seed", "3", "--per-sample"]);
    let m = manifest(&dir);
    assert_eq!(m["config"]["foep.forgetting"], "0.999");
    assert_eq!(m["config"]["sim.seed"], "3");
    let outputs = fs::read_to_string(dir.join("outputs.csv")).unwrap();
    let header = outputs.lines().next().unwrap();
    assert!(header.starts_with("k,phi_0_0,") && header.ends_with(",mac2,status"), "{header}");
    assert_eq!(outputs.lines().count() - 1, 2000 - 200);
}

#[test]
fn bad_inputs_exit_with_stage() {
    let out = run(&["run", "cs9"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("configure") && err.contains("cs9"), "{err}");

    let out = run(&["run", "cs1", "--set", "jad.tol=fast"]);
    assert!(!out.status.success());

    let out = bin().args(["run", "cs1"]).env("MODAL_STREAM_THREADS", "0").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn simulate_prints_series() {
    let out = ok(&["simulate", "cs2", "--duration", "2", "--seed", "1"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "t,ch0,ch1,ch2");
    assert_eq!(lines.len(), 1 + 100);
    assert_eq!(out, ok(&["simulate", "cs2", "--duration", "2", "--seed", "1"]));
    assert!(!run(&["simulate", "nowhere"]).status.success());
}
