//! The `hyperimm` binary: exit codes, determinism and report structure.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hyperimm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperimm"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn surface_is_deterministic_and_has_gauss_bonnet_area() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let oa = hyperimm(a.path(), &["surface", "--genus", "2", "--refine", "3", "--json"]);
    let ob = hyperimm(b.path(), &["surface", "--genus", "2", "--refine", "3", "--json"]);
    assert_eq!(oa.status.code(), Some(0));
    let (mut ra, mut rb) = (json_of(&oa), json_of(&ob));
    for r in [&mut ra, &mut rb] {
        r.as_object_mut().unwrap().remove("output");
        r.as_object_mut().unwrap().remove("summary");
    }
    assert_eq!(ra, rb);
    assert!(ra["area_relative_error"].as_f64().unwrap() < 2e-3);
    let fa = std::fs::read(a.path().join("genus2_level3.hsurf")).unwrap();
    let fb = std::fs::read(b.path().join("genus2_level3.hsurf")).unwrap();
    assert_eq!(fa, fb);
    assert!(fa.starts_with(b"HSURF 1\n"));
    let manifest: Value = serde_json::from_slice(&std::fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "surface");
    assert_eq!(manifest["config"]["refine"], 3);
}

#[test]
fn usage_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(hyperimm(d.path(), &["surface", "--genus", "1"]).status.code(), Some(2));
    assert_eq!(hyperimm(d.path(), &["surface", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(hyperimm(d.path(), &["verify", "--suite", "nonsense"]).status.code(), Some(2));
    assert_eq!(hyperimm(d.path(), &["minimize", "--refine", "1", "--eps-schedule", "1,2,0"]).status.code(), Some(2));
    assert_eq!(hyperimm(d.path(), &["decompose", "--field", "/nonexistent/phi.hfield"]).status.code(), Some(2));
}

#[test]
fn config_file_is_layered_under_flags() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.json");
    std::fs::write(&cfg, r#"{"genus": 3, "refine": 1}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let r = json_of(&hyperimm(d.path(), &["--config", c, "surface", "--json"]));
    assert_eq!(r["genus"], 3);
    let r = json_of(&hyperimm(d.path(), &["--config", c, "surface", "--refine", "0", "--json"]));
    assert_eq!(r["level"], 0);
    std::fs::write(&cfg, r#"{"genus": 2, "unknown": true}"#).unwrap();
    assert_eq!(hyperimm(d.path(), &["--config", c, "surface"]).status.code(), Some(2));
}

#[test]
fn verify_report_matches_the_schema() {
    let d = tempfile::tempdir().unwrap();
    let out = hyperimm(d.path(), &["verify", "--suite", "schatten", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json_of(&out);
    let suites = report["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 1);
    assert_eq!(suites[0]["suite"], "schatten");
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/verify-report.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    let written: Value = serde_json::from_slice(&std::fs::read(d.path().join("verify.json")).unwrap()).unwrap();
    assert!(validator.is_valid(&written));
}

#[test]
fn corrupted_gauss_data_fails_in_integrate() {
    let d = tempfile::tempdir().unwrap();
    let out = hyperimm(d.path(), &["roundtrip", "--refine", "2", "--corrupt-gauss", "1.2", "--json"]);
    assert_eq!(out.status.code(), Some(4));
    let r = json_of(&out);
    assert_eq!(r["error"]["stage"], "integrate");
    assert_eq!(r["error"]["kind"], "inconsistent");
}

#[test]
fn reconstruct_decompose_minimize_chain() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    let out = hyperimm(dir, &["reconstruct", "--refine", "2", "--q-coeffs", "0.03,0,0,0,0,0", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json_of(&out)["relation_residual"].as_f64().unwrap() < 1e-8);

    let phi = dir.join("phi.hfield");
    let out = hyperimm(dir, &["decompose", "--refine", "2", "--field", phi.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let q0 = json_of(&out)["q"][0].as_f64().unwrap();
    assert!((q0 - 0.03).abs() < 1e-9);

    let rep = dir.join("representation.json");
    let init = dir.join("developed.hmap");
    let out = hyperimm(
        dir,
        &["minimize", "--refine", "2", "--rep", rep.to_str().unwrap(), "--init", init.to_str().unwrap(), "--json"],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = json_of(&out);
    assert_eq!(r["converged"], true);
    assert!(r["stages"][0]["trace"].as_array().unwrap().len() >= 2);
    let csv = std::fs::read_to_string(dir.join("energy_trace.csv")).unwrap();
    assert!(csv.starts_with("stage,eps,step,energy\n"));
}

#[test]
fn minimize_failure_reports_diagnostics() {
    let d = tempfile::tempdir().unwrap();
    let out = hyperimm(d.path(), &["minimize", "--refine", "1", "--max-iters", "1", "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(3));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["error"]["kind"], "numerical");
    assert!(r["stages"].is_array());
}

#[test]
fn fuchsian_round_trip_via_cli() {
    let d = tempfile::tempdir().unwrap();
    let out = hyperimm(d.path(), &["roundtrip", "--refine", "2", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json_of(&out);
    assert!(r["phi_error"].as_f64().unwrap() < 0.06);
    assert!(r["energy_gap"].as_f64().unwrap() < 1e-3);
}
