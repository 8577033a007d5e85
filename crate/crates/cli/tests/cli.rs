use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cochain_ext::forms::load_cochain;
use cochain_ext::mesh::read_mesh;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cochain-ext"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("cochain-ext-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn domain_file(dir: &Path, variant: &str) -> PathBuf {
    let p = dir.join("domain.json");
    let spec = serde_json::json!({
        "box": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "h": 0.125,
        "omega": {"type": "annulus", "center": [0.5, 0.5], "inner": 0.15, "outer": 0.35},
        "variant": variant
    });
    std::fs::write(&p, spec.to_string()).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(o.stderr.trim_ascii()).unwrap_or_else(|_| panic!("stderr is not JSON: {:?}", o.stderr))
}

#[test]
fn passing_config_exits_zero_and_writes_artifacts() {
    let out = scratch("probe");
    let o = bin()
        .args(["verify", "--config"])
        .arg(configs().join("c12-topology-probe.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS probe-extends"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(out.join("probe.csv").exists());
}

#[test]
fn failed_assertion_exits_one() {
    // the relative Dirichlet constant is not monotone in degree 1
    let o = bin()
        .args(["poincare", "--config"])
        .arg(configs().join("c07-dirichlet-monotonicity.json"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL dirichlet-monotonicity"));
}

#[test]
fn errors_exit_two_with_structured_json() {
    let dir = scratch("errors");
    let bad = dir.join("bad.json");
    std::fs::write(&bad, r#"{"name": "x", "experiment": {"kind": "verify", "geometries": [], "oops": 1}}"#).unwrap();
    let o = bin().args(["verify", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(error_json(&o)["error"], "config");

    let o = bin()
        .args(["verify", "--config"])
        .arg(configs().join("c08-dilation.json"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(error_json(&o)["message"].as_str().unwrap().contains("does not match"));

    let o = bin().args(["extend", "--domain"]).arg(domain_file(&dir, "mixed")).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(error_json(&o)["message"].as_str().unwrap().contains("--degree"));

    let o = bin().args(["mesh", "--domain"]).arg(dir.join("missing.json")).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(error_json(&o)["error"], "io");
}

#[test]
fn mesh_writes_readable_complexes() {
    let dir = scratch("mesh");
    let out = dir.join("mesh");
    let o = bin()
        .args(["mesh", "--domain"])
        .arg(domain_file(&dir, "zero-trace"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let k = read_mesh(&out.join("ambient.json")).unwrap();
    let omega = read_mesh(&out.join("omega.json")).unwrap();
    let ext = read_mesh(&out.join("exterior.json")).unwrap();
    assert_eq!(omega.num_simplices(2) + ext.num_simplices(2), k.num_simplices(2));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("mesh.json")).unwrap()).unwrap();
    assert_eq!(summary["omega"]["betti"], serde_json::json!([1, 1, 0]));
}

#[test]
fn extend_round_trips_through_files() {
    let dir = scratch("extend");
    let domain = domain_file(&dir, "zero-trace");
    let first = dir.join("first");
    let o = bin()
        .args(["extend", "--degree", "1", "--seed", "5", "--domain"])
        .arg(&domain)
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS zero-trace"));
    // feed the datum back in: same extension
    let second = dir.join("second");
    let o = bin()
        .args(["extend", "--degree", "1", "--domain"])
        .arg(&domain)
        .arg("--input")
        .arg(first.join("datum.csv"))
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let a = load_cochain(&first.join("extended.csv")).unwrap();
    let b = load_cochain(&second.join("extended.csv")).unwrap();
    assert_eq!(a.values, b.values);
    // variant flag overrides the spec
    let o = bin()
        .args(["extend", "--degree", "0", "--variant", "mixed", "--domain"])
        .arg(&domain)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(!stdout(&o).contains("zero-trace"));
}

#[test]
fn cutfem_scan_from_flags() {
    let dir = scratch("cut");
    let run = |threads: &str, out: &Path| {
        bin()
            .args([
                "cutfem-scan",
                "--levelset",
                "circle:0.5,0.5,0.3",
                "--offsets",
                "2",
                "--h-levels",
                "0.125,0.0625",
                "--degree",
                "0",
                "--samples",
                "2",
                "--threads",
                threads,
                "--out",
            ])
            .arg(out)
            .output()
            .unwrap()
    };
    let o = run("1", &dir.join("a"));
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("discrete-identity"));
    let csv = std::fs::read_to_string(dir.join("a/cutfem_scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(dir.join("a/c_s_vs_offset.svg").exists());
    let o = run("2", &dir.join("b"));
    assert_eq!(code(&o), 0);
    assert_eq!(csv, std::fs::read_to_string(dir.join("b/cutfem_scan.csv")).unwrap());

    let o = bin().args(["cutfem-scan", "--levelset", "square:1"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn poincare_from_flags_prints_constants() {
    let dir = scratch("poincare");
    let o = bin()
        .args(["poincare", "--degree", "0", "--convention", "dirichlet", "--domain"])
        .arg(domain_file(&dir, "mixed"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("\"convention\": \"dirichlet\"") && s.contains("0/0 assertions passed"), "{s}");
}
