use std::path::PathBuf;

use cochain_ext::forms::{load_cochain, save_cochain};
use cochain_ext::par::Exec;
use cochain_ext::runner::{case_seed, run, ExperimentConfig, RunOptions};
use cochain_ext::{Error, Result};
use cochain_ext::extension::ExtensionProblem;
use cochain_ext::mesh::DomainSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const UNIT: &str = r#"{"lower": [0.0, 0.0], "upper": [1.0, 1.0]}"#;

fn annulus_verify(checks: &[&str], degrees: &[usize]) -> serde_json::Value {
    json!({
        "name": "annulus-verify",
        "seed": 3,
        "experiment": {
            "kind": "verify",
            "geometries": [{
                "name": "annulus-in-square",
                "box": serde_json::from_str::<serde_json::Value>(UNIT).unwrap(),
                "omega": {"type": "annulus", "center": [0.5, 0.5], "inner": 0.15, "outer": 0.35}
            }],
            "h_levels": [0.125, 0.0625],
            "variants": ["zero-trace", "mixed"],
            "degrees": degrees,
            "samples": 3,
            "checks": checks
        }
    })
}

fn config(v: serde_json::Value) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(&v.to_string())
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("cochain-ext-runner-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn verify_on_annulus_reports_identity_and_gauge() {
    let cfg = config(annulus_verify(&["cochain-identity", "gauge"], &[0, 1])).unwrap();
    let r = run(&cfg, &RunOptions::default()).unwrap();
    assert!(r.passed, "{:?}", r.failed().collect::<Vec<_>>());
    // 2 h levels x 2 variants x 2 degrees, one assertion of each kind
    assert_eq!(r.assertions.iter().filter(|a| a.check == "cochain-identity").count(), 8);
    assert_eq!(r.assertions.iter().filter(|a| a.check == "gauge").count(), 8);
    assert!(r.assertions.iter().all(|a| !a.claim.is_empty()));
    assert_eq!(r.kind, "verify");
    assert_eq!(r.config["experiment"]["kind"], "verify");
}

#[test]
fn empty_degree_list_is_rejected() {
    let err = config(annulus_verify(&["gauge"], &[])).unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("empty degree list")), "{err}");
}

#[test]
fn schema_violations_are_rejected() {
    let mut v = annulus_verify(&["gauge"], &[0]);
    v["tolerances"] = json!({"gauge": 0.0});
    assert!(matches!(config(v).unwrap_err(), Error::Config(m) if m.contains("gauge")));

    let mut v = annulus_verify(&["gauge"], &[0]);
    v["experiment"]["unexpected"] = json!(1);
    assert!(matches!(config(v).unwrap_err(), Error::Json(_)));

    let mut v = annulus_verify(&["gauge"], &[0]);
    v["experiment"]["kind"] = json!("no-such-kind");
    assert!(matches!(config(v).unwrap_err(), Error::Json(_)));

    let mut v = annulus_verify(&["stability"], &[0]);
    v["experiment"]["h_levels"] = json!([0.125]);
    assert!(config(v).is_err());

    let mut v = annulus_verify(&["gauge"], &[0]);
    v["experiment"]["samples"] = json!(0);
    assert!(config(v).is_err());
}

#[test]
fn same_config_gives_identical_csv_bytes() {
    let cfg = config(annulus_verify(&["cochain-identity", "stability"], &[0, 1])).unwrap();
    let (a, b, c) = (scratch("det-a"), scratch("det-b"), scratch("det-c"));
    let ra = run(&cfg, &RunOptions { out: Some(a.clone()), ..Default::default() }).unwrap();
    run(&cfg, &RunOptions { out: Some(b.clone()), ..Default::default() }).unwrap();
    run(&cfg, &RunOptions { out: Some(c.clone()), exec: Exec::Sequential, ..Default::default() }).unwrap();
    let files: Vec<&String> = ra.artifacts.iter().filter(|f| !f.ends_with(".json")).collect();
    assert!(files.iter().any(|f| f.ends_with(".csv")) && files.iter().any(|f| f.ends_with(".svg")));
    for f in files {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(x, std::fs::read(c.join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    for d in [a, b, c] {
        std::fs::remove_dir_all(d).unwrap();
    }
}

#[test]
fn seed_override_changes_data_but_not_outcome() {
    let cfg = config(annulus_verify(&["cochain-identity"], &[1])).unwrap();
    let r1 = run(&cfg, &RunOptions::default()).unwrap();
    let r2 = run(&cfg, &RunOptions { seed: Some(99), ..Default::default() }).unwrap();
    assert_eq!(r2.seed, 99);
    assert_eq!(r2.config["seed"], 99);
    assert!(r1.passed && r2.passed);
    assert_ne!(r1.tables[0].to_csv().unwrap(), r2.tables[0].to_csv().unwrap());
}

#[test]
fn case_seeds_differ_per_key() {
    let a = case_seed(1, &[0, 0, 1]);
    assert_ne!(a, case_seed(1, &[0, 1, 0]));
    assert_ne!(a, case_seed(2, &[0, 0, 1]));
    assert_eq!(a, case_seed(1, &[0, 0, 1]));
}

#[test]
fn scaled_annuli_give_slope_minus_two() {
    let member = |s: f64| {
        json!({
            "name": format!("annulus-x{s}"),
            "box": {"lower": [0.0, 0.0], "upper": [s, s]},
            "omega": {"type": "annulus", "center": [0.5 * s, 0.5 * s], "inner": 0.15 * s, "outer": 0.35 * s}
        })
    };
    // one mesh size for all members: the small annulus is resolved more
    // coarsely, so the fitted slope carries discretization error (the exact
    // law is the dilation check on the base mesh)
    let v = json!({
        "name": "scaled-annuli",
        "experiment": {
            "kind": "eigen-scan",
            "family": [member(1.0), member(2.0), member(4.0)],
            "h": 0.0625,
            "degree": 0,
            "base": "annulus-x1",
            "scales": [1.0, 2.0, 4.0],
            "checks": ["dilation"]
        }
    });
    let r = run(&config(v).unwrap(), &RunOptions::default()).unwrap();
    assert!(r.passed);
    let slope = r.results["exponent"].as_f64().unwrap();
    assert!((slope + 2.0).abs() < 0.2, "slope {slope}");
    let (_, svg) = r.plots.iter().find(|p| p.0 == "lambda_vs_diameter.svg").unwrap();
    assert!(svg.contains(&format!("fitted log-log slope {slope:.3}")));
    assert_eq!(svg.matches("<circle").count(), 3 + 1);
}

#[test]
fn uniform_scan_emits_grouped_bars() {
    let hole = |name: &str, r: f64| {
        json!({
            "name": name,
            "box": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
            "omega": {"type": "difference", "base": {"type": "everything"},
                      "minus": {"type": "disk", "center": [0.5, 0.5], "radius": r}}
        })
    };
    let v = json!({
        "name": "bars",
        "experiment": {
            "kind": "uniform-scan",
            "members": [hole("small", 0.1), hole("large", 0.25)],
            "h": 0.125,
            "degrees": [0, 1],
            "samples": 1
        }
    });
    let r = run(&config(v).unwrap(), &RunOptions::default()).unwrap();
    assert!(r.passed);
    let (_, svg) = r.plots.iter().find(|p| p.0 == "constants_bars.svg").unwrap();
    // 2 members x 4 series bars, 4 legend swatches, frame and background
    assert_eq!(svg.matches("<rect").count(), 8 + 4 + 2);
    assert!(svg.contains(">small<") && svg.contains(">large<"));
}

#[test]
fn extend_reads_input_and_writes_cochains() {
    let spec_json = json!({
        "box": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "h": 0.125,
        "omega": {"type": "annulus", "center": [0.5, 0.5], "inner": 0.15, "outer": 0.35},
        "variant": "zero-trace"
    });
    let spec: DomainSpec = serde_json::from_value(spec_json.clone()).unwrap();
    let p = ExtensionProblem::new(&spec).unwrap();
    let w = p.random_datum(1, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let dir = scratch("extend");
    std::fs::create_dir_all(&dir).unwrap();
    let input = dir.join("input.csv");
    save_cochain(&w, &input).unwrap();
    let v = json!({
        "name": "extend",
        "experiment": {"kind": "extend", "domain": spec_json, "degree": 1, "input": input}
    });
    let out = dir.join("out");
    let r = run(&config(v).unwrap(), &RunOptions { out: Some(out.clone()), ..Default::default() }).unwrap();
    assert!(r.passed, "{:?}", r.failed().collect::<Vec<_>>());
    assert!(r.assertions.iter().any(|a| a.check == "zero-trace"));
    let ext = load_cochain(&out.join("extended.csv")).unwrap();
    assert_eq!(p.restrict_to_omega(&ext).unwrap().values, w.values);
    assert_eq!(load_cochain(&out.join("datum.csv")).unwrap().values, w.values);

    // wrong degree in the file
    let v = json!({
        "name": "extend",
        "experiment": {"kind": "extend", "domain": serde_json::to_value(&spec).unwrap(), "degree": 0, "input": input}
    });
    assert!(matches!(run(&config(v).unwrap(), &RunOptions::default()), Err(Error::DegreeMismatch { .. })));
    std::fs::remove_dir_all(dir).unwrap();
}
