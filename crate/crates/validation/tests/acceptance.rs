//! Acceptance suite. Runs the shipped config of every criterion through the
//! experiment runner and prints one PASS/FAIL line per criterion, followed by
//! each assertion with its pinned bound. Exits nonzero if any criterion
//! fails an assertion or exceeds its time budget.
//!
//! `cargo test -p cochain-ext-validation --test acceptance -- c07` runs only
//! the criteria whose config name contains the filter.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cochain_ext::runner::{run, ExperimentConfig, RunOptions};
use cochain_ext_validation::{config, config_dir};

const CRITERIA: [(u32, &str, Option<u64>); 13] = [
    (1, "c01-", Some(120)),
    (2, "c02-", None),
    (3, "c03-", None),
    (4, "c04-", None),
    (5, "c05-", None),
    (6, "c06-", Some(60)),
    (7, "c07-", None),
    (8, "c08-", None),
    (9, "c09-", None),
    (10, "c10-", Some(300)),
    (11, "c11-", None),
    (12, "c12-", None),
    (13, "c13-", None),
];

/// Runs one criterion; returns whether it passed.
fn criterion(number: u32, prefix: &str, budget: Option<Duration>) -> bool {
    let path = config(prefix);
    let cfg = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            println!("criterion {number:>2} FAIL {}: {e}", path.display());
            return false;
        }
    };
    let t = Instant::now();
    let report = match run(&cfg, &RunOptions::default()) {
        Ok(r) => r,
        Err(e) => {
            println!("criterion {number:>2} FAIL {}: {e}", cfg.name);
            return false;
        }
    };
    let elapsed = t.elapsed();
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let passed = report.assertions.iter().filter(|a| a.passed).count();
    let ok = report.passed && in_time && !report.assertions.is_empty();
    println!(
        "criterion {number:>2} {} {} ({passed}/{} assertions, {:.1} s{})",
        if ok { "PASS" } else { "FAIL" },
        cfg.name,
        report.assertions.len(),
        elapsed.as_secs_f64(),
        budget.map_or(String::new(), |b| format!(", budget {} s", b.as_secs()))
    );
    for a in &report.assertions {
        println!(
            "    {} {:<22} {:<60} {:>12.4e} {}",
            if a.passed { "ok  " } else { "FAIL" },
            a.check,
            a.case,
            a.value,
            a.bound
        );
    }
    for w in &report.warnings {
        println!("    note: {w}");
    }
    if !in_time {
        println!("    FAIL time budget exceeded");
    }
    ok
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    // every shipped config must validate, whether or not it is selected
    let mut configs = 0;
    for e in std::fs::read_dir(config_dir()).expect("configs directory") {
        let p = e.expect("directory entry").path();
        if p.extension().is_some_and(|x| x == "json") {
            if let Err(e) = ExperimentConfig::load(&p) {
                println!("config {} does not validate: {e}", p.display());
                return ExitCode::FAILURE;
            }
            configs += 1;
        }
    }
    if configs != CRITERIA.len() {
        println!("expected {} configs, found {configs}", CRITERIA.len());
        return ExitCode::FAILURE;
    }
    let selected: Vec<_> = CRITERIA
        .iter()
        .filter(|(_, p, _)| filter.is_empty() || filter.iter().any(|f| config(p).to_string_lossy().contains(f.as_str())))
        .collect();
    let mut failed = Vec::new();
    for &&(n, prefix, budget) in &selected {
        if !criterion(n, prefix, budget.map(Duration::from_secs)) {
            failed.push(n);
        }
    }
    println!();
    println!(
        "acceptance: {}/{} criteria passed{}",
        selected.len() - failed.len(),
        selected.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
