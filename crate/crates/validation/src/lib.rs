//! Locates the experiment configs shipped at the workspace root.
//!
//! The acceptance suite lives in this crate's `tests/acceptance.rs`; it is a
//! separate package so that it runs after the unit and integration suites
//! of the library and the CLI.

use std::path::PathBuf;

/// `configs/` at the workspace root.
pub fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Path of the single config whose file name starts with `prefix`.
pub fn config(prefix: &str) -> PathBuf {
    let mut hits: Vec<PathBuf> = std::fs::read_dir(config_dir())
        .expect("configs directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix) && n.ends_with(".json")))
        .collect();
    hits.sort();
    assert_eq!(hits.len(), 1, "expected exactly one config named {prefix}*.json, found {hits:?}");
    hits.pop().unwrap()
}
