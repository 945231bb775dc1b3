#![allow(dead_code)]

use std::path::{Path, PathBuf};

use neurowarp_pipeline::Project;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Loads a bundled project with its output redirected to `out`.
pub fn project(name: &str, out: &Path, overrides: &[&str]) -> Project {
    let mut all = vec![format!("output = {:?}", out.display().to_string())];
    all.extend(overrides.iter().map(|s| s.to_string()));
    Project::load(fixtures().join("projects").join(format!("{name}.toml")), &all).unwrap()
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}
