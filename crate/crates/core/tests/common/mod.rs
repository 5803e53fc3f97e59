#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};

use mlec::config::{LoadedConfig, RunConfig};
use mlec::corpus::synthetic::SyntheticConfig;

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn data_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(rel)
}

/// The generator settings behind `data/sample100.tsv`.
pub fn sample_config() -> SyntheticConfig {
    SyntheticConfig {
        n: 100,
        seed: 2018,
        decorate: true,
        ..Default::default()
    }
}

/// The toy sample config rewritten to absolute paths under `out`.
pub fn sample_run(out: &Path, name: &str, epochs: usize) -> LoadedConfig {
    let mut cfg = RunConfig::load(repo_path("data/toy.toml")).unwrap().config;
    cfg.paths.data = Some(repo_path("data/sample100.tsv"));
    cfg.paths.output_dir = out.join("runs");
    cfg.meta_learner.epochs = epochs;
    let path = out.join(name);
    std::fs::write(&path, cfg.to_toml()).unwrap();
    RunConfig::load(&path).unwrap()
}
