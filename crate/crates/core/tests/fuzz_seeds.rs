//! Replays the checked-in fuzz corpus through the fuzz targets' invariants
//! so the seeds keep decoding on stable toolchains.

mod common;

use std::fs;

use mlec::config::RunConfig;
use mlec::corpus::{parse_tsv, parse_unlabeled_tsv, to_tsv, EmotionLabelSet};
use mlec::embeddings::cache;
use mlec::meta_learner::checkpoint::Checkpoint;
use mlec::meta_learner::MetaLearner;
use mlec::preprocess::{parse_symbol_map, pipeline, PreprocessConfig};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = common::repo_path("fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn tsv_seeds_round_trip() {
    let schema = EmotionLabelSet::default();
    for (name, bytes) in seeds("tsv") {
        let d = parse_tsv(text(&bytes), &schema).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_tsv(&to_tsv(&d, &schema).unwrap(), &schema).unwrap(), d, "{name}");
    }
    for (name, bytes) in seeds("unlabeled_tsv") {
        parse_unlabeled_tsv(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn symbol_map_seeds_parse() {
    for (name, bytes) in seeds("symbol_map") {
        assert!(!parse_symbol_map(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}")).is_empty());
    }
}

#[test]
fn config_seeds_round_trip() {
    for (name, bytes) in seeds("run_config") {
        let cfg = RunConfig::from_toml(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cfg.violations().is_empty(), "{name}: {:?}", cfg.violations());
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg, "{name}");
    }
}

#[test]
fn binary_seeds_decode() {
    let mut decoded = 0;
    for (name, bytes) in seeds("checkpoint") {
        if let Ok(c) = Checkpoint::decode(&bytes) {
            assert_eq!(Checkpoint::decode(&c.encode()).unwrap(), c, "{name}");
            MetaLearner::from_checkpoint(&c).unwrap_or_else(|e| panic!("{name}: {e}"));
            decoded += 1;
        }
    }
    assert!(decoded > 0);
    for (name, bytes) in seeds("embedding_cache") {
        let c = cache::decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(cache::encode(&c.key, &c.items).unwrap(), bytes, "{name}");
    }
}

#[test]
fn preprocess_seeds_are_idempotent() {
    let cfg = PreprocessConfig::default();
    for (name, bytes) in seeds("preprocess") {
        if let Ok(once) = pipeline(text(&bytes), &cfg) {
            assert_eq!(pipeline(once.as_str(), &cfg).unwrap(), once, "{name}");
        }
    }
}
