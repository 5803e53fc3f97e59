mod common;

use std::fs;
use std::path::Path;

use mlec::config::{LoadedConfig, RunConfig};
use mlec::corpus::synthetic::{generate, SyntheticConfig};
use mlec::corpus::{class_distribution, write_tsv, EmotionLabelSet};
use mlec::embeddings::{build_backend, BackendSpec, EmbeddingBackend, StackedEmbedding};
use mlec::error::{Error, ErrorKind};
use mlec::loss::{compute_class_weights, label_correlation_matrix, HybridLossConfig, LossMode};
use mlec::meta_learner::{train, LossSetup, MetaLearner, MetaLearnerConfig, TrainData};
use mlec::pipeline::{self, embed_all, sha256_hex, RunManifest};
use mlec::preprocess::{clean_or_empty, PreprocessConfig};

fn write_fixture(dir: &Path, n: usize, seed: u64) -> std::path::PathBuf {
    let data = generate(&SyntheticConfig {
        n,
        seed,
        ..Default::default()
    });
    let path = dir.join(format!("fixture{n}.tsv"));
    write_tsv(&data, &EmotionLabelSet::default(), &path).unwrap();
    path
}

/// Trains and scores on the same file.
fn fixture_run(dir: &Path, data: &Path, mode: LossMode, epochs: usize, batch_size: usize) -> LoadedConfig {
    let mut cfg = RunConfig::load(common::repo_path("data/toy.toml")).unwrap().config;
    cfg.paths.data = None;
    cfg.paths.split = None;
    cfg.paths.train = Some(data.to_path_buf());
    cfg.paths.dev = Some(data.to_path_buf());
    cfg.paths.output_dir = dir.join("runs");
    cfg.loss.mode = mode;
    cfg.meta_learner.epochs = epochs;
    cfg.meta_learner.batch_size = batch_size;
    let path = dir.join("fixture.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    RunConfig::load(&path).unwrap()
}

#[test]
fn train_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = common::sample_run(dir.path(), "run.toml", 5);
    let out = pipeline::cmd_train(&loaded, Some(LossMode::Lcm)).unwrap();
    let m = &out.manifest;
    assert_eq!(m.mode, LossMode::Lcm);
    assert_eq!(m.config.loss.mode, LossMode::Lcm);
    assert_eq!(m.loss_history.len(), 5);
    assert_eq!(m.component_history.len(), 5);
    assert_eq!(m.dev_f1_history.len(), 5);
    assert!(matches!(m.best_epoch, Some(1..=5)));
    assert_eq!(m.evaluated_on, "test");
    assert_eq!(m.examples.values().sum::<usize>(), 100);
    assert_eq!(m.input_width, 12);

    let ckpt = fs::read(out.output_dir.join(pipeline::CHECKPOINT_FILE)).unwrap();
    assert_eq!(m.checksums["checkpoint"], sha256_hex(&ckpt));
    assert_eq!(m.checksums["data"], sha256_hex(&fs::read(common::repo_path("data/sample100.tsv")).unwrap()));
    assert_eq!(&RunManifest::load(out.output_dir.join(pipeline::MANIFEST_FILE)).unwrap(), m);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.output_dir.join(pipeline::REPORT_JSON)).unwrap()).unwrap();
    for key in mlec::metrics::REPORT_KEYS {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    assert!(out.output_dir.join(pipeline::REPORT_TEXT).exists());
}

#[test]
fn overfit_run_evaluates_to_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), 32, 5);
    let loaded = fixture_run(dir.path(), &data, LossMode::Baseline, 200, 8);
    let out = pipeline::cmd_train(&loaded, None).unwrap();
    assert_eq!(out.manifest.evaluated_on, "dev");

    let eval_dir = dir.path().join("eval");
    let ckpt = out.output_dir.join(pipeline::CHECKPOINT_FILE);
    let report = pipeline::cmd_evaluate(&ckpt, &data, None, &eval_dir).unwrap();
    assert!(report.f1_micro >= 0.95, "micro-F1 {}", report.f1_micro);
    assert_eq!(report, out.manifest.report);
    assert!(eval_dir.join("evaluation.json").exists());

    // The same backends supplied through the config give the same scores.
    let again = pipeline::cmd_evaluate(&ckpt, &data, Some(&loaded), &eval_dir).unwrap();
    assert_eq!(again, report);
}

#[test]
fn training_loss_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), 32, 9);
    for mode in LossMode::ALL {
        let loaded = fixture_run(dir.path(), &data, mode, 30, 8);
        let h = pipeline::cmd_train(&loaded, None).unwrap().manifest.loss_history;
        assert!(h[29] < h[0], "{mode}: {} -> {}", h[0], h[29]);
    }
}

#[test]
fn evaluate_rejects_incompatible_backends() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = common::sample_run(dir.path(), "run.toml", 1);
    let out = pipeline::cmd_train(&loaded, None).unwrap();
    let mut cfg = loaded.config.clone();
    cfg.backends.push(BackendSpec::toy("toy-d", 3, 14));
    let path = dir.path().join("wider.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    let wider = RunConfig::load(&path).unwrap();
    let err = pipeline::cmd_evaluate(
        &out.output_dir.join(pipeline::CHECKPOINT_FILE),
        &common::repo_path("data/sample100.tsv"),
        Some(&wider),
        dir.path(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Shape(_)), "{err}");
    assert_eq!(err.kind(), ErrorKind::Runtime);
}

#[test]
fn predict_writes_one_row_per_input() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = common::sample_run(dir.path(), "run.toml", 3);
    let ckpt = pipeline::cmd_train(&loaded, None).unwrap().output_dir.join(pipeline::CHECKPOINT_FILE);
    let input = dir.path().join("in.tsv");
    fs::write(&input, "ID\tTweet\na\tأنا سعيد جدا 😂\nb\thello world\nc\tحزين وغاضب\n").unwrap();

    let out = dir.path().join("pred.tsv");
    let pred = pipeline::cmd_predict(&ckpt, &input, None, &out).unwrap();
    assert_eq!(pred.rows(), 3);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let header: Vec<&str> = lines[0].split('\t').collect();
    assert_eq!(header[0], "ID");
    assert_eq!(&header[1..], EmotionLabelSet::default().labels());
    assert_eq!(lines.len(), 4);
    for (line, id) in lines[1..].iter().zip(["a", "b", "c"]) {
        let cells: Vec<&str> = line.split('\t').collect();
        assert_eq!(cells[0], id);
        assert_eq!(cells.len(), 13);
        assert!(cells[1..].iter().all(|c| *c == "0" || *c == "1"));
    }
    let before = fs::read(&out).unwrap();
    pipeline::cmd_predict(&ckpt, &input, None, &out).unwrap();
    assert_eq!(fs::read(&out).unwrap(), before);

    let strict = pipeline::cmd_predict(&ckpt, &input, Some(0.999), &out).unwrap();
    assert_eq!(strict.as_slice().iter().filter(|&&v| v == 1).count(), 0);
    let loose = pipeline::cmd_predict(&ckpt, &input, Some(0.001), &out).unwrap();
    assert_eq!(loose.as_slice().iter().filter(|&&v| v == 1).count(), 36);

    let err = pipeline::cmd_predict(&ckpt, &input, Some(1.0), &out).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
}

#[test]
fn preprocess_header_only_file() {
    let dir = tempfile::tempdir().unwrap();
    let schema = EmotionLabelSet::default();
    let input = dir.path().join("empty.tsv");
    let header = format!("ID\tTweet\t{}\n", schema.labels().join("\t"));
    fs::write(&input, &header).unwrap();
    let out = dir.path().join("clean.tsv");
    let s = pipeline::cmd_preprocess(&input, &out, &PreprocessConfig::default(), &schema).unwrap();
    assert_eq!((s.rows_in, s.rows_out), (0, 0));
    assert_eq!(fs::read_to_string(&out).unwrap(), header);
    assert_eq!(fs::read_to_string(&s.log_path).unwrap(), "");
}

#[test]
fn preprocess_of_clean_file_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let golden = common::data_path("raw10.golden.tsv");
    let out = dir.path().join("again.tsv");
    let s = pipeline::cmd_preprocess(&golden, &out, &PreprocessConfig::default(), &EmotionLabelSet::default()).unwrap();
    assert!(s.empty_ids.is_empty());
    assert_eq!(fs::read(&out).unwrap(), fs::read(&golden).unwrap());
}

#[test]
fn preprocess_reports_bad_rows_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.tsv");
    let schema = EmotionLabelSet::default();
    let mut text = format!("ID\tTweet\t{}\n", schema.labels().join("\t"));
    text.push_str(&format!("x\tنص\t{}\n", ["0"; 12].join("\t")));
    text.push_str(&format!("y\tنص\t{}\t2\n", ["0"; 11].join("\t")));
    fs::write(&input, text).unwrap();
    let err = pipeline::cmd_preprocess(&input, &dir.path().join("o.tsv"), &PreprocessConfig::default(), &schema)
        .unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    assert!(err.to_string().contains('3'), "{err}");
}

#[test]
fn config_validation_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(common::repo_path("data/toy.toml")).unwrap().config;
    cfg.paths.data = Some("missing.tsv".into());
    cfg.loss.alpha = -1.0;
    cfg.loss.margin = 0.0;
    cfg.meta_learner.lstm_units = 0;
    cfg.meta_learner.output_units = 7;
    cfg.backends[1].name = cfg.backends[0].name.clone();
    let path = dir.path().join("bad.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    let err = RunConfig::load(&path).unwrap().validate().unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    let Error::Config(list) = &err else { panic!("{err}") };
    let text = list.join("\n");
    for key in ["loss.alpha", "loss.margin", "meta_learner.lstm_units", "meta_learner.output_units", "missing.tsv"] {
        assert!(text.contains(key), "{key} not reported in:\n{text}");
    }
    assert!(text.contains("toy-a"), "duplicate backend not reported in:\n{text}");
    assert!(pipeline::cmd_train(&RunConfig::load(&path).unwrap(), None).is_err());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let toml = fs::read_to_string(common::repo_path("data/toy.toml")).unwrap().replace("alpha =", "alpah =");
    let err = RunConfig::from_toml(&toml).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    assert!(err.to_string().contains("alpah"), "{err}");
}

#[test]
fn embedding_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let backends: Vec<Box<dyn EmbeddingBackend>> =
        vec![build_backend(&BackendSpec::toy("a", 3, 1), 16, 12), build_backend(&BackendSpec::toy("b", 2, 2), 16, 12)];
    let pre = PreprocessConfig::default();
    let data = generate(&SyntheticConfig { n: 20, ..Default::default() });
    let texts: Vec<_> = data.examples().iter().map(|e| clean_or_empty(&e.raw_text, &pre)).collect();
    let fresh = embed_all(&backends, &texts, None).unwrap();
    let first = embed_all(&backends, &texts, Some(dir.path())).unwrap();
    let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
    let cached = embed_all(&backends, &texts, Some(dir.path())).unwrap();
    assert_eq!(first, fresh);
    assert_eq!(cached, fresh);

    // A corrupt cache file is recomputed, not trusted.
    let path = files[0].as_ref().unwrap().path();
    fs::write(&path, b"junk").unwrap();
    assert_eq!(embed_all(&backends, &texts, Some(dir.path())).unwrap(), fresh);
}

fn fixture_inputs(n: usize) -> (Vec<StackedEmbedding>, mlec::corpus::Dataset) {
    let data = generate(&SyntheticConfig { n, seed: 5, ..Default::default() });
    let backends: Vec<Box<dyn EmbeddingBackend>> = [("toy-a", 11), ("toy-b", 12), ("toy-c", 13)]
        .iter()
        .map(|&(name, seed)| build_backend(&BackendSpec::toy(name, 4, seed), 32, 12))
        .collect();
    let pre = PreprocessConfig::default();
    let texts: Vec<_> = data.examples().iter().map(|e| clean_or_empty(&e.raw_text, &pre)).collect();
    (embed_all(&backends, &texts, None).unwrap(), data)
}

#[test]
fn every_tensor_receives_gradient() {
    // One full-batch Adam step moves a parameter iff its gradient is nonzero.
    let (inputs, data) = fixture_inputs(32);
    let cfg = MetaLearnerConfig {
        epochs: 1,
        batch_size: 32,
        ..Default::default()
    };
    for mode in LossMode::ALL {
        let mut model = MetaLearner::build(&cfg, 12, 3).unwrap();
        let before = model.tensors();
        let (config, weighted) = mode.resolve(&HybridLossConfig::default());
        let setup = LossSetup {
            config,
            weights: if weighted {
                compute_class_weights(&class_distribution(&data)).unwrap()
            } else {
                mlec::loss::ClassWeights::uniform(12)
            },
            correlation: label_correlation_matrix(data.label_matrix()).unwrap(),
        };
        let split = TrainData {
            inputs: &inputs,
            labels: data.label_matrix(),
        };
        let state = train(&mut model, split, None, &setup, 3).unwrap();
        assert_eq!(state.epochs_completed, 1);
        for (a, b) in before.iter().zip(model.tensors()) {
            assert_eq!(a.name, b.name);
            assert_ne!(a.data, b.data, "{mode}: {} did not move", a.name);
        }
    }
}
