//! End-to-end commands: preprocess, train (single mode or the five-mode
//! sweep), evaluate, predict and manifest reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{LoadedConfig, RunConfig};
use crate::corpus::{self, class_distribution, Dataset, EmotionLabelSet, Example, LabelMatrix};
use crate::embeddings::{self, cache, BackendSpec, EmbeddingBackend, StackedEmbedding};
use crate::error::{Error, Result};
use crate::loss::{
    compute_class_weights, label_correlation_matrix, ClassWeights, HybridLossConfig, LossComponents, LossMode,
};
use crate::meta_learner::checkpoint::Checkpoint;
use crate::meta_learner::{self, LossSetup, MetaLearner, TrainData};
use crate::metrics::{classwise_report, EvaluationReport};
use crate::preprocess::{clean_or_empty, pipeline, CleanText, PreprocessConfig, PreprocessSettings};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const MANIFEST_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSummary {
    pub rows_in: usize,
    pub rows_out: usize,
    /// IDs of rows dropped because nothing survived cleaning.
    pub empty_ids: Vec<String>,
    pub log_path: PathBuf,
}

/// Path of the sidecar listing rows that were empty after cleaning.
pub fn empty_log_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".empty.log");
    PathBuf::from(s)
}

/// Cleans the Tweet column of a labelled TSV. Rows that clean to nothing
/// are left out of the output and listed, one ID per line, in the sidecar.
pub fn cmd_preprocess(
    input: &Path,
    output: &Path,
    pre: &PreprocessConfig,
    schema: &EmotionLabelSet,
) -> Result<PreprocessSummary> {
    let data = corpus::load_tsv(input, schema)?;
    let mut kept = Vec::with_capacity(data.len());
    let mut empty_ids = Vec::new();
    for ex in data.examples() {
        match pipeline(&ex.raw_text, pre) {
            Ok(clean) => kept.push(Example {
                raw_text: clean.into_string(),
                ..ex.clone()
            }),
            Err(_) => empty_ids.push(ex.id.clone()),
        }
    }
    let rows_out = kept.len();
    corpus::write_tsv(&Dataset::new(kept)?, schema, output)?;
    let log_path = empty_log_path(output);
    let log: String = empty_ids.iter().map(|id| format!("{id}\n")).collect();
    write(&log_path, log)?;
    if !empty_ids.is_empty() {
        log::warn!("{} rows were empty after cleaning; see {}", empty_ids.len(), log_path.display());
    }
    Ok(PreprocessSummary {
        rows_in: data.len(),
        rows_out,
        empty_ids,
        log_path,
    })
}

/// Stacked embeddings for every text, in input order. With a cache
/// directory, results are reused when the backend states and texts match.
pub fn embed_all(
    backends: &[Box<dyn EmbeddingBackend>],
    texts: &[CleanText],
    cache_dir: Option<&Path>,
) -> Result<Vec<StackedEmbedding>> {
    let key = cache_dir.map(|dir| {
        let key = cache::cache_key(backends, texts);
        (dir.join(format!("{}.emb", hex::encode(key))), key)
    });
    if let Some((path, key)) = &key {
        if let Some(items) = cache::read_if_fresh(path, key) {
            log::debug!("embedding cache hit: {}", path.display());
            return Ok(items);
        }
    }
    let items = texts
        .par_iter()
        .map(|t| embeddings::extract_stacked(backends, t))
        .collect::<Result<Vec<_>>>()?;
    if let Some((path, key)) = &key {
        let stored = path
            .parent()
            .map_or(Ok(()), create_dir)
            .and_then(|_| cache::write(path, key, &items));
        if let Err(e) = stored {
            log::warn!("could not write embedding cache: {e}");
        }
    }
    Ok(items)
}

/// A labelled split after cleaning and embedding.
pub struct Split {
    pub data: Dataset,
    pub texts: Vec<CleanText>,
    pub inputs: Vec<StackedEmbedding>,
}

impl Split {
    fn len(&self) -> usize {
        self.data.len()
    }

    fn train_data(&self) -> TrainData<'_> {
        TrainData {
            inputs: &self.inputs,
            labels: self.data.label_matrix(),
        }
    }
}

fn clean_all(d: &Dataset, pre: &PreprocessConfig) -> Vec<CleanText> {
    d.examples().par_iter().map(|e| clean_or_empty(&e.raw_text, pre)).collect()
}

/// Everything that does not depend on the loss mode: cleaned and embedded
/// splits plus the (fine-tuned) backends.
pub struct PreparedRun {
    pub loaded: LoadedConfig,
    pub schema: EmotionLabelSet,
    pub preprocess: PreprocessConfig,
    pub backends: Vec<Box<dyn EmbeddingBackend>>,
    pub train: Split,
    pub dev: Split,
    pub test: Option<Split>,
    pub checksums: BTreeMap<String, String>,
}

pub fn prepare_run(loaded: &LoadedConfig) -> Result<PreparedRun> {
    loaded.validate()?;
    let cfg = &loaded.config;
    let schema = cfg.schema()?;
    let pre = loaded.preprocess_config()?;
    let mut checksums = BTreeMap::new();
    checksums.insert("config".to_string(), sha256_hex(&read(&loaded.source)?));

    let mut load = |key: &str, rel: &Path| -> Result<Dataset> {
        let path = loaded.resolve(rel);
        checksums.insert(key.to_string(), sha256_hex(&read(&path)?));
        corpus::load_tsv(&path, &schema)
    };
    let p = &cfg.paths;
    let (train, dev, test) = match (&p.data, &p.train) {
        (Some(data), _) => {
            let all = load("data", data)?;
            let (a, b, c) = corpus::split(&all, p.split.expect("validated"), cfg.seed)?;
            (a, b, (!c.is_empty()).then_some(c))
        }
        (None, Some(train)) => {
            let a = load("train", train)?;
            let b = load("dev", p.dev.as_ref().expect("validated"))?;
            let c = p.test.as_ref().map(|t| load("test", t)).transpose()?;
            (a, b, c)
        }
        (None, None) => unreachable!("validated"),
    };
    if train.is_empty() {
        return Err(Error::Empty("training split has no examples".into()));
    }

    let max_len = cfg.meta_learner.max_len;
    let train_texts = clean_all(&train, &pre);
    let mut backends = Vec::with_capacity(cfg.backends.len());
    for spec in &cfg.backends {
        let mut b = embeddings::build_backend(spec, max_len, schema.len());
        if spec.fine_tune_epochs > 0 {
            log::info!("fine-tuning backend `{}` for {} epochs", spec.name, spec.fine_tune_epochs);
            b.fine_tune(&train_texts, train.label_matrix(), spec.fine_tune_epochs)?;
        }
        backends.push(b);
    }

    let cache_dir = loaded.cache_dir();
    let embed = |data: Dataset, texts: Vec<CleanText>| -> Result<Split> {
        let inputs = embed_all(&backends, &texts, cache_dir.as_deref())?;
        Ok(Split { data, texts, inputs })
    };
    let train = embed(train, train_texts)?;
    let dev_texts = clean_all(&dev, &pre);
    let dev = embed(dev, dev_texts)?;
    let test = match test {
        Some(t) => {
            let texts = clean_all(&t, &pre);
            Some(embed(t, texts)?)
        }
        None => None,
    };
    Ok(PreparedRun {
        loaded: loaded.clone(),
        schema,
        preprocess: pre,
        backends,
        train,
        dev,
        test,
        checksums,
    })
}

/// Everything needed to reproduce and audit one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub mode: LossMode,
    pub seed: u64,
    /// The run config as written, with `loss.mode` set to the mode run.
    pub config: RunConfig,
    /// Loss coefficients after applying the mode.
    pub effective_loss: HybridLossConfig,
    pub class_weighted: bool,
    pub class_weights: Vec<f64>,
    pub input_width: usize,
    pub examples: BTreeMap<String, usize>,
    pub checksums: BTreeMap<String, String>,
    pub loss_history: Vec<f64>,
    pub component_history: Vec<LossComponents>,
    pub dev_f1_history: Vec<f64>,
    pub best_epoch: Option<usize>,
    /// Split the report was computed on: `test`, `dev` or `train`.
    pub evaluated_on: String,
    pub report: EvaluationReport,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read(path)?;
        serde_json::from_slice(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub manifest: RunManifest,
}

/// Model bundle: meta-learner plus what is needed to turn raw text into
/// its inputs.
pub struct Bundle {
    pub model: MetaLearner,
    pub schema: EmotionLabelSet,
    pub preprocess: PreprocessConfig,
    pub specs: Vec<BackendSpec>,
    pub backends: Vec<Box<dyn EmbeddingBackend>>,
}

fn backend_prefix(name: &str) -> String {
    format!("backend.{name}.")
}

/// Checkpoint holding the meta-learner, labels, preprocessing settings,
/// backend specs and backend state.
pub fn bundle_checkpoint(
    model: &MetaLearner,
    schema: &EmotionLabelSet,
    preprocess: &PreprocessConfig,
    specs: &[BackendSpec],
    backends: &[Box<dyn EmbeddingBackend>],
) -> Checkpoint {
    let mut c = model.to_checkpoint();
    c.config.insert("labels".into(), serde_json::json!(schema.labels()));
    c.config.insert(
        "preprocess".into(),
        serde_json::to_value(preprocess.settings()).expect("settings serialize"),
    );
    c.config
        .insert("backends".into(), serde_json::to_value(specs).expect("specs serialize"));
    for b in backends {
        let prefix = backend_prefix(b.name());
        c.tensors.extend(b.export_state().into_iter().map(|mut t| {
            t.name = format!("{prefix}{}", t.name);
            t
        }));
    }
    c
}

impl Bundle {
    pub fn to_checkpoint(&self) -> Checkpoint {
        bundle_checkpoint(&self.model, &self.schema, &self.preprocess, &self.specs, &self.backends)
    }

    fn field<T: serde::de::DeserializeOwned>(c: &Checkpoint, key: &str) -> Result<T> {
        let v = c
            .config
            .get(key)
            .ok_or_else(|| Error::Corrupt(format!("checkpoint: no `{key}` entry")))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Corrupt(format!("checkpoint: `{key}`: {e}")))
    }

    /// Rebuilds backends named in `specs`, loading any state the
    /// checkpoint holds for them.
    pub fn restore_backends(
        c: &Checkpoint,
        specs: &[BackendSpec],
        max_len: usize,
        classes: usize,
    ) -> Result<Vec<Box<dyn EmbeddingBackend>>> {
        specs
            .iter()
            .map(|spec| {
                let prefix = backend_prefix(&spec.name);
                let state: Vec<_> = c
                    .tensors
                    .iter()
                    .filter_map(|t| {
                        t.name.strip_prefix(&prefix).map(|n| crate::tensor::NamedTensor {
                            name: n.to_string(),
                            ..t.clone()
                        })
                    })
                    .collect();
                embeddings::restore_backend(spec, max_len, classes, &state)
            })
            .collect()
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let model = MetaLearner::from_checkpoint(c)?;
        let labels: Vec<String> = Self::field(c, "labels")?;
        let schema = EmotionLabelSet::new(&labels).map_err(|e| Error::Corrupt(format!("checkpoint: {e}")))?;
        let settings: PreprocessSettings = Self::field(c, "preprocess")?;
        let preprocess =
            PreprocessConfig::from_settings(&settings).map_err(|e| Error::Corrupt(format!("checkpoint: {e}")))?;
        let specs: Vec<BackendSpec> = Self::field(c, "backends")?;
        let backends = Self::restore_backends(c, &specs, model.config().max_len, schema.len())?;
        Ok(Self {
            model,
            schema,
            preprocess,
            specs,
            backends,
        })
    }

    pub fn save(&self, path: &Path) -> Result<Vec<u8>> {
        let bytes = self.to_checkpoint().encode();
        write(path, &bytes)?;
        Ok(bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn report_files(dir: &Path, stem: &str, report: &EvaluationReport) -> Result<()> {
    write(&dir.join(format!("{stem}.json")), report.to_json())?;
    write(&dir.join(format!("{stem}.txt")), report.render_text())
}

/// Trains one loss mode on a prepared run and writes checkpoint, reports
/// and manifest into `output_dir`.
pub fn train_prepared(run: &PreparedRun, mode: LossMode, output_dir: &Path) -> Result<TrainOutcome> {
    let cfg = &run.loaded.config;
    let (effective, weighted) = mode.resolve(&cfg.loss.params());
    let train_labels = run.train.data.label_matrix();
    let weights = if weighted {
        compute_class_weights(&class_distribution(&run.train.data))?
    } else {
        ClassWeights::uniform(run.schema.len())
    };
    let setup = LossSetup {
        config: effective.clone(),
        weights,
        correlation: label_correlation_matrix(train_labels)?,
    };
    let width = run.train.inputs[0].width();
    let mut model = MetaLearner::build(&cfg.meta_learner, width, cfg.seed)?;
    log::info!("training mode `{mode}`: {} examples, input width {width}", run.train.len());
    let dev = (run.dev.len() > 0).then(|| run.dev.train_data());
    let state = meta_learner::train(&mut model, run.train.train_data(), dev, &setup, cfg.seed)?;

    let (evaluated_on, eval) = match &run.test {
        Some(t) if t.len() > 0 => ("test", t),
        _ if run.dev.len() > 0 => ("dev", &run.dev),
        _ => ("train", &run.train),
    };
    let pred = model.predict(&eval.inputs, cfg.meta_learner.threshold)?;
    let report = classwise_report(eval.data.label_matrix(), &pred, &run.schema)?;

    create_dir(output_dir)?;
    let ckpt = bundle_checkpoint(&model, &run.schema, &run.preprocess, &cfg.backends, &run.backends);
    let ckpt_bytes = ckpt.encode();
    write(&output_dir.join(CHECKPOINT_FILE), &ckpt_bytes)?;
    report_files(output_dir, "report", &report)?;

    let mut checksums = run.checksums.clone();
    checksums.insert("checkpoint".into(), sha256_hex(&ckpt_bytes));
    let mut snapshot = cfg.clone();
    snapshot.loss.mode = mode;
    let mut examples = BTreeMap::new();
    examples.insert("train".to_string(), run.train.len());
    examples.insert("dev".to_string(), run.dev.len());
    if let Some(t) = &run.test {
        examples.insert("test".to_string(), t.len());
    }
    let manifest = RunManifest {
        format_version: MANIFEST_VERSION,
        mode,
        seed: cfg.seed,
        config: snapshot,
        effective_loss: effective,
        class_weighted: weighted,
        class_weights: setup.weights.w.clone(),
        input_width: width,
        examples,
        checksums,
        loss_history: state.loss_history,
        component_history: state.component_history,
        dev_f1_history: state.dev_f1_history,
        best_epoch: state.best_epoch,
        evaluated_on: evaluated_on.to_string(),
        report,
    };
    write(&output_dir.join(MANIFEST_FILE), manifest.to_json())?;
    Ok(TrainOutcome {
        output_dir: output_dir.to_path_buf(),
        manifest,
    })
}

/// Trains the configured loss mode, or `mode` when given.
pub fn cmd_train(loaded: &LoadedConfig, mode: Option<LossMode>) -> Result<TrainOutcome> {
    let run = prepare_run(loaded)?;
    train_prepared(&run, mode.unwrap_or(loaded.config.loss.mode), &loaded.output_dir())
}

/// Trains all five loss modes on shared embeddings, one output
/// subdirectory per mode.
pub fn cmd_sweep(loaded: &LoadedConfig) -> Result<Vec<TrainOutcome>> {
    let run = prepare_run(loaded)?;
    let root = loaded.output_dir();
    LossMode::ALL
        .iter()
        .map(|&mode| train_prepared(&run, mode, &root.join(mode.as_str())))
        .collect()
}

/// Evaluates a checkpoint on a labelled TSV and writes
/// `evaluation.json` and `evaluation.txt` into `out_dir`.
///
/// With `config`, its preprocessing and backends are used to build the
/// inputs; a checkpoint trained on a different input width is then a shape
/// error.
pub fn cmd_evaluate(
    checkpoint: &Path,
    data: &Path,
    config: Option<&LoadedConfig>,
    out_dir: &Path,
) -> Result<EvaluationReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let mut bundle = Bundle::from_checkpoint(&ckpt)?;
    if let Some(loaded) = config {
        let violations = loaded.config.violations();
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        bundle.schema = loaded.config.schema()?;
        bundle.preprocess = loaded.preprocess_config()?;
        bundle.backends = Bundle::restore_backends(
            &ckpt,
            &loaded.config.backends,
            bundle.model.config().max_len,
            bundle.schema.len(),
        )?;
    }
    let width: usize = bundle.backends.iter().map(|b| b.dim()).sum();
    if width != bundle.model.input_width() {
        return Err(Error::Shape(format!(
            "checkpoint expects input width {}, backends produce {width}",
            bundle.model.input_width()
        )));
    }
    let data = corpus::load_tsv(data, &bundle.schema)?;
    let texts = clean_all(&data, &bundle.preprocess);
    let cache_dir = config.and_then(|c| c.cache_dir());
    let inputs = embed_all(&bundle.backends, &texts, cache_dir.as_deref())?;
    let pred = bundle.model.predict(&inputs, bundle.model.config().threshold)?;
    let report = classwise_report(data.label_matrix(), &pred, &bundle.schema)?;
    create_dir(out_dir)?;
    report_files(out_dir, "evaluation", &report)?;
    Ok(report)
}

/// Writes `ID` plus one 0/1 column per label for every input row.
/// Rows that clean to nothing are still predicted, from an empty sequence.
pub fn cmd_predict(checkpoint: &Path, input: &Path, threshold: Option<f64>, output: &Path) -> Result<LabelMatrix> {
    let bundle = Bundle::load(checkpoint)?;
    let threshold = threshold.unwrap_or(bundle.model.config().threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let rows = corpus::load_unlabeled_tsv(input)?;
    let texts: Vec<CleanText> = rows.par_iter().map(|r| clean_or_empty(&r.raw_text, &bundle.preprocess)).collect();
    let inputs = embed_all(&bundle.backends, &texts, None)?;
    let pred = bundle.model.predict(&inputs, threshold)?;
    let mut out = String::from("ID");
    for l in bundle.schema.labels() {
        out.push('\t');
        out.push_str(l);
    }
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        out.push_str(&r.id);
        for &v in pred.row(i) {
            out.push('\t');
            out.push(if v == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
    write(output, out)?;
    Ok(pred)
}

/// Side-by-side aggregate metrics of several runs, one column per run.
pub fn render_comparison(manifests: &[RunManifest]) -> String {
    let rows: [(&str, fn(&EvaluationReport) -> f64); 6] = [
        ("precision (micro)", |r| r.precision_micro),
        ("recall (micro)", |r| r.recall_micro),
        ("F1 (micro)", |r| r.f1_micro),
        ("F1 (macro)", |r| r.f1_macro),
        ("Jaccard accuracy", |r| r.jaccard_accuracy),
        ("Hamming loss", |r| r.hamming_loss),
    ];
    let mut out = String::new();
    let _ = write!(out, "{:<18}", "metric");
    for m in manifests {
        let _ = write!(out, " {:>9}", m.mode.as_str());
    }
    out.push('\n');
    for (name, get) in rows {
        let _ = write!(out, "{name:<18}");
        for m in manifests {
            let _ = write!(out, " {:>9.4}", get(&m.report));
        }
        out.push('\n');
    }
    out
}
