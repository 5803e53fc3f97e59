//! Run configuration, read from a TOML file.
//!
//! Relative paths are resolved against the directory holding the config
//! file. `MLEC_CACHE_DIR`, when set, replaces `paths.cache_dir`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{EmotionLabelSet, DEFAULT_LABELS};
use crate::embeddings::BackendSpec;
use crate::error::{Error, Result};
use crate::loss::{HybridLossConfig, LcmMode, LossMode, SimilarityRule};
use crate::meta_learner::MetaLearnerConfig;
use crate::preprocess::{load_symbol_map, PrefixRule, PrefixRuleSpec, PreprocessConfig};

pub const CACHE_DIR_ENV: &str = "MLEC_CACHE_DIR";

fn default_seed() -> u64 {
    2018
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub paths: PathsConfig,
    pub backends: Vec<BackendSpec>,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub meta_learner: MetaLearnerConfig,
}

/// Either `train` + `dev` (+ optional `test`), or `data` + `split`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Train, dev and test fractions of `data`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<[f64; 3]>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    /// `symbol<TAB>token` file replacing the built-in emoji map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emoji_map: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emoticon_map: Option<PathBuf>,
    /// Replaces the built-in conjunction rule; an empty list disables it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_rules: Option<Vec<PrefixRuleSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub mode: LossMode,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub margin: f64,
    pub lambda_reg: f64,
    pub similarity_rule: SimilarityRule,
    pub lcm_mode: LcmMode,
}

impl Default for LossSection {
    fn default() -> Self {
        let h = HybridLossConfig::default();
        Self {
            mode: LossMode::Hybrid,
            alpha: h.alpha,
            beta: h.beta,
            gamma: h.gamma,
            margin: h.margin,
            lambda_reg: h.lambda_reg,
            similarity_rule: h.similarity_rule,
            lcm_mode: h.lcm_mode,
        }
    }
}

impl LossSection {
    /// The configured coefficients, before the mode is applied.
    pub fn params(&self) -> HybridLossConfig {
        HybridLossConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            margin: self.margin,
            lambda_reg: self.lambda_reg,
            similarity_rule: self.similarity_rule,
            lcm_mode: self.lcm_mode,
        }
    }
}

/// A parsed config together with the directory its relative paths refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub source: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string().trim_end().replace('\n', " ")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let config = Self::from_toml(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig {
            config,
            base_dir,
            source: path.to_path_buf(),
        })
    }

    pub fn schema(&self) -> Result<EmotionLabelSet> {
        match &self.labels {
            Some(l) => EmotionLabelSet::new(l),
            None => EmotionLabelSet::new(&DEFAULT_LABELS),
        }
    }

    /// Every constraint violation not involving the filesystem.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(Error::Config(v)) = self.schema() {
            out.extend(v.into_iter().map(|m| format!("labels: {m}")));
        }
        let p = &self.paths;
        match (&p.data, &p.train) {
            (Some(_), Some(_)) => out.push("paths.data and paths.train are mutually exclusive".into()),
            (None, None) => out.push("paths.train (or paths.data with paths.split) is required".into()),
            (Some(_), None) => {
                if p.dev.is_some() || p.test.is_some() {
                    out.push("paths.dev and paths.test cannot be combined with paths.data".into());
                }
                match p.split {
                    None => out.push("paths.split is required with paths.data".into()),
                    Some(f) => {
                        if f.iter().any(|v| !(0.0..=1.0).contains(v)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                            out.push(format!("paths.split must be three fractions in [0, 1] summing to 1, got {f:?}"));
                        }
                    }
                }
            }
            (None, Some(_)) => {
                if p.dev.is_none() {
                    out.push("paths.dev is required with paths.train".into());
                }
                if p.split.is_some() {
                    out.push("paths.split only applies to paths.data".into());
                }
            }
        }
        if self.backends.is_empty() {
            out.push("backends must list at least one backend".into());
        }
        let mut seen = HashSet::new();
        for (i, b) in self.backends.iter().enumerate() {
            out.extend(b.violations(i));
            if !seen.insert(b.name.as_str()) {
                out.push(format!("backends[{i}].name `{}` is used twice", b.name));
            }
        }
        if let Some(rules) = &self.preprocess.prefix_rules {
            for (i, r) in rules.iter().enumerate() {
                if let Err(e) = PrefixRule::new(&r.pattern, &r.replacement) {
                    out.push(format!("preprocess.prefix_rules[{i}]: {e}"));
                }
            }
        }
        out.extend(self.loss.params().violations());
        out.extend(self.meta_learner.violations());
        if let Ok(schema) = self.schema() {
            if self.meta_learner.output_units != schema.len() {
                out.push(format!(
                    "meta_learner.output_units must equal the number of labels ({}), got {}",
                    schema.len(),
                    self.meta_learner.output_units
                ));
            }
        }
        out
    }
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.output_dir)
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(v) if !v.is_empty() => Some(PathBuf::from(v)),
            _ => self.config.paths.cache_dir.as_ref().map(|p| self.resolve(p)),
        }
    }

    /// Checks every constraint, including that referenced input files exist,
    /// and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut out = self.config.violations();
        let p = &self.config.paths;
        let pp = &self.config.preprocess;
        for (key, path) in [
            ("paths.train", &p.train),
            ("paths.dev", &p.dev),
            ("paths.test", &p.test),
            ("paths.data", &p.data),
            ("preprocess.emoji_map", &pp.emoji_map),
            ("preprocess.emoticon_map", &pp.emoticon_map),
        ] {
            if let Some(path) = path {
                let full = self.resolve(path);
                if !full.is_file() {
                    out.push(format!("{key}: file {} does not exist", full.display()));
                }
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(out))
        }
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig> {
        let mut cfg = PreprocessConfig::default();
        let pp = &self.config.preprocess;
        if let Some(p) = &pp.emoji_map {
            cfg.emoji_map = load_symbol_map(self.resolve(p))?;
        }
        if let Some(p) = &pp.emoticon_map {
            cfg.emoticon_map = load_symbol_map(self.resolve(p))?;
        }
        if let Some(rules) = &pp.prefix_rules {
            cfg.prefix_rules = rules
                .iter()
                .map(|r| PrefixRule::new(&r.pattern, &r.replacement))
                .collect::<Result<_>>()?;
        }
        Ok(cfg)
    }
}
