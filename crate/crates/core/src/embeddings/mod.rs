//! Per-token embedding backends and feature-wise stacking.
//!
//! A backend maps a [`CleanText`] to a fixed-length sequence of token vectors
//! (`max_len × dim`, zero rows past the last real token). Sequences from
//! several backends over the same text share their mask and are concatenated
//! column-wise by [`stack`].

use serde::{Deserialize, Serialize};

use crate::corpus::LabelMatrix;
use crate::error::{Error, Result};
use crate::preprocess::CleanText;
use crate::tensor::NamedTensor;

pub mod attention;
pub mod cache;
pub mod toy;

pub use attention::AttentionEncoder;
pub use toy::ToyBackend;

/// `L × d` token matrix with a mask over the `L` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingSequence {
    len: usize,
    dim: usize,
    data: Vec<f32>,
    mask: Vec<bool>,
}

impl TokenEmbeddingSequence {
    pub fn zeros(len: usize, dim: usize) -> Self {
        Self {
            len,
            dim,
            data: vec![0.0; len * dim],
            mask: vec![false; len],
        }
    }

    pub fn from_parts(len: usize, dim: usize, data: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        if data.len() != len * dim || mask.len() != len {
            return Err(Error::Shape(format!(
                "sequence parts do not match {len}×{dim} (data {}, mask {})",
                data.len(),
                mask.len()
            )));
        }
        Ok(Self { len, dim, data, mask })
    }

    /// Fills the first `rows.len()` positions with `rows`, truncating at `len`.
    pub fn from_rows<I, R>(len: usize, dim: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f32]>,
    {
        let mut seq = Self::zeros(len, dim);
        for (t, row) in rows.into_iter().take(len).enumerate() {
            seq.data[t * dim..(t + 1) * dim].copy_from_slice(&row.as_ref()[..dim]);
            seq.mask[t] = true;
        }
        seq
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn real_tokens(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Column-wise concatenation of backend sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedEmbedding {
    pub sequence: TokenEmbeddingSequence,
    /// Backend names in column-block order.
    pub provenance: Vec<String>,
}

impl StackedEmbedding {
    pub fn width(&self) -> usize {
        self.sequence.dim
    }
}

pub fn stack(seqs: &[(&str, &TokenEmbeddingSequence)]) -> Result<StackedEmbedding> {
    let (_, first) = seqs
        .first()
        .ok_or_else(|| Error::Alignment("nothing to stack".into()))?;
    for (name, s) in &seqs[1..] {
        if s.len != first.len {
            return Err(Error::Alignment(format!(
                "backend `{name}` has length {}, expected {}",
                s.len, first.len
            )));
        }
        if s.mask != first.mask {
            return Err(Error::Alignment(format!("backend `{name}` has a different mask")));
        }
    }
    let width: usize = seqs.iter().map(|(_, s)| s.dim).sum();
    let mut data = Vec::with_capacity(first.len * width);
    for t in 0..first.len {
        for (_, s) in seqs {
            data.extend_from_slice(s.row(t));
        }
    }
    Ok(StackedEmbedding {
        sequence: TokenEmbeddingSequence {
            len: first.len,
            dim: width,
            data,
            mask: first.mask.clone(),
        },
        provenance: seqs.iter().map(|(n, _)| n.to_string()).collect(),
    })
}

pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn max_len(&self) -> usize;

    fn extract(&self, text: &CleanText) -> TokenEmbeddingSequence;

    /// Adapts the backend to the labelled task. Backends without trainable
    /// state report a capability error.
    fn fine_tune(&mut self, texts: &[CleanText], labels: &LabelMatrix, epochs: usize) -> Result<()> {
        let _ = (texts, labels, epochs);
        Err(Error::Capability(self.name().to_string()))
    }

    /// Identity of the current state, used as part of embedding cache keys.
    fn fingerprint(&self) -> String;

    /// Trainable state to persist alongside a meta-learner checkpoint.
    fn export_state(&self) -> Vec<NamedTensor> {
        Vec::new()
    }
}

/// Extracts from every backend and stacks in backend order.
pub fn extract_stacked(backends: &[Box<dyn EmbeddingBackend>], text: &CleanText) -> Result<StackedEmbedding> {
    let seqs: Vec<TokenEmbeddingSequence> = backends.iter().map(|b| b.extract(text)).collect();
    let named: Vec<(&str, &TokenEmbeddingSequence)> =
        backends.iter().map(|b| b.name()).zip(seqs.iter()).collect();
    stack(&named)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Toy,
    Transformer,
}

/// Which representation an encoder backend emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HiddenLayer {
    /// Output of the attention block.
    #[default]
    Final,
    /// Token plus position embeddings.
    Input,
    /// Mean of input and final layers.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub name: String,
    pub kind: BackendKind,
    pub dim: usize,
    pub seed: u64,
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    #[serde(default)]
    pub layer: HiddenLayer,
    #[serde(default)]
    pub fine_tune_epochs: usize,
    #[serde(default = "default_backend_lr")]
    pub learning_rate: f64,
}

fn default_vocab() -> usize {
    4096
}

fn default_backend_lr() -> f64 {
    1e-3
}

impl BackendSpec {
    pub fn toy(name: &str, dim: usize, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            kind: BackendKind::Toy,
            dim,
            seed,
            vocab_size: default_vocab(),
            layer: HiddenLayer::Final,
            fine_tune_epochs: 0,
            learning_rate: default_backend_lr(),
        }
    }

    pub fn violations(&self, index: usize) -> Vec<String> {
        let key = format!("backends[{index}]");
        let mut out = Vec::new();
        if self.name.is_empty() {
            out.push(format!("{key}.name must not be empty"));
        }
        if self.dim == 0 {
            out.push(format!("{key}.dim must be at least 1"));
        }
        if self.kind == BackendKind::Transformer {
            if self.vocab_size == 0 {
                out.push(format!("{key}.vocab_size must be at least 1"));
            }
            if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
                out.push(format!("{key}.learning_rate must be positive"));
            }
        }
        out
    }
}

/// Builds a freshly initialized backend from its spec.
pub fn build_backend(spec: &BackendSpec, max_len: usize, classes: usize) -> Box<dyn EmbeddingBackend> {
    match spec.kind {
        BackendKind::Toy => Box::new(ToyBackend::new(&spec.name, spec.dim, spec.seed, max_len)),
        BackendKind::Transformer => Box::new(AttentionEncoder::new(spec, max_len, classes)),
    }
}

/// Rebuilds a backend and loads its exported state.
pub fn restore_backend(
    spec: &BackendSpec,
    max_len: usize,
    classes: usize,
    state: &[NamedTensor],
) -> Result<Box<dyn EmbeddingBackend>> {
    match spec.kind {
        BackendKind::Toy => Ok(build_backend(spec, max_len, classes)),
        BackendKind::Transformer => {
            let mut enc = AttentionEncoder::new(spec, max_len, classes);
            enc.import_state(state)?;
            Ok(Box::new(enc))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(len: usize, dim: usize, real: usize, base: f32) -> TokenEmbeddingSequence {
        TokenEmbeddingSequence::from_rows(
            len,
            dim,
            (0..real).map(|t| (0..dim).map(|k| base + (t * dim + k) as f32).collect::<Vec<_>>()),
        )
    }

    #[test]
    fn stack_widths() {
        let (a, b, c) = (seq(32, 4, 5, 0.0), seq(32, 4, 5, 100.0), seq(32, 4, 5, 200.0));
        let s = stack(&[("a", &a), ("b", &b), ("c", &c)]).unwrap();
        assert_eq!((s.sequence.len(), s.width()), (32, 12));
        assert_eq!(s.provenance, ["a", "b", "c"]);
        assert_eq!(&s.sequence.row(1)[4..8], b.row(1));

        let single = stack(&[("a", &a)]).unwrap();
        assert_eq!(single.sequence, a);
    }

    #[test]
    fn stack_permutation_permutes_blocks() {
        let (a, b) = (seq(6, 2, 3, 0.0), seq(6, 3, 3, 50.0));
        let ab = stack(&[("a", &a), ("b", &b)]).unwrap();
        let ba = stack(&[("b", &b), ("a", &a)]).unwrap();
        for t in 0..6 {
            assert_eq!(&ab.sequence.row(t)[..2], &ba.sequence.row(t)[3..]);
            assert_eq!(&ab.sequence.row(t)[2..], &ba.sequence.row(t)[..3]);
        }
    }

    #[test]
    fn stack_rejects_mask_mismatch() {
        let (a, b) = (seq(8, 2, 3, 0.0), seq(8, 2, 4, 0.0));
        assert!(matches!(stack(&[("a", &a), ("b", &b)]), Err(Error::Alignment(_))));
        let c = seq(9, 2, 3, 0.0);
        assert!(matches!(stack(&[("a", &a), ("c", &c)]), Err(Error::Alignment(_))));
        assert!(stack(&[]).is_err());
    }

    struct Frozen;

    impl EmbeddingBackend for Frozen {
        fn name(&self) -> &str {
            "frozen"
        }
        fn dim(&self) -> usize {
            1
        }
        fn max_len(&self) -> usize {
            4
        }
        fn extract(&self, _: &CleanText) -> TokenEmbeddingSequence {
            TokenEmbeddingSequence::zeros(4, 1)
        }
        fn fingerprint(&self) -> String {
            "frozen".into()
        }
    }

    #[test]
    fn untrainable_backend_reports_capability() {
        let mut f = Frozen;
        let y = LabelMatrix::zeros(0, 12);
        assert!(matches!(f.fine_tune(&[], &y, 1), Err(Error::Capability(_))));
    }
}
