//! Deterministic hashed token vectors, standing in for a pretrained encoder.
//!
//! The vector of a token is drawn from a SplitMix64 stream whose state is the
//! first 8 bytes (little endian) of `SHA-256(seed_le_bytes || token_utf8)`.
//! Component `k` is `2·u_k − 1` with `u_k = (next() >> 11) / 2^53`.

use sha2::{Digest, Sha256};

use super::{EmbeddingBackend, TokenEmbeddingSequence};
use crate::corpus::LabelMatrix;
use crate::error::Result;
use crate::preprocess::CleanText;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyBackend {
    name: String,
    dim: usize,
    seed: u64,
    max_len: usize,
}

pub(crate) struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

impl ToyBackend {
    pub fn new(name: &str, dim: usize, seed: u64, max_len: usize) -> Self {
        assert!(dim >= 1, "toy backend dimension must be at least 1");
        Self {
            name: name.to_string(),
            dim,
            seed,
            max_len,
        }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f32> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let digest = h.finalize();
        let mut rng = SplitMix64(u64::from_le_bytes(digest[..8].try_into().unwrap()));
        (0..self.dim)
            .map(|_| (2.0 * rng.next_unit() - 1.0) as f32)
            .collect()
    }
}

impl EmbeddingBackend for ToyBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn extract(&self, text: &CleanText) -> TokenEmbeddingSequence {
        TokenEmbeddingSequence::from_rows(
            self.max_len,
            self.dim,
            text.tokens().map(|t| self.token_vector(t)),
        )
    }

    /// Hashed vectors have nothing to adapt; fine-tuning leaves them as is.
    fn fine_tune(&mut self, _: &[CleanText], _: &LabelMatrix, _: usize) -> Result<()> {
        Ok(())
    }

    fn fingerprint(&self) -> String {
        format!("toy:{}:{}:{}:{}", self.name, self.dim, self.seed, self.max_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{pipeline, PreprocessConfig};

    fn clean(s: &str) -> CleanText {
        pipeline(s, &PreprocessConfig::default()).unwrap()
    }

    #[test]
    fn determinism_and_shape() {
        let b = ToyBackend::new("t", 8, 1, 32);
        assert_eq!(b.token_vector("حب"), b.token_vector("حب"));
        assert_eq!(b.token_vector("حب").len(), 8);
        let s = b.extract(&clean("حب كبير جدا"));
        assert_eq!((s.len(), s.dim(), s.real_tokens()), (32, 8, 3));
        assert_eq!(s.row(1), b.token_vector("كبير").as_slice());
        assert!(s.row(3).iter().all(|&v| v == 0.0));
        assert!(s.as_slice().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
    }

    #[test]
    fn empty_text_is_all_padding() {
        let b = ToyBackend::new("t", 4, 0, 32);
        let s = b.extract(&CleanText::default());
        assert_eq!(s.real_tokens(), 0);
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncates_to_max_len() {
        let b = ToyBackend::new("t", 2, 0, 3);
        let s = b.extract(&clean("كلمه اخري ثالثه رابعه خامسه"));
        assert_eq!(s.real_tokens(), 3);
    }

    #[test]
    fn fine_tune_is_identity() {
        let mut b = ToyBackend::new("t", 4, 3, 32);
        let before = b.clone();
        let texts = vec![clean("حزن شديد")];
        let y = LabelMatrix::zeros(1, 12);
        b.fine_tune(&texts, &y, 5).unwrap();
        assert_eq!(b, before);
    }
}
