//! On-disk cache of stacked embeddings for one split.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic      8 bytes  "MLECEMB\0"
//! version    u32      1
//! key        32 bytes SHA-256 of the backend fingerprints and texts
//! backends   u32 count, then per backend: u32 byte length + UTF-8 name
//! sequences  u32 count
//! L, d       u32, u32
//! per sequence:
//!   mask     L bytes, 0 or 1
//!   data     L·d f32, row-major
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{EmbeddingBackend, StackedEmbedding, TokenEmbeddingSequence};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::preprocess::CleanText;

pub const MAGIC: &[u8; 8] = b"MLECEMB\0";
pub const VERSION: u32 = 1;

pub type CacheKey = [u8; 32];

pub fn cache_key(backends: &[Box<dyn EmbeddingBackend>], texts: &[CleanText]) -> CacheKey {
    let mut h = Sha256::new();
    for b in backends {
        h.update(b.fingerprint().as_bytes());
        h.update([0u8]);
    }
    for t in texts {
        h.update(t.as_str().as_bytes());
        h.update(b"\n");
    }
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedEmbeddings {
    pub key: CacheKey,
    pub provenance: Vec<String>,
    pub len: usize,
    pub width: usize,
    pub items: Vec<StackedEmbedding>,
}

pub fn encode(key: &CacheKey, items: &[StackedEmbedding]) -> Result<Vec<u8>> {
    let (len, width, provenance) = match items.first() {
        Some(f) => (f.sequence.len(), f.width(), f.provenance.clone()),
        None => (0, 0, Vec::new()),
    };
    let mut w = Writer::default();
    w.bytes(MAGIC).u32(VERSION).bytes(key);
    w.u32(provenance.len() as u32);
    for name in &provenance {
        w.len_prefixed(name.as_bytes());
    }
    w.u32(items.len() as u32).u32(len as u32).u32(width as u32);
    for item in items {
        if item.sequence.len() != len || item.width() != width || item.provenance != provenance {
            return Err(Error::Shape("cached embeddings must share shape and backends".into()));
        }
        let mask: Vec<u8> = item.sequence.mask().iter().map(|&m| m as u8).collect();
        w.bytes(&mask).f32s(item.sequence.as_slice());
    }
    Ok(w.finish())
}

pub fn decode(bytes: &[u8]) -> Result<CachedEmbeddings> {
    let mut r = Reader::new(bytes, "embedding cache");
    if r.bytes(MAGIC.len())? != MAGIC {
        return Err(Error::Corrupt("embedding cache: bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version { found: version, expected: VERSION });
    }
    let key: CacheKey = r.bytes(32)?.try_into().unwrap();
    let n_names = r.u32()? as usize;
    let mut provenance = Vec::new();
    for _ in 0..n_names {
        provenance.push(r.str()?.to_string());
    }
    let count = r.u32()? as usize;
    let len = r.u32()? as usize;
    let width = r.u32()? as usize;
    let per_item = r.element_count(&[len, width], 4)?;
    // Zero-length items would let a huge count run without consuming input.
    let item_bytes = len + per_item * 4;
    if count > 0 && (item_bytes == 0 || count.saturating_mul(item_bytes) > r.remaining()) {
        return Err(Error::Corrupt(format!("embedding cache: {count} items exceed file size")));
    }
    let mut items = Vec::new();
    for _ in 0..count {
        let mask = r
            .bytes(len)?
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Corrupt(format!("embedding cache: mask byte {other}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        let data = r.f32s(per_item)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Corrupt("embedding cache: non-finite value".into()));
        }
        items.push(StackedEmbedding {
            sequence: TokenEmbeddingSequence::from_parts(len, width, data, mask)?,
            provenance: provenance.clone(),
        });
    }
    r.expect_end()?;
    Ok(CachedEmbeddings { key, provenance, len, width, items })
}

/// Returns cached items when `path` holds a valid cache for `key`.
pub fn read_if_fresh(path: &Path, key: &CacheKey) -> Option<Vec<StackedEmbedding>> {
    let bytes = std::fs::read(path).ok()?;
    match decode(&bytes) {
        Ok(c) if &c.key == key => Some(c.items),
        Ok(_) => None,
        Err(e) => {
            log::warn!("ignoring embedding cache {}: {e}", path.display());
            None
        }
    }
}

pub fn write(path: &Path, key: &CacheKey, items: &[StackedEmbedding]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode(key, items)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{extract_stacked, ToyBackend};
    use crate::preprocess::{pipeline, PreprocessConfig};

    fn sample() -> (CacheKey, Vec<StackedEmbedding>) {
        let backends: Vec<Box<dyn EmbeddingBackend>> = vec![
            Box::new(ToyBackend::new("a", 3, 1, 6)),
            Box::new(ToyBackend::new("b", 2, 2, 6)),
        ];
        let cfg = PreprocessConfig::default();
        let texts: Vec<CleanText> = ["غضب شديد", "فرح"]
            .iter()
            .map(|s| pipeline(s, &cfg).unwrap_or_default())
            .collect();
        let items = texts
            .iter()
            .map(|t| extract_stacked(&backends, t).unwrap())
            .collect();
        (cache_key(&backends, &texts), items)
    }

    #[test]
    fn round_trip() {
        let (key, items) = sample();
        let bytes = encode(&key, &items).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back.items, items);
        assert_eq!(back.key, key);
        assert_eq!((back.len, back.width), (6, 5));
    }

    #[test]
    fn corruption_detected() {
        let (key, items) = sample();
        let bytes = encode(&key, &items).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Corrupt(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Corrupt(_))));
        let mut ver = bytes.clone();
        ver[8] = 9;
        assert!(matches!(decode(&ver), Err(Error::Version { found: 9, .. })));
    }

    #[test]
    fn huge_count_of_empty_items_rejected() {
        let (key, _) = sample();
        let mut bytes = encode(&key, &[]).unwrap();
        assert!(decode(&bytes).unwrap().items.is_empty());
        bytes[48..52].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Corrupt(_))));
    }
}
