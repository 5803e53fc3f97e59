//! Binary checkpoint container.
//!
//! ```text
//! magic    "MLECCKPT"
//! version  u32
//! config   u32 length + UTF-8 JSON object
//! count    u32
//! tensors  count × { u32 name length, name, u32 ndim, ndim × u32 dims, f32 data }
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MetaLearner, MetaLearnerConfig, Params, TENSOR_NAMES};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::tensor::NamedTensor;

pub const MAGIC: &[u8; 8] = b"MLECCKPT";
pub const VERSION: u32 = 1;

/// JSON config block plus named tensors, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: serde_json::Map<String, serde_json::Value>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn encode(&self) -> Vec<u8> {
        let config = serde_json::Value::Object(self.config.clone()).to_string();
        let mut w = Writer::default();
        w.bytes(MAGIC)
            .u32(VERSION)
            .len_prefixed(config.as_bytes())
            .u32(self.tensors.len() as u32);
        for t in &self.tensors {
            w.len_prefixed(t.name.as_bytes()).u32(t.shape.len() as u32);
            for &d in &t.shape {
                w.u32(d as u32);
            }
            w.f32s(&t.data);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        if r.bytes(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
            return Err(Error::Corrupt("checkpoint: bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version { found: version, expected: VERSION });
        }
        let config = match serde_json::from_str(r.str()?) {
            Ok(serde_json::Value::Object(m)) => m,
            Ok(_) => return Err(Error::Corrupt("checkpoint: config block is not an object".into())),
            Err(e) => return Err(Error::Corrupt(format!("checkpoint: config block: {e}"))),
        };
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.str()?.to_string();
            let ndim = r.u32()? as usize;
            if ndim > 8 {
                return Err(Error::Corrupt(format!("checkpoint: tensor {name} has {ndim} dimensions")));
            }
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = r.element_count(&shape, 4)?;
            let data = r.f32s(n)?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Corrupt(format!("checkpoint: tensor {name} has non-finite values")));
            }
            if tensors.iter().any(|t: &NamedTensor| t.name == name) {
                return Err(Error::Corrupt(format!("checkpoint: duplicate tensor {name}")));
            }
            tensors.push(NamedTensor { name, shape, data });
        }
        r.expect_end()?;
        Ok(Self { config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Corrupt(m) => Error::Corrupt(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaLearnerHeader {
    config: MetaLearnerConfig,
    input_width: usize,
}

const HEADER_KEY: &str = "meta_learner";

impl MetaLearner {
    /// Writes the model's header and tensors into `ckpt`, replacing any
    /// earlier meta-learner entries.
    pub fn write_into(&self, ckpt: &mut Checkpoint) {
        let header = MetaLearnerHeader {
            config: self.cfg.clone(),
            input_width: self.input_width,
        };
        ckpt.config
            .insert(HEADER_KEY.into(), serde_json::to_value(header).expect("header serializes"));
        ckpt.tensors.retain(|t| !TENSOR_NAMES.contains(&t.name.as_str()));
        ckpt.tensors.extend(self.tensors());
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint {
            config: Default::default(),
            tensors: Vec::new(),
        };
        self.write_into(&mut c);
        c
    }

    /// Rebuilds the model from a checkpoint; unrelated config keys and
    /// tensors are ignored.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let header = ckpt
            .config
            .get(HEADER_KEY)
            .ok_or_else(|| Error::Corrupt("checkpoint: no meta_learner header".into()))?;
        let header: MetaLearnerHeader = serde_json::from_value(header.clone())
            .map_err(|e| Error::Corrupt(format!("checkpoint: meta_learner header: {e}")))?;
        let violations = header.config.violations();
        if !violations.is_empty() {
            return Err(Error::Corrupt(format!(
                "checkpoint: invalid meta_learner config: {}",
                violations.join("; ")
            )));
        }
        let mut model = MetaLearner::build(&header.config, header.input_width, 0)
            .map_err(|e| Error::Corrupt(format!("checkpoint: {e}")))?;
        let template = model.tensors();
        let mut params = Params::zeros_like(&model.params);
        for ((want, slot), name) in template.iter().zip(params.groups_mut()).zip(TENSOR_NAMES) {
            let t = ckpt
                .tensor(name)
                .ok_or_else(|| Error::Corrupt(format!("checkpoint: missing tensor {name}")))?;
            if t.shape != want.shape {
                return Err(Error::Corrupt(format!(
                    "checkpoint: tensor {name} has shape {:?}, expected {:?}",
                    t.shape, want.shape
                )));
            }
            *slot = t.to_f64();
        }
        model.params = params;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Loads and checks that the stored input width matches `width`.
    pub fn load_expecting(path: impl AsRef<Path>, width: usize) -> Result<Self> {
        let m = Self::load(path)?;
        if m.input_width != width {
            return Err(Error::Shape(format!(
                "checkpoint expects input width {}, got {width}",
                m.input_width
            )));
        }
        Ok(m)
    }
}
