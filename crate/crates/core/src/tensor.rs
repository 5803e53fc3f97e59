use serde::{Deserialize, Serialize};

/// Parameter tensor as stored in checkpoints: row-major `f32` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn from_f64(name: impl Into<String>, shape: Vec<usize>, data: &[f64]) -> Self {
        Self {
            name: name.into(),
            shape,
            data: data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Rounds every value to the nearest `f32`, so that storing the parameters
/// as `f32` is lossless.
pub fn snap_f32(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}

/// Uniform Glorot initialization for a `fan_out × fan_in` matrix.
pub fn glorot_uniform(rng: &mut impl rand::Rng, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut w: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    snap_f32(&mut w);
    w
}
