//! Bi-LSTM meta-learner over stacked token embeddings.
//!
//! ```text
//! stacked embeddings (L × width, masked)
//!   → forward LSTM and backward LSTM over the real tokens (H units each)
//!   → [h_fwd_last ; h_bwd_first]               (2H)
//!   → dense, ReLU                              (D)   ← contrastive embedding
//!   → dense, sigmoid                           (C)
//! ```
//!
//! Dropout and recurrent dropout are applied inside the recurrent layer only,
//! with one mask per sequence and direction (inverted scaling). Parameters
//! are held as `f64` rounded to `f32`, so checkpoints store them exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelMatrix, NUM_LABELS};
use crate::embeddings::StackedEmbedding;
use crate::error::{Error, Result};
use crate::optim::AdamConfig;
use crate::tensor::{glorot_uniform, snap_f32, NamedTensor};

pub mod checkpoint;
mod train;

pub use train::{train, LossSetup, TrainData, TrainingState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaLearnerConfig {
    pub lstm_units: usize,
    pub dropout: f64,
    pub recurrent_dropout: f64,
    pub dense_units: usize,
    pub output_units: usize,
    pub max_len: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub threshold: f64,
    pub adam: AdamConfig,
}

impl Default for MetaLearnerConfig {
    fn default() -> Self {
        Self {
            lstm_units: 25,
            dropout: 0.3,
            recurrent_dropout: 0.3,
            dense_units: 50,
            output_units: NUM_LABELS,
            max_len: 32,
            batch_size: 32,
            learning_rate: 0.001,
            epochs: 100,
            threshold: 0.5,
            adam: AdamConfig::default(),
        }
    }
}

impl MetaLearnerConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("lstm_units", self.lstm_units),
            ("dense_units", self.dense_units),
            ("output_units", self.output_units),
            ("max_len", self.max_len),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                out.push(format!("meta_learner.{name} must be at least 1"));
            }
        }
        for (name, v) in [("dropout", self.dropout), ("recurrent_dropout", self.recurrent_dropout)] {
            if !(0.0..1.0).contains(&v) {
                out.push(format!("meta_learner.{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            out.push(format!("meta_learner.learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            out.push(format!("meta_learner.threshold must lie in (0, 1), got {}", self.threshold));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            out.push("meta_learner.adam needs beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Lstm {
    /// 4H × I, gate blocks ordered input, forget, cell, output.
    pub kernel: Vec<f64>,
    /// 4H × H.
    pub recurrent: Vec<f64>,
    /// 4H.
    pub bias: Vec<f64>,
}

impl Lstm {
    fn init(rng: &mut ChaCha8Rng, input: usize, units: usize) -> Self {
        let mut bias = vec![0.0; 4 * units];
        bias[units..2 * units].iter_mut().for_each(|b| *b = 1.0);
        Self {
            kernel: glorot_uniform(rng, input, 4 * units),
            recurrent: glorot_uniform(rng, units, 4 * units),
            bias,
        }
    }

    fn zeros_like(o: &Lstm) -> Self {
        Self {
            kernel: vec![0.0; o.kernel.len()],
            recurrent: vec![0.0; o.recurrent.len()],
            bias: vec![0.0; o.bias.len()],
        }
    }
}

/// Parameters (or gradients) of the whole network.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Params {
    pub fwd: Lstm,
    pub bwd: Lstm,
    /// D × 2H.
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
    /// C × D.
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

pub(crate) const TENSOR_NAMES: [&str; 10] = [
    "lstm_forward.kernel",
    "lstm_forward.recurrent_kernel",
    "lstm_forward.bias",
    "lstm_backward.kernel",
    "lstm_backward.recurrent_kernel",
    "lstm_backward.bias",
    "dense.kernel",
    "dense.bias",
    "output.kernel",
    "output.bias",
];

impl Params {
    pub fn zeros_like(o: &Params) -> Self {
        Self {
            fwd: Lstm::zeros_like(&o.fwd),
            bwd: Lstm::zeros_like(&o.bwd),
            dense_w: vec![0.0; o.dense_w.len()],
            dense_b: vec![0.0; o.dense_b.len()],
            out_w: vec![0.0; o.out_w.len()],
            out_b: vec![0.0; o.out_b.len()],
        }
    }

    pub fn groups(&self) -> [&Vec<f64>; 10] {
        [
            &self.fwd.kernel,
            &self.fwd.recurrent,
            &self.fwd.bias,
            &self.bwd.kernel,
            &self.bwd.recurrent,
            &self.bwd.bias,
            &self.dense_w,
            &self.dense_b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.fwd.kernel,
            &mut self.fwd.recurrent,
            &mut self.fwd.bias,
            &mut self.bwd.kernel,
            &mut self.bwd.recurrent,
            &mut self.bwd.bias,
            &mut self.dense_w,
            &mut self.dense_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.groups_mut().into_iter().zip(other.groups()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaLearner {
    cfg: MetaLearnerConfig,
    input_width: usize,
    pub(crate) params: Params,
}

/// Per-sequence dropout masks for one direction.
struct DropoutMasks {
    input: Vec<f64>,
    recurrent: Vec<f64>,
}

impl DropoutMasks {
    fn sample(rng: &mut ChaCha8Rng, input: usize, units: usize, p_in: f64, p_rec: f64) -> Self {
        let mut draw = |n: usize, p: f64| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
                .collect()
        };
        Self {
            input: draw(input, p_in),
            recurrent: draw(units, p_rec),
        }
    }
}

/// Recorded activations of one direction over one sequence.
struct LstmTrace {
    /// Masked inputs x̃_t.
    inputs: Vec<Vec<f64>>,
    /// h_0 .. h_T.
    hidden: Vec<Vec<f64>>,
    /// c_0 .. c_T.
    cells: Vec<Vec<f64>>,
    /// Post-activation gates [i, f, g, o] per step, 4H each.
    gates: Vec<Vec<f64>>,
    recurrent_mask: Option<Vec<f64>>,
}

pub(crate) struct ExampleTrace {
    fwd: LstmTrace,
    bwd: LstmTrace,
    concat: Vec<f64>,
    dense_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(a, bias)| {
            bias + w[a * cols..(a + 1) * cols]
                .iter()
                .zip(x)
                .map(|(wi, xi)| wi * xi)
                .sum::<f64>()
        })
        .collect()
}

/// `dx += wᵀ dy`, `dw += dy xᵀ`, `db += dy`.
fn affine_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let cols = x.len();
    for (a, &g) in dy.iter().enumerate() {
        db[a] += g;
        if g == 0.0 {
            continue;
        }
        for (d, xi) in dw[a * cols..(a + 1) * cols].iter_mut().zip(x) {
            *d += g * xi;
        }
    }
    if let Some(dx) = dx {
        for (a, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, wi) in dx.iter_mut().zip(&w[a * cols..(a + 1) * cols]) {
                *d += g * wi;
            }
        }
    }
}

fn lstm_forward(p: &Lstm, units: usize, steps: &[&[f32]], masks: Option<&DropoutMasks>) -> LstmTrace {
    let h4 = 4 * units;
    let mut trace = LstmTrace {
        inputs: Vec::with_capacity(steps.len()),
        hidden: vec![vec![0.0; units]],
        cells: vec![vec![0.0; units]],
        gates: Vec::with_capacity(steps.len()),
        recurrent_mask: masks.map(|m| m.recurrent.clone()),
    };
    for x in steps {
        let x: Vec<f64> = match masks {
            Some(m) => x.iter().zip(&m.input).map(|(&v, k)| v as f64 * k).collect(),
            None => x.iter().map(|&v| v as f64).collect(),
        };
        let h_prev = trace.hidden.last().unwrap();
        let h_in: Vec<f64> = match &trace.recurrent_mask {
            Some(m) => h_prev.iter().zip(m).map(|(h, k)| h * k).collect(),
            None => h_prev.clone(),
        };
        let mut z = affine(&p.kernel, &p.bias, &x);
        let zr = affine(&p.recurrent, &vec![0.0; h4], &h_in);
        z.iter_mut().zip(&zr).for_each(|(a, b)| *a += b);

        let mut gates = vec![0.0; h4];
        for u in 0..units {
            gates[u] = sigmoid(z[u]);
            gates[units + u] = sigmoid(z[units + u]);
            gates[2 * units + u] = z[2 * units + u].tanh();
            gates[3 * units + u] = sigmoid(z[3 * units + u]);
        }
        let c_prev = trace.cells.last().unwrap();
        let c: Vec<f64> = (0..units)
            .map(|u| gates[units + u] * c_prev[u] + gates[u] * gates[2 * units + u])
            .collect();
        let h: Vec<f64> = (0..units).map(|u| gates[3 * units + u] * c[u].tanh()).collect();
        trace.inputs.push(x);
        trace.gates.push(gates);
        trace.cells.push(c);
        trace.hidden.push(h);
    }
    trace
}

fn lstm_backward(p: &Lstm, g: &mut Lstm, units: usize, trace: &LstmTrace, dh_last: &[f64]) {
    let mut dh = dh_last.to_vec();
    let mut dc = vec![0.0; units];
    let mut dz = vec![0.0; 4 * units];
    for t in (0..trace.gates.len()).rev() {
        let gates = &trace.gates[t];
        let (c, c_prev) = (&trace.cells[t + 1], &trace.cells[t]);
        for u in 0..units {
            let (i, f, gg, o) = (
                gates[u],
                gates[units + u],
                gates[2 * units + u],
                gates[3 * units + u],
            );
            let tc = c[u].tanh();
            let d_o = dh[u] * tc;
            dc[u] += dh[u] * o * (1.0 - tc * tc);
            let (d_i, d_g, d_f) = (dc[u] * gg, dc[u] * i, dc[u] * c_prev[u]);
            dz[u] = d_i * i * (1.0 - i);
            dz[units + u] = d_f * f * (1.0 - f);
            dz[2 * units + u] = d_g * (1.0 - gg * gg);
            dz[3 * units + u] = d_o * o * (1.0 - o);
            dc[u] *= f;
        }
        let h_prev = &trace.hidden[t];
        let h_in: Vec<f64> = match &trace.recurrent_mask {
            Some(m) => h_prev.iter().zip(m).map(|(h, k)| h * k).collect(),
            None => h_prev.clone(),
        };
        affine_backward(&p.kernel, &trace.inputs[t], &dz, &mut g.kernel, &mut g.bias, None);
        let mut dh_in = vec![0.0; units];
        let mut unused_bias = vec![0.0; 4 * units];
        affine_backward(&p.recurrent, &h_in, &dz, &mut g.recurrent, &mut unused_bias, Some(&mut dh_in));
        dh = match &trace.recurrent_mask {
            Some(m) => dh_in.iter().zip(m).map(|(d, k)| d * k).collect(),
            None => dh_in,
        };
    }
}

/// Inference or training (dropout active, masks drawn from `seed`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    Train { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub batch: usize,
    /// B × C sigmoid outputs.
    pub probs: Vec<f64>,
    /// B × C pre-sigmoid values.
    pub logits: Vec<f64>,
    /// B × D dense-layer activations.
    pub hidden: Vec<f64>,
}

fn example_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl MetaLearner {
    pub fn build(cfg: &MetaLearnerConfig, input_width: usize, seed: u64) -> Result<Self> {
        let violations = cfg.violations();
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        if input_width == 0 {
            return Err(Error::Shape("meta-learner input width must be at least 1".into()));
        }
        let (h, d, c) = (cfg.lstm_units, cfg.dense_units, cfg.output_units);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params {
            fwd: Lstm::init(&mut rng, input_width, h),
            bwd: Lstm::init(&mut rng, input_width, h),
            dense_w: glorot_uniform(&mut rng, 2 * h, d),
            dense_b: vec![0.0; d],
            out_w: glorot_uniform(&mut rng, d, c),
            out_b: vec![0.0; c],
        };
        Ok(Self {
            cfg: cfg.clone(),
            input_width,
            params,
        })
    }

    pub fn config(&self) -> &MetaLearnerConfig {
        &self.cfg
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub(crate) fn check_width(&self, x: &[StackedEmbedding]) -> Result<()> {
        if let Some((i, bad)) = x.iter().enumerate().find(|(_, s)| s.width() != self.input_width) {
            return Err(Error::Shape(format!(
                "input {i} has width {}, model expects {}",
                bad.width(),
                self.input_width
            )));
        }
        Ok(())
    }

    pub(crate) fn trace_example(&self, x: &StackedEmbedding, masks_seed: Option<u64>) -> ExampleTrace {
        let h = self.cfg.lstm_units;
        let seq = &x.sequence;
        let steps: Vec<&[f32]> = (0..seq.len()).filter(|&t| seq.mask()[t]).map(|t| seq.row(t)).collect();
        let reversed: Vec<&[f32]> = steps.iter().rev().copied().collect();
        let (mf, mb) = match masks_seed {
            Some(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let (pi, pr) = (self.cfg.dropout, self.cfg.recurrent_dropout);
                (
                    Some(DropoutMasks::sample(&mut rng, self.input_width, h, pi, pr)),
                    Some(DropoutMasks::sample(&mut rng, self.input_width, h, pi, pr)),
                )
            }
            None => (None, None),
        };
        let fwd = lstm_forward(&self.params.fwd, h, &steps, mf.as_ref());
        let bwd = lstm_forward(&self.params.bwd, h, &reversed, mb.as_ref());
        let mut concat = fwd.hidden.last().unwrap().clone();
        concat.extend_from_slice(bwd.hidden.last().unwrap());
        let dense_pre = affine(&self.params.dense_w, &self.params.dense_b, &concat);
        let hidden: Vec<f64> = dense_pre.iter().map(|&v| v.max(0.0)).collect();
        let logits = affine(&self.params.out_w, &self.params.out_b, &hidden);
        ExampleTrace {
            fwd,
            bwd,
            concat,
            dense_pre,
            hidden,
            logits,
        }
    }

    /// Accumulates parameter gradients for one example given ∂L/∂logits and
    /// ∂L/∂hidden.
    pub(crate) fn backward_example(&self, tr: &ExampleTrace, d_logits: &[f64], d_hidden: &[f64], g: &mut Params) {
        let p = &self.params;
        let h = self.cfg.lstm_units;
        let mut d_act = d_hidden.to_vec();
        affine_backward(&p.out_w, &tr.hidden, d_logits, &mut g.out_w, &mut g.out_b, Some(&mut d_act));
        let d_pre: Vec<f64> = d_act
            .iter()
            .zip(&tr.dense_pre)
            .map(|(d, &z)| if z > 0.0 { *d } else { 0.0 })
            .collect();
        let mut d_concat = vec![0.0; 2 * h];
        affine_backward(&p.dense_w, &tr.concat, &d_pre, &mut g.dense_w, &mut g.dense_b, Some(&mut d_concat));
        lstm_backward(&p.fwd, &mut g.fwd, h, &tr.fwd, &d_concat[..h]);
        lstm_backward(&p.bwd, &mut g.bwd, h, &tr.bwd, &d_concat[h..]);
    }

    pub(crate) fn traces(&self, x: &[StackedEmbedding], mode: Mode) -> Vec<ExampleTrace> {
        x.par_iter()
            .enumerate()
            .map(|(i, s)| {
                let seed = match mode {
                    Mode::Inference => None,
                    Mode::Train { seed } => Some(example_seed(seed, i)),
                };
                self.trace_example(s, seed)
            })
            .collect()
    }

    pub fn forward(&self, x: &[StackedEmbedding], mode: Mode) -> Result<ForwardOutput> {
        self.check_width(x)?;
        let traces = self.traces(x, mode);
        let mut out = ForwardOutput {
            batch: x.len(),
            probs: Vec::with_capacity(x.len() * self.cfg.output_units),
            logits: Vec::with_capacity(x.len() * self.cfg.output_units),
            hidden: Vec::with_capacity(x.len() * self.cfg.dense_units),
        };
        for tr in traces {
            out.probs.extend(tr.logits.iter().map(|&z| sigmoid(z)));
            out.logits.extend_from_slice(&tr.logits);
            out.hidden.extend_from_slice(&tr.hidden);
        }
        Ok(out)
    }

    pub fn predict_proba(&self, x: &[StackedEmbedding]) -> Result<Vec<f64>> {
        Ok(self.forward(x, Mode::Inference)?.probs)
    }

    pub fn predict(&self, x: &[StackedEmbedding], threshold: f64) -> Result<LabelMatrix> {
        let probs = self.predict_proba(x)?;
        Ok(threshold_probs(&probs, self.cfg.output_units, threshold))
    }

    pub fn tensors(&self) -> Vec<NamedTensor> {
        let (i, h, d, c) = (
            self.input_width,
            self.cfg.lstm_units,
            self.cfg.dense_units,
            self.cfg.output_units,
        );
        let shapes = [
            vec![4 * h, i],
            vec![4 * h, h],
            vec![4 * h],
            vec![4 * h, i],
            vec![4 * h, h],
            vec![4 * h],
            vec![d, 2 * h],
            vec![d],
            vec![c, d],
            vec![c],
        ];
        TENSOR_NAMES
            .iter()
            .zip(shapes)
            .zip(self.params.groups())
            .map(|((n, s), data)| NamedTensor::from_f64(*n, s, data))
            .collect()
    }

    pub(crate) fn snap(&mut self) {
        self.params.groups_mut().into_iter().for_each(|g| snap_f32(g));
    }
}

/// `1` where `p ≥ threshold`.
pub fn threshold_probs(probs: &[f64], classes: usize, threshold: f64) -> LabelMatrix {
    let rows = probs.len().checked_div(classes).unwrap_or(0);
    let mut out = LabelMatrix::zeros(rows, classes);
    for (k, &p) in probs.iter().enumerate() {
        if p >= threshold {
            out.set(k / classes, k % classes, true);
        }
    }
    out
}
