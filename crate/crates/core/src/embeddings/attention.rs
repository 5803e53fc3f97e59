//! Small trainable self-attention encoder.
//!
//! Tokens are hashed into a fixed vocabulary. Each position gets
//! `x_t = E[id_t] + P[t]`, one single-head attention block produces
//! `h_t = x_t + W_o Σ_s softmax_s(q_t·k_s/√d) v_s`, and fine-tuning trains
//! the whole stack through a mean-pooled sigmoid head with binary
//! cross-entropy. The head is discarded at extraction time.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{BackendSpec, EmbeddingBackend, HiddenLayer, TokenEmbeddingSequence};
use crate::corpus::LabelMatrix;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::preprocess::CleanText;
use crate::tensor::{glorot_uniform, snap_f32, NamedTensor};

const FINE_TUNE_BATCH: usize = 8;

#[derive(Debug, Clone, PartialEq)]
struct Params {
    token: Vec<f64>,
    position: Vec<f64>,
    query: Vec<f64>,
    key: Vec<f64>,
    value: Vec<f64>,
    output: Vec<f64>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

impl Params {
    fn zeros_like(other: &Params) -> Self {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        Self {
            token: z(&other.token),
            position: z(&other.position),
            query: z(&other.query),
            key: z(&other.key),
            value: z(&other.value),
            output: z(&other.output),
            head_w: z(&other.head_w),
            head_b: z(&other.head_b),
        }
    }

    fn groups(&self) -> [&Vec<f64>; 8] {
        [
            &self.token,
            &self.position,
            &self.query,
            &self.key,
            &self.value,
            &self.output,
            &self.head_w,
            &self.head_b,
        ]
    }

    fn groups_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.token,
            &mut self.position,
            &mut self.query,
            &mut self.key,
            &mut self.value,
            &mut self.output,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }
}

const TENSOR_NAMES: [&str; 8] = [
    "token_embedding",
    "position_embedding",
    "attention.query",
    "attention.key",
    "attention.value",
    "attention.output",
    "head.kernel",
    "head.bias",
];

#[derive(Debug, Clone)]
pub struct AttentionEncoder {
    name: String,
    dim: usize,
    vocab: usize,
    max_len: usize,
    classes: usize,
    layer: HiddenLayer,
    learning_rate: f64,
    seed: u64,
    params: Params,
}

struct Forward {
    ids: Vec<usize>,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
    mixed: Vec<f64>,
    h: Vec<f64>,
}

/// `out[a] += Σ_b w[a, b] x[b]` for a `rows × cols` matrix.
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (a, o) in out.iter_mut().enumerate() {
        *o += w[a * cols..(a + 1) * cols]
            .iter()
            .zip(x)
            .map(|(wi, xi)| wi * xi)
            .sum::<f64>();
    }
}

/// `dx += wᵀ dy` and `dw += dy xᵀ`.
fn matvec_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], dx: &mut [f64]) {
    let cols = x.len();
    for (a, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[a * cols..(a + 1) * cols];
        let drow = &mut dw[a * cols..(a + 1) * cols];
        for b in 0..cols {
            drow[b] += g * x[b];
            dx[b] += g * row[b];
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl AttentionEncoder {
    pub fn new(spec: &BackendSpec, max_len: usize, classes: usize) -> Self {
        let d = spec.dim;
        let vocab = spec.vocab_size.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut uniform = |n: usize, limit: f64| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
            snap_f32(&mut v);
            v
        };
        let token = uniform(vocab * d, 0.5);
        let position = uniform(max_len * d, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
        let params = Params {
            token,
            position,
            query: glorot_uniform(&mut rng, d, d),
            key: glorot_uniform(&mut rng, d, d),
            value: glorot_uniform(&mut rng, d, d),
            output: glorot_uniform(&mut rng, d, d),
            head_w: glorot_uniform(&mut rng, d, classes),
            head_b: vec![0.0; classes],
        };
        Self {
            name: spec.name.clone(),
            dim: d,
            vocab,
            max_len,
            classes,
            layer: spec.layer,
            learning_rate: spec.learning_rate,
            seed: spec.seed,
            params,
        }
    }

    fn token_id(&self, token: &str) -> usize {
        let digest = Sha256::digest(token.as_bytes());
        (u64::from_le_bytes(digest[..8].try_into().unwrap()) % self.vocab as u64) as usize
    }

    fn ids(&self, text: &CleanText) -> Vec<usize> {
        text.tokens()
            .take(self.max_len)
            .map(|t| self.token_id(t))
            .collect()
    }

    fn forward(&self, ids: &[usize]) -> Forward {
        let (n, d) = (ids.len(), self.dim);
        let p = &self.params;
        let mut x = vec![0.0; n * d];
        for (t, &id) in ids.iter().enumerate() {
            for k in 0..d {
                x[t * d + k] = p.token[id * d + k] + p.position[t * d + k];
            }
        }
        let project = |w: &[f64]| {
            let mut out = vec![0.0; n * d];
            for t in 0..n {
                matvec_add(w, &x[t * d..(t + 1) * d], &mut out[t * d..(t + 1) * d]);
            }
            out
        };
        let (q, k, v) = (project(&p.query), project(&p.key), project(&p.value));

        let scale = 1.0 / (d as f64).sqrt();
        let mut attn = vec![0.0; n * n];
        for t in 0..n {
            let row = &mut attn[t * n..(t + 1) * n];
            for s in 0..n {
                row[s] = scale
                    * q[t * d..(t + 1) * d]
                        .iter()
                        .zip(&k[s * d..(s + 1) * d])
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for r in row.iter_mut() {
                *r = (*r - max).exp();
                z += *r;
            }
            row.iter_mut().for_each(|r| *r /= z);
        }

        let mut mixed = vec![0.0; n * d];
        for t in 0..n {
            for s in 0..n {
                let a = attn[t * n + s];
                for j in 0..d {
                    mixed[t * d + j] += a * v[s * d + j];
                }
            }
        }
        let mut h = x.clone();
        for t in 0..n {
            matvec_add(&p.output, &mixed[t * d..(t + 1) * d], &mut h[t * d..(t + 1) * d]);
        }
        Forward {
            ids: ids.to_vec(),
            x,
            q,
            k,
            v,
            attn,
            mixed,
            h,
        }
    }

    /// Mean-over-classes BCE of the pooled head for one example, adding
    /// `scale · ∂loss/∂θ` into `grads` when given.
    fn example_loss(&self, ids: &[usize], y: &[u8], grads: Option<(&mut Params, f64)>) -> f64 {
        let (n, d, c) = (ids.len(), self.dim, self.classes);
        if n == 0 {
            return 0.0;
        }
        let fw = self.forward(ids);
        let p = &self.params;
        let mut pooled = vec![0.0; d];
        for t in 0..n {
            for j in 0..d {
                pooled[j] += fw.h[t * d + j] / n as f64;
            }
        }
        let mut logits = p.head_b.clone();
        matvec_add(&p.head_w, &pooled, &mut logits);
        let mut loss = 0.0;
        let mut dlogits = vec![0.0; c];
        for k in 0..c {
            let prob = sigmoid(logits[k]).clamp(1e-12, 1.0 - 1e-12);
            let yk = y[k] as f64;
            loss -= (yk * prob.ln() + (1.0 - yk) * (1.0 - prob).ln()) / c as f64;
            dlogits[k] = (sigmoid(logits[k]) - yk) / c as f64;
        }

        let Some((g, scale)) = grads else {
            return loss;
        };
        dlogits.iter_mut().for_each(|v| *v *= scale);
        let mut dpooled = vec![0.0; d];
        for k in 0..c {
            g.head_b[k] += dlogits[k];
        }
        matvec_backward(&p.head_w, &pooled, &dlogits, &mut g.head_w, &mut dpooled);

        let dh: Vec<f64> = (0..n * d).map(|i| dpooled[i % d] / n as f64).collect();
        let mut dx = dh.clone();
        let mut dmixed = vec![0.0; n * d];
        for t in 0..n {
            let r = t * d..(t + 1) * d;
            matvec_backward(
                &p.output,
                &fw.mixed[r.clone()],
                &dh[r.clone()],
                &mut g.output,
                &mut dmixed[r],
            );
        }
        let mut dv = vec![0.0; n * d];
        let mut dscore = vec![0.0; n * n];
        for t in 0..n {
            let mut da = vec![0.0; n];
            for s in 0..n {
                let a = fw.attn[t * n + s];
                for j in 0..d {
                    da[s] += dmixed[t * d + j] * fw.v[s * d + j];
                    dv[s * d + j] += a * dmixed[t * d + j];
                }
            }
            let dot: f64 = (0..n).map(|s| fw.attn[t * n + s] * da[s]).sum();
            for s in 0..n {
                dscore[t * n + s] = fw.attn[t * n + s] * (da[s] - dot);
            }
        }
        let scale_qk = 1.0 / (d as f64).sqrt();
        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        for t in 0..n {
            for s in 0..n {
                let ds = dscore[t * n + s] * scale_qk;
                for j in 0..d {
                    dq[t * d + j] += ds * fw.k[s * d + j];
                    dk[s * d + j] += ds * fw.q[t * d + j];
                }
            }
        }
        for t in 0..n {
            let r = t * d..(t + 1) * d;
            let xt = &fw.x[r.clone()];
            let mut dxt = vec![0.0; d];
            matvec_backward(&p.query, xt, &dq[r.clone()], &mut g.query, &mut dxt);
            matvec_backward(&p.key, xt, &dk[r.clone()], &mut g.key, &mut dxt);
            matvec_backward(&p.value, xt, &dv[r.clone()], &mut g.value, &mut dxt);
            for j in 0..d {
                dx[t * d + j] += dxt[j];
            }
        }
        for (t, &id) in fw.ids.iter().enumerate() {
            for j in 0..d {
                g.token[id * d + j] += dx[t * d + j];
                g.position[t * d + j] += dx[t * d + j];
            }
        }
        loss
    }

    pub(crate) fn import_state(&mut self, state: &[NamedTensor]) -> Result<()> {
        let expected = self.export_state();
        for (slot, want) in self.params.groups_mut().into_iter().zip(&expected) {
            let found = state
                .iter()
                .find(|t| t.name == want.name)
                .ok_or_else(|| Error::Corrupt(format!("backend `{}`: missing tensor `{}`", self.name, want.name)))?;
            if found.shape != want.shape || found.data.len() != want.data.len() {
                return Err(Error::Shape(format!(
                    "backend `{}` tensor `{}` has shape {:?}, expected {:?}",
                    self.name, want.name, found.shape, want.shape
                )));
            }
            *slot = found.to_f64();
        }
        Ok(())
    }
}

impl EmbeddingBackend for AttentionEncoder {
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
        let ids = self.ids(text);
        let d = self.dim;
        let fw = self.forward(&ids);
        let row = |t: usize| -> Vec<f32> {
            (0..d)
                .map(|j| {
                    let (x, h) = (fw.x[t * d + j], fw.h[t * d + j]);
                    (match self.layer {
                        HiddenLayer::Final => h,
                        HiddenLayer::Input => x,
                        HiddenLayer::Mean => 0.5 * (x + h),
                    }) as f32
                })
                .collect()
        };
        TokenEmbeddingSequence::from_rows(self.max_len, d, (0..ids.len()).map(row))
    }

    fn fine_tune(&mut self, texts: &[CleanText], labels: &LabelMatrix, epochs: usize) -> Result<()> {
        if texts.len() != labels.rows() || labels.cols() != self.classes {
            return Err(Error::Shape(format!(
                "fine-tuning `{}`: {} texts, labels {}×{}, expected {} classes",
                self.name,
                texts.len(),
                labels.rows(),
                labels.cols(),
                self.classes
            )));
        }
        if epochs == 0 {
            return Ok(());
        }
        if texts.is_empty() {
            return Err(Error::Empty(format!("no data to fine-tune `{}`", self.name)));
        }
        let ids: Vec<Vec<usize>> = texts.iter().map(|t| self.ids(t)).collect();
        let sizes: Vec<usize> = self.params.groups().iter().map(|g| g.len()).collect();
        let mut opt = Adam::new(self.learning_rate, AdamConfig::default(), &sizes);
        let mut order: Vec<usize> = (0..texts.len()).collect();
        for epoch in 0..epochs {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed ^ (epoch as u64 + 1)));
            for batch in order.chunks(FINE_TUNE_BATCH) {
                let mut grads = Params::zeros_like(&self.params);
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    self.example_loss(&ids[i], labels.row(i), Some((&mut grads, scale)));
                }
                let grad_groups = grads.groups();
                opt.update(
                    self.params
                        .groups_mut()
                        .into_iter()
                        .zip(grad_groups)
                        .map(|(p, g)| (p.as_mut_slice(), g.as_slice())),
                );
                self.params.groups_mut().into_iter().for_each(|g| snap_f32(g));
            }
        }
        Ok(())
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "{}:{}:{}:{}:{}:{:?}",
            self.name, self.dim, self.vocab, self.max_len, self.classes, self.layer
        ));
        for g in self.params.groups() {
            for v in g {
                h.update((*v as f32).to_le_bytes());
            }
        }
        format!("transformer:{}", hex::encode(h.finalize()))
    }

    fn export_state(&self) -> Vec<NamedTensor> {
        let (d, v, l, c) = (self.dim, self.vocab, self.max_len, self.classes);
        let shapes = [
            vec![v, d],
            vec![l, d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![c, d],
            vec![c],
        ];
        TENSOR_NAMES
            .iter()
            .zip(shapes)
            .zip(self.params.groups())
            .map(|((name, shape), data)| NamedTensor::from_f64(*name, shape, data))
            .collect()
    }
}
