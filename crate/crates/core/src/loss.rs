//! Loss components for multi-label training and their hybrid composition.
//!
//! All components work on a [`LossBatch`] of `B` instances and `C` classes:
//!
//! * class-weighted binary cross-entropy, weights `w_c = N / |C_c|`
//! * label correlation matrix `M = YᵀY / N`, used either as a residual cross
//!   term `(1/C) Σ_ij M_ij ⟨r_i, r_j⟩` or as a prediction smoothness penalty
//!   `λ Σ_ij M_ij (p_i − p_j)²`
//! * pairwise contrastive loss on instance embeddings, squared Euclidean
//!   distance, pulled together when similar and hinged at `margin` otherwise
//!
//! [`hybrid_loss`] combines them as `α·CL + β·LCM + γ·CW/C` and returns
//! gradients with respect to the probabilities, logits and embeddings.

use serde::{Deserialize, Serialize};

use crate::corpus::{ClassDistribution, LabelMatrix};
use crate::error::{Error, Result};

/// Probability clip applied before any logarithm.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: Vec<f64>,
    pub source_total: usize,
    pub source_counts: Vec<usize>,
}

impl ClassWeights {
    /// Unit weights, i.e. plain binary cross-entropy.
    pub fn uniform(classes: usize) -> Self {
        Self {
            w: vec![1.0; classes],
            source_total: 0,
            source_counts: Vec::new(),
        }
    }
}

/// `w_c = N / max(|C_c|, 1)`.
pub fn compute_class_weights(dist: &ClassDistribution) -> Result<ClassWeights> {
    if dist.total == 0 {
        return Err(Error::Empty("class weights need at least one instance".into()));
    }
    let n = dist.total as f64;
    Ok(ClassWeights {
        w: dist.counts.iter().map(|&c| n / c.max(1) as f64).collect(),
        source_total: dist.total,
        source_counts: dist.counts.clone(),
    })
}

/// Symmetric C×C co-occurrence matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCorrelationMatrix {
    classes: usize,
    m: Vec<f64>,
}

impl LabelCorrelationMatrix {
    pub fn from_values(classes: usize, m: Vec<f64>) -> Result<Self> {
        if m.len() != classes * classes {
            return Err(Error::Shape(format!(
                "correlation matrix needs {} entries, got {}",
                classes * classes,
                m.len()
            )));
        }
        Ok(Self { classes, m })
    }

    pub fn zeros(classes: usize) -> Self {
        Self {
            classes,
            m: vec![0.0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.classes + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.m
    }
}

/// `M = YᵀY / N`.
pub fn label_correlation_matrix(y: &LabelMatrix) -> Result<LabelCorrelationMatrix> {
    let (n, c) = (y.rows(), y.cols());
    if n == 0 {
        return Err(Error::Empty("correlation matrix needs at least one instance".into()));
    }
    let mut m = vec![0.0; c * c];
    for r in 0..n {
        let row = y.row(r);
        for i in (0..c).filter(|&i| row[i] == 1) {
            for j in (0..c).filter(|&j| row[j] == 1) {
                m[i * c + j] += 1.0;
            }
        }
    }
    let inv = 1.0 / n as f64;
    m.iter_mut().for_each(|v| *v *= inv);
    Ok(LabelCorrelationMatrix { classes: c, m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityRule {
    /// Pairs sharing at least one active label.
    #[default]
    ShareAnyLabel,
    /// Pairs with identical label vectors.
    ExactVectorMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LcmMode {
    /// Residual cross term `(1/C) Σ_ij M_ij ⟨r_i, r_j⟩`.
    #[default]
    Residual,
    /// Smoothness penalty `λ Σ_ij M_ij (p_i − p_j)²`.
    PredictionPenalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridLossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub margin: f64,
    pub lambda_reg: f64,
    pub similarity_rule: SimilarityRule,
    pub lcm_mode: LcmMode,
}

impl Default for HybridLossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.3,
            gamma: 0.4,
            margin: 1.0,
            lambda_reg: 0.1,
            similarity_rule: SimilarityRule::ShareAnyLabel,
            lcm_mode: LcmMode::Residual,
        }
    }
}

impl HybridLossConfig {
    /// Every violated constraint, keyed by field name.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda_reg", self.lambda_reg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                out.push(format!("loss.{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            out.push(format!("loss.margin must be positive, got {}", self.margin));
        }
        if out.is_empty() && self.alpha + self.beta + self.gamma <= 0.0 {
            out.push("loss.alpha + loss.beta + loss.gamma must be positive".into());
        }
        out
    }
}

/// Ablation variants of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Plain binary cross-entropy.
    Baseline,
    /// Class-weighted cross-entropy.
    Cw,
    /// Cross-entropy plus the correlation term.
    Lcm,
    /// Cross-entropy plus the contrastive term.
    Cl,
    /// All three components with the configured coefficients.
    #[default]
    Hybrid,
}

impl LossMode {
    pub const ALL: [LossMode; 5] = [
        LossMode::Baseline,
        LossMode::Cw,
        LossMode::Lcm,
        LossMode::Cl,
        LossMode::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Baseline => "baseline",
            LossMode::Cw => "cw",
            LossMode::Lcm => "lcm",
            LossMode::Cl => "cl",
            LossMode::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Effective coefficients for this mode. Every mode except `hybrid` keeps
    /// the cross-entropy term at unit weight (`γ = 1`); `baseline`, `lcm` and
    /// `cl` also switch the class weights off.
    pub fn resolve(self, cfg: &HybridLossConfig) -> (HybridLossConfig, bool) {
        let mut out = cfg.clone();
        let weighted = match self {
            LossMode::Baseline => {
                (out.alpha, out.beta, out.gamma) = (0.0, 0.0, 1.0);
                false
            }
            LossMode::Cw => {
                (out.alpha, out.beta, out.gamma) = (0.0, 0.0, 1.0);
                true
            }
            LossMode::Lcm => {
                (out.alpha, out.gamma) = (0.0, 1.0);
                false
            }
            LossMode::Cl => {
                (out.beta, out.gamma) = (0.0, 1.0);
                false
            }
            LossMode::Hybrid => true,
        };
        (out, weighted)
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inputs of one loss evaluation. Probabilities are stored clipped to
/// `[PROB_EPS, 1 − PROB_EPS]`.
#[derive(Debug, Clone)]
pub struct LossBatch {
    batch: usize,
    classes: usize,
    embed_dim: usize,
    y_true: Vec<f64>,
    y_pred: Vec<f64>,
    embeddings: Vec<f64>,
    /// ∂(clipped p)/∂(input): sigmoid slope when built from logits, 1 when
    /// built from probabilities, 0 wherever the clip is active.
    input_slope: Vec<f64>,
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LossBatch {
    fn check_shapes(
        y_true: &LabelMatrix,
        values: &[f64],
        embeddings: &[f64],
        embed_dim: usize,
    ) -> Result<()> {
        let (b, c) = (y_true.rows(), y_true.cols());
        if values.len() != b * c {
            return Err(Error::Shape(format!(
                "predictions have {} values, expected {b}×{c}",
                values.len()
            )));
        }
        if embeddings.len() != b * embed_dim {
            return Err(Error::Shape(format!(
                "embeddings have {} values, expected {b}×{embed_dim}",
                embeddings.len()
            )));
        }
        Ok(())
    }

    pub fn from_probabilities(
        y_true: &LabelMatrix,
        y_pred: &[f64],
        embeddings: &[f64],
        embed_dim: usize,
    ) -> Result<Self> {
        Self::check_shapes(y_true, y_pred, embeddings, embed_dim)?;
        let (y_pred, input_slope) = y_pred
            .iter()
            .map(|&p| {
                let q = clip(p);
                (q, if q == p { 1.0 } else { 0.0 })
            })
            .unzip();
        Ok(Self {
            batch: y_true.rows(),
            classes: y_true.cols(),
            embed_dim,
            y_true: y_true.as_slice().iter().map(|&v| v as f64).collect(),
            y_pred,
            embeddings: embeddings.to_vec(),
            input_slope,
        })
    }

    pub fn from_logits(
        y_true: &LabelMatrix,
        logits: &[f64],
        embeddings: &[f64],
        embed_dim: usize,
    ) -> Result<Self> {
        Self::check_shapes(y_true, logits, embeddings, embed_dim)?;
        let (y_pred, input_slope) = logits
            .iter()
            .map(|&z| {
                let p = sigmoid(z);
                let q = clip(p);
                (q, if q == p { p * (1.0 - p) } else { 0.0 })
            })
            .unzip();
        Ok(Self {
            batch: y_true.rows(),
            classes: y_true.cols(),
            embed_dim,
            y_true: y_true.as_slice().iter().map(|&v| v as f64).collect(),
            y_pred,
            embeddings: embeddings.to_vec(),
            input_slope,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn y_pred(&self) -> &[f64] {
        &self.y_pred
    }

    pub fn y_true(&self) -> &[f64] {
        &self.y_true
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    fn pred(&self, i: usize, c: usize) -> f64 {
        self.y_pred[i * self.classes + c]
    }

    fn truth(&self, i: usize, c: usize) -> f64 {
        self.y_true[i * self.classes + c]
    }

    fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.embed_dim..(i + 1) * self.embed_dim]
    }

    fn similar(&self, i: usize, j: usize, rule: SimilarityRule) -> bool {
        let (a, b) = (
            &self.y_true[i * self.classes..(i + 1) * self.classes],
            &self.y_true[j * self.classes..(j + 1) * self.classes],
        );
        match rule {
            SimilarityRule::ShareAnyLabel => a.iter().zip(b).any(|(x, y)| *x > 0.5 && *y > 0.5),
            SimilarityRule::ExactVectorMatch => a == b,
        }
    }
}

fn check_classes(batch: &LossBatch, n: usize, what: &str) -> Result<()> {
    if n != batch.classes {
        return Err(Error::Shape(format!(
            "{what} covers {n} classes, batch has {}",
            batch.classes
        )));
    }
    Ok(())
}

/// Value and gradient w.r.t. the clipped probabilities (B×C) and the
/// embeddings (B×E).
struct Accum {
    value: f64,
    grad_pred: Vec<f64>,
    grad_embed: Vec<f64>,
}

impl Accum {
    fn new(batch: &LossBatch) -> Self {
        Self {
            value: 0.0,
            grad_pred: vec![0.0; batch.batch * batch.classes],
            grad_embed: vec![0.0; batch.batch * batch.embed_dim],
        }
    }
}

/// Batch mean of `−Σ_c w_c [y log p + (1−y) log(1−p)]`.
pub fn weighted_bce(batch: &LossBatch, w: &ClassWeights) -> Result<f64> {
    Ok(weighted_bce_acc(batch, w)?.value)
}

fn weighted_bce_acc(batch: &LossBatch, w: &ClassWeights) -> Result<Accum> {
    check_classes(batch, w.w.len(), "class weights")?;
    let mut acc = Accum::new(batch);
    if batch.batch == 0 {
        return Ok(acc);
    }
    let inv_b = 1.0 / batch.batch as f64;
    for i in 0..batch.batch {
        for c in 0..batch.classes {
            let (p, y, wc) = (batch.pred(i, c), batch.truth(i, c), w.w[c]);
            acc.value -= wc * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            acc.grad_pred[i * batch.classes + c] = -wc * inv_b * (y / p - (1.0 - y) / (1.0 - p));
        }
    }
    acc.value *= inv_b;
    Ok(acc)
}

/// Batch mean of `λ Σ_ij M_ij (p_i − p_j)²` over the rows of `batch`.
pub fn correlation_penalty(
    batch: &LossBatch,
    m: &LabelCorrelationMatrix,
    lambda_reg: f64,
) -> Result<f64> {
    Ok(correlation_penalty_acc(batch, m, lambda_reg)?.value)
}

fn correlation_penalty_acc(
    batch: &LossBatch,
    m: &LabelCorrelationMatrix,
    lambda_reg: f64,
) -> Result<Accum> {
    check_classes(batch, m.classes, "correlation matrix")?;
    let mut acc = Accum::new(batch);
    if batch.batch == 0 || lambda_reg == 0.0 {
        return Ok(acc);
    }
    let c = batch.classes;
    let scale = lambda_reg / batch.batch as f64;
    for i in 0..batch.batch {
        let p = &batch.y_pred[i * c..(i + 1) * c];
        let g = &mut acc.grad_pred[i * c..(i + 1) * c];
        for a in 0..c {
            for b in 0..c {
                let mab = m.get(a, b);
                let d = p[a] - p[b];
                acc.value += mab * d * d;
                g[a] += 2.0 * scale * mab * d;
                g[b] -= 2.0 * scale * mab * d;
            }
        }
    }
    acc.value *= scale;
    Ok(acc)
}

/// `(1/C) Σ_ij M_ij mean_b(r_bi · r_bj)` with residuals `r = p − y`.
pub fn lcm_residual_term(batch: &LossBatch, m: &LabelCorrelationMatrix) -> Result<f64> {
    Ok(lcm_residual_acc(batch, m)?.value)
}

fn lcm_residual_acc(batch: &LossBatch, m: &LabelCorrelationMatrix) -> Result<Accum> {
    check_classes(batch, m.classes, "correlation matrix")?;
    let mut acc = Accum::new(batch);
    if batch.batch == 0 || batch.classes == 0 {
        return Ok(acc);
    }
    let c = batch.classes;
    let scale = 1.0 / (batch.batch as f64 * c as f64);
    for i in 0..batch.batch {
        let r: Vec<f64> = (0..c).map(|k| batch.pred(i, k) - batch.truth(i, k)).collect();
        let g = &mut acc.grad_pred[i * c..(i + 1) * c];
        for a in 0..c {
            for b in 0..c {
                let mab = m.get(a, b);
                acc.value += mab * r[a] * r[b];
                g[a] += scale * mab * r[b];
                g[b] += scale * mab * r[a];
            }
        }
    }
    acc.value *= scale;
    Ok(acc)
}

/// Mean over unordered pairs of `D` (similar) or `max(0, m − D)` (dissimilar),
/// `D` the squared Euclidean distance. Zero when fewer than two instances.
pub fn contrastive_loss(batch: &LossBatch, cfg: &HybridLossConfig) -> f64 {
    contrastive_acc(batch, cfg).value
}

fn contrastive_acc(batch: &LossBatch, cfg: &HybridLossConfig) -> Accum {
    let mut acc = Accum::new(batch);
    let b = batch.batch;
    if b < 2 {
        return acc;
    }
    let e = batch.embed_dim;
    let inv_pairs = 2.0 / (b as f64 * (b as f64 - 1.0));
    let mut diff = vec![0.0; e];
    for i in 0..b {
        for j in i + 1..b {
            let (hi, hj) = (batch.embedding(i), batch.embedding(j));
            for k in 0..e {
                diff[k] = hi[k] - hj[k];
            }
            let dist: f64 = diff.iter().map(|d| d * d).sum();
            let coeff = if batch.similar(i, j, cfg.similarity_rule) {
                acc.value += dist;
                1.0
            } else if cfg.margin - dist > 0.0 {
                acc.value += cfg.margin - dist;
                -1.0
            } else {
                0.0
            };
            if coeff != 0.0 {
                for k in 0..e {
                    let g = coeff * 2.0 * diff[k] * inv_pairs;
                    acc.grad_embed[i * e + k] += g;
                    acc.grad_embed[j * e + k] -= g;
                }
            }
        }
    }
    acc.value *= inv_pairs;
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub contrastive: f64,
    pub correlation: f64,
    pub weighted_bce: f64,
}

#[derive(Debug, Clone)]
pub struct HybridLossOutput {
    pub value: f64,
    /// Unscaled component values: contrastive loss, correlation term (per
    /// `lcm_mode`) and the class-normalized weighted cross-entropy.
    pub components: LossComponents,
    /// ∂L/∂p over the clipped probabilities, B×C.
    pub grad_pred: Vec<f64>,
    /// ∂L/∂(batch input): logits or probabilities, whichever built the batch.
    pub grad_input: Vec<f64>,
    /// ∂L/∂h, B×E.
    pub grad_embeddings: Vec<f64>,
}

/// `α·CL + β·LCM + γ·WBCE/C`.
pub fn hybrid_loss(
    batch: &LossBatch,
    w: &ClassWeights,
    m: &LabelCorrelationMatrix,
    cfg: &HybridLossConfig,
) -> Result<HybridLossOutput> {
    let c = batch.classes.max(1) as f64;
    let cw = weighted_bce_acc(batch, w)?;
    let lcm = match cfg.lcm_mode {
        LcmMode::Residual => lcm_residual_acc(batch, m)?,
        LcmMode::PredictionPenalty => correlation_penalty_acc(batch, m, cfg.lambda_reg)?,
    };
    let cl = contrastive_acc(batch, cfg);

    let cw_scale = cfg.gamma / c;
    let grad_pred: Vec<f64> = cw
        .grad_pred
        .iter()
        .zip(&lcm.grad_pred)
        .map(|(g_cw, g_lcm)| cw_scale * g_cw + cfg.beta * g_lcm)
        .collect();
    let grad_input = grad_pred
        .iter()
        .zip(&batch.input_slope)
        .map(|(g, s)| g * s)
        .collect();
    let grad_embeddings = cl.grad_embed.iter().map(|g| cfg.alpha * g).collect();

    let components = LossComponents {
        contrastive: cl.value,
        correlation: lcm.value,
        weighted_bce: cw.value / c,
    };
    Ok(HybridLossOutput {
        value: cfg.alpha * cl.value + cfg.beta * lcm.value + cfg.gamma * components.weighted_bce,
        components,
        grad_pred,
        grad_input,
        grad_embeddings,
    })
}
