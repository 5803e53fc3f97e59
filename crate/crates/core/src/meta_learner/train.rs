use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{example_seed, MetaLearner, Mode, Params};
use crate::corpus::LabelMatrix;
use crate::embeddings::StackedEmbedding;
use crate::error::{Error, Result};
use crate::loss::{hybrid_loss, ClassWeights, HybridLossConfig, LabelCorrelationMatrix, LossBatch, LossComponents};
use crate::metrics::micro_f1;
use crate::optim::Adam;

#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub inputs: &'a [StackedEmbedding],
    pub labels: &'a LabelMatrix,
}

impl TrainData<'_> {
    fn check(&self, what: &str) -> Result<()> {
        if self.inputs.len() != self.labels.rows() {
            return Err(Error::Shape(format!(
                "{what}: {} inputs but {} label rows",
                self.inputs.len(),
                self.labels.rows()
            )));
        }
        Ok(())
    }
}

/// The fixed ingredients of the training loss.
#[derive(Debug, Clone)]
pub struct LossSetup {
    pub config: HybridLossConfig,
    pub weights: ClassWeights,
    pub correlation: LabelCorrelationMatrix,
}

#[derive(Debug, Clone)]
pub struct TrainingState {
    pub epochs_completed: usize,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    /// Mean loss components per epoch.
    pub component_history: Vec<LossComponents>,
    /// Dev micro-F1 per epoch; empty without a dev split.
    pub dev_f1_history: Vec<f64>,
    /// 1-based epoch of the best dev micro-F1.
    pub best_epoch: Option<usize>,
    pub best_dev_f1: Option<f64>,
    pub optimizer: Adam,
}

/// Runs the configured number of epochs of Adam on the hybrid loss.
///
/// With a non-empty `dev` split, `model` ends up holding the parameters of
/// the epoch with the highest dev micro-F1 (earliest on ties); otherwise the
/// final parameters.
pub fn train(
    model: &mut MetaLearner,
    train: TrainData<'_>,
    dev: Option<TrainData<'_>>,
    loss: &LossSetup,
    seed: u64,
) -> Result<TrainingState> {
    train.check("training split")?;
    model.check_width(train.inputs)?;
    if let Some(d) = &dev {
        d.check("dev split")?;
        model.check_width(d.inputs)?;
    }
    let violations = loss.config.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let cfg = model.cfg.clone();
    let sizes: Vec<usize> = model.params.groups().iter().map(|g| g.len()).collect();
    let mut state = TrainingState {
        epochs_completed: 0,
        loss_history: Vec::new(),
        component_history: Vec::new(),
        dev_f1_history: Vec::new(),
        best_epoch: None,
        best_dev_f1: None,
        optimizer: Adam::new(cfg.learning_rate, cfg.adam, &sizes),
    };
    let n = train.inputs.len();
    if n == 0 {
        return Err(Error::Empty("training split has no examples".into()));
    }
    let dev = dev.filter(|d| !d.inputs.is_empty());
    let mut best: Option<Params> = None;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut comps = LossComponents {
            contrastive: 0.0,
            correlation: 0.0,
            weighted_bce: 0.0,
        };
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let inputs: Vec<StackedEmbedding> = chunk.iter().map(|&i| train.inputs[i].clone()).collect();
            let labels = train.labels.select(chunk);
            let batch_seed = example_seed(seed ^ 0xD1B5_4A32_D192_ED03, (epoch << 32) | b);
            let traces = model.traces(&inputs, Mode::Train { seed: batch_seed });

            let logits: Vec<f64> = traces.iter().flat_map(|t| t.logits.iter().copied()).collect();
            let hidden: Vec<f64> = traces.iter().flat_map(|t| t.hidden.iter().copied()).collect();
            let lb = LossBatch::from_logits(&labels, &logits, &hidden, cfg.dense_units)?;
            let out = hybrid_loss(&lb, &loss.weights, &loss.correlation, &loss.config)?;
            if !out.value.is_finite() {
                return Err(Error::NonFinite { epoch: epoch + 1, batch: b + 1 });
            }

            let (c, d) = (cfg.output_units, cfg.dense_units);
            let partial: Vec<Params> = traces
                .par_iter()
                .enumerate()
                .map(|(i, tr)| {
                    let mut g = Params::zeros_like(&model.params);
                    model.backward_example(
                        tr,
                        &out.grad_input[i * c..(i + 1) * c],
                        &out.grad_embeddings[i * d..(i + 1) * d],
                        &mut g,
                    );
                    g
                })
                .collect();
            let mut grads = Params::zeros_like(&model.params);
            for g in &partial {
                grads.add_assign(g);
            }
            if grads.groups().iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite { epoch: epoch + 1, batch: b + 1 });
            }
            state.optimizer.update(
                model
                    .params
                    .groups_mut()
                    .into_iter()
                    .zip(grads.groups())
                    .map(|(p, g)| (p.as_mut_slice(), g.as_slice())),
            );
            model.snap();

            let share = chunk.len() as f64;
            total += out.value * share;
            comps.contrastive += out.components.contrastive * share;
            comps.correlation += out.components.correlation * share;
            comps.weighted_bce += out.components.weighted_bce * share;
        }
        let nf = n as f64;
        state.loss_history.push(total / nf);
        state.component_history.push(LossComponents {
            contrastive: comps.contrastive / nf,
            correlation: comps.correlation / nf,
            weighted_bce: comps.weighted_bce / nf,
        });
        state.epochs_completed = epoch + 1;

        if let Some(d) = &dev {
            let pred = model.predict(d.inputs, cfg.threshold)?;
            let f1 = micro_f1(d.labels, &pred)?;
            state.dev_f1_history.push(f1);
            if state.best_dev_f1.is_none_or(|b| f1 > b) {
                state.best_dev_f1 = Some(f1);
                state.best_epoch = Some(epoch + 1);
                best = Some(model.params.clone());
            }
            log::info!(
                "epoch {}/{}: loss {:.6}, dev micro-F1 {:.4}",
                epoch + 1,
                cfg.epochs,
                total / nf,
                f1
            );
        } else {
            log::info!("epoch {}/{}: loss {:.6}", epoch + 1, cfg.epochs, total / nf);
        }
    }
    if let Some(p) = best {
        model.params = p;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{LossMode, LcmMode};
    use crate::meta_learner::tests::random_inputs;
    use crate::meta_learner::MetaLearnerConfig;

    fn labels_for(n: usize) -> LabelMatrix {
        let rows: Vec<Vec<u8>> = (0..n).map(|i| (0..12).map(|c| ((i + c) % 4 == 0) as u8).collect()).collect();
        LabelMatrix::from_rows(&rows).unwrap()
    }

    fn setup(y: &LabelMatrix) -> LossSetup {
        LossSetup {
            config: HybridLossConfig::default(),
            weights: ClassWeights::uniform(12),
            correlation: crate::loss::label_correlation_matrix(y).unwrap(),
        }
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let cfg = MetaLearnerConfig { epochs: 0, ..Default::default() };
        let mut m = MetaLearner::build(&cfg, 8, 1).unwrap();
        let before = m.clone();
        let x = random_inputs(4, 8, 32, 2);
        let y = labels_for(4);
        let s = train(&mut m, TrainData { inputs: &x, labels: &y }, None, &setup(&y), 3).unwrap();
        assert_eq!(m, before);
        assert!(s.loss_history.is_empty());
        assert_eq!(s.optimizer.steps(), 0);
    }

    #[test]
    fn training_is_deterministic_and_changes_every_tensor() {
        let cfg = MetaLearnerConfig {
            epochs: 2,
            batch_size: 4,
            ..Default::default()
        };
        let x = random_inputs(10, 8, 32, 5);
        let y = labels_for(10);
        let run = || {
            let mut m = MetaLearner::build(&cfg, 8, 1).unwrap();
            let s = train(&mut m, TrainData { inputs: &x, labels: &y }, None, &setup(&y), 3).unwrap();
            (m, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa.loss_history, sb.loss_history);
        assert_eq!(sa.optimizer.steps(), 6);
        let init = MetaLearner::build(&cfg, 8, 1).unwrap();
        for (k, (p, q)) in a.params.groups().iter().zip(init.params.groups()).enumerate() {
            assert_ne!(*p, q, "tensor {} did not move", super::super::TENSOR_NAMES[k]);
        }
    }

    #[test]
    fn every_mode_trains() {
        let cfg = MetaLearnerConfig {
            epochs: 1,
            batch_size: 4,
            ..Default::default()
        };
        let x = random_inputs(6, 8, 32, 5);
        let y = labels_for(6);
        for mode in LossMode::ALL {
            for lcm in [LcmMode::Residual, LcmMode::PredictionPenalty] {
                let base = HybridLossConfig { lcm_mode: lcm, ..Default::default() };
                let (resolved, _) = mode.resolve(&base);
                let mut s = setup(&y);
                s.config = resolved;
                let mut m = MetaLearner::build(&cfg, 8, 1).unwrap();
                let st = train(&mut m, TrainData { inputs: &x, labels: &y }, None, &s, 3).unwrap();
                assert!(st.loss_history[0].is_finite(), "{mode}");
            }
        }
    }

    #[test]
    fn mismatched_rows_rejected() {
        let mut m = MetaLearner::build(&MetaLearnerConfig::default(), 8, 1).unwrap();
        let x = random_inputs(3, 8, 32, 5);
        let y = labels_for(4);
        let r = train(&mut m, TrainData { inputs: &x, labels: &y }, None, &setup(&y), 3);
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
