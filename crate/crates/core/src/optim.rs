//! Adam with bias correction folded into the step size.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    lr: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, cfg: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            cfg,
            lr,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update over all parameter groups, in the order given at construction.
    pub fn update<'a>(&mut self, groups: impl IntoIterator<Item = (&'a mut [f64], &'a [f64])>) {
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { beta1, beta2, epsilon } = self.cfg;
        let lr_t = self.lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
        for (k, (params, grads)) in groups.into_iter().enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..params.len() {
                let g = grads[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                params[i] -= lr_t * m[i] / (v[i].sqrt() + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(0.1, AdamConfig::default(), &[2]);
        for _ in 0..500 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.update([(x.as_mut_slice(), g.as_slice())]);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
        assert_eq!(opt.steps(), 500);
    }

    #[test]
    fn first_step_has_size_lr() {
        let mut x = vec![1.0];
        let mut opt = Adam::new(0.001, AdamConfig::default(), &[1]);
        opt.update([(x.as_mut_slice(), [5.0].as_slice())]);
        assert!((x[0] - (1.0 - 0.001)).abs() < 1e-9);
    }
}
