use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam optimizer state with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// State shaped after the parameters of `net`.
    pub fn new(config: AdamConfig, net: &Mlp) -> Self {
        Self::for_shapes(config, net.params().iter().map(|p| p.len()))
    }

    pub fn for_shapes(config: AdamConfig, lens: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = lens.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self {
            config,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        let g = grads.slices();
        self.step_slices(net.params_mut(), &g)
    }

    /// One update over parallel parameter/gradient slices.
    pub fn step_slices(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::Shape(format!(
                    "tensor {i}: optimizer expects {} values, got {} params / {} grads",
                    self.m[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = Adam::for_shapes(AdamConfig::with_lr(0.1), [3]);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step_slices(vec![&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so Δ = -lr · g / (|g| + eps)
        let mut adam = Adam::for_shapes(AdamConfig::with_lr(0.1), [1]);
        let mut p = vec![0.0];
        adam.step_slices(vec![&mut p], &[&[1.0]]).unwrap();
        let expected = -0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn two_steps_descend_a_quadratic() {
        let f = |x: f64| (x - 3.0) * (x - 3.0);
        let mut adam = Adam::for_shapes(AdamConfig::with_lr(0.1), [1]);
        let mut p = vec![0.0];
        let start = f(p[0]);
        for _ in 0..2 {
            let g = 2.0 * (p[0] - 3.0);
            adam.step_slices(vec![&mut p], &[&[g]]).unwrap();
        }
        assert!(f(p[0]) < start);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut adam = Adam::for_shapes(AdamConfig::default(), [2]);
        let mut p = vec![0.0; 3];
        assert!(adam.step_slices(vec![&mut p], &[&[0.0; 3]]).is_err());
    }
}
