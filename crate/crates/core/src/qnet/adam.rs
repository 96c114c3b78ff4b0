use super::Params;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Params,
    pub v: Params,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, like: &Params) -> Self {
        AdamState {
            config,
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    /// Clips `grads` to the global norm limit, then applies one Adam update.
    /// Returns the pre-clip gradient norm. Updated parameters are rounded to
    /// `f32` precision.
    pub fn update(&mut self, params: &mut Params, grads: &Params) -> Result<f64> {
        if !grads.is_finite() {
            return Err(Error::Training("non-finite gradient".into()));
        }
        let c = self.config;
        let norm = grads.global_norm();
        let scale = if norm > c.grad_clip { c.grad_clip / norm } else { 1.0 };
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                let g = g * scale;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p = (*p - c.lr * mhat / (vhat.sqrt() + c.eps)) as f32 as f64;
            });
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnet::Architecture;
    use ndarray::arr2;

    fn scalar(v: f64) -> Params {
        Params {
            tensors: vec![arr2(&[[v]])],
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let arch = Architecture::default();
        let mut p = Params::init(&arch, 0);
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let zero = p.zeros_like();
        adam.update(&mut p, &zero).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn scalar_closed_form() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(cfg, &p);
        adam.update(&mut p, &scalar(0.5)).unwrap();
        // first step: mhat = g, vhat = g², update = lr·g/(|g| + eps)
        let expected = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p.tensors[0][[0, 0]] - expected).abs() < 1e-7);
        adam.update(&mut p, &scalar(-1.0)).unwrap();
        let m = 0.9 * 0.05 + -0.1;
        let v = 0.999 * 0.001 * 0.25 + 0.001 * 1.0;
        let mhat = m / (1.0 - 0.81);
        let vhat = v / (1.0 - 0.999f64.powi(2));
        let expected2 = expected as f32 as f64 - 0.1 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p.tensors[0][[0, 0]] - expected2).abs() < 1e-6);
    }

    #[test]
    fn clipping_halves_norm_twenty() {
        let cfg = AdamConfig {
            lr: 1.0,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            grad_clip: 10.0,
        };
        let mut p = Params {
            tensors: vec![arr2(&[[0.0, 0.0]])],
        };
        let mut adam = AdamState::new(cfg, &p);
        let g = Params {
            tensors: vec![arr2(&[[12.0, 16.0]])],
        };
        let norm = adam.update(&mut p, &g).unwrap();
        assert_eq!(norm, 20.0);
        // with beta = 0 the stored moment is the clipped gradient itself
        assert_eq!(adam.m.tensors[0], arr2(&[[6.0, 8.0]]));
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut p = scalar(0.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        assert!(adam.update(&mut p, &scalar(f64::NAN)).is_err());
        assert_eq!(adam.step, 0);
    }
}
