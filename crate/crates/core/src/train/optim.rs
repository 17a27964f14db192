//! Adam with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::Module;
use crate::{Gradients, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm threshold; 0 disables clipping.
    pub clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 1.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return invalid(format!("bad optimizer hyperparameters {self:?}"));
        }
        if !(self.eps > 0.0) || !(self.clip >= 0.0) {
            return invalid("optimizer eps must be positive and clip nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Global norm before clipping.
    pub grad_norm: f64,
    pub clip_scale: f64,
}

/// Moment estimates are keyed by position in the visit order of trainable
/// parameters, so a model must be stepped with the same module list every
/// time.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    /// Applies one update to every trainable parameter of `modules`.
    /// Parameters absent from `grads` get a zero gradient.
    pub fn step<S: Scalar>(&mut self, modules: &mut [&mut dyn Module<S>], grads: &Gradients<S>) -> Result<StepStats> {
        // gather gradients, checking finiteness first so a bad step leaves
        // parameters untouched
        let mut gs: Vec<Option<Vec<f64>>> = Vec::new();
        let mut sq = 0.0;
        for (i, m) in modules.iter().enumerate() {
            let mut bad = None;
            m.visit(&format!("{i}"), &mut |name, t| {
                if !t.requires_grad() {
                    return;
                }
                let g = grads.get(t).map(|g| g.iter().map(|v| v.wide()).collect::<Vec<f64>>());
                if let Some(g) = &g {
                    if bad.is_none() && g.iter().any(|v| !v.is_finite()) {
                        bad = Some(name.split_once('.').map_or(name, |(_, n)| n).to_string());
                    }
                    sq += g.iter().map(|v| v * v).sum::<f64>();
                }
                gs.push(g);
            });
            if let Some(name) = bad {
                return Err(Error::NonFiniteGradient(name));
            }
        }
        let norm = sq.sqrt();
        let scale = if self.cfg.clip > 0.0 && norm > self.cfg.clip {
            self.cfg.clip / norm
        } else {
            1.0
        };
        if self.m.is_empty() {
            self.m = vec![Vec::new(); gs.len()];
            self.v = vec![Vec::new(); gs.len()];
        } else if self.m.len() != gs.len() {
            return invalid(format!(
                "optimizer state tracks {} parameters, got {}",
                self.m.len(),
                gs.len()
            ));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps, .. } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        for m in modules.iter_mut() {
            m.visit_mut("", &mut |_, t| {
                if !t.requires_grad() {
                    return;
                }
                let i = idx;
                idx += 1;
                let n = t.numel();
                let (mi, vi) = (&mut ms[i], &mut vs[i]);
                if mi.is_empty() {
                    *mi = vec![0.0; n];
                    *vi = vec![0.0; n];
                }
                let Some(g) = &gs[i] else {
                    // zero gradient still decays the moments
                    if mi.iter().all(|&v| v == 0.0) {
                        return;
                    }
                    mi.iter_mut().for_each(|v| *v *= beta1);
                    vi.iter_mut().for_each(|v| *v *= beta2);
                    let data = t
                        .data()
                        .iter()
                        .zip(mi.iter().zip(vi.iter()))
                        .map(|(p, (&m, &v))| S::of(p.wide() - lr * (m / bc1) / ((v / bc2).sqrt() + eps)))
                        .collect();
                    *t = Tensor::param(data, t.shape()).expect("same shape");
                    return;
                };
                let data = t
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let gj = g[j] * scale;
                        mi[j] = beta1 * mi[j] + (1.0 - beta1) * gj;
                        vi[j] = beta2 * vi[j] + (1.0 - beta2) * gj * gj;
                        S::of(p.wide() - lr * (mi[j] / bc1) / ((vi[j] / bc2).sqrt() + eps))
                    })
                    .collect();
                *t = Tensor::param(data, t.shape()).expect("same shape");
            });
        }
        Ok(StepStats {
            grad_norm: norm,
            clip_scale: scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer() -> Linear<f64> {
        Linear::new(&mut ChaCha8Rng::seed_from_u64(0), 2, 2, true).unwrap()
    }

    fn grads_for(l: &Linear<f64>, coef: &[f64]) -> Gradients<f64> {
        let c = Tensor::from_f64(coef, &[2, 2]).unwrap();
        l.weight.mul(&c).unwrap().sum_all().backward().unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut l = layer();
        let before = l.weight.to_vec();
        let g = grads_for(&l, &[0.0; 4]);
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        opt.step(&mut [&mut l], &g).unwrap();
        assert_eq!(l.weight.to_vec(), before);
    }

    #[test]
    fn constant_gradient_steps_approach_lr_times_sign() {
        let mut l = layer();
        let cfg = AdamConfig {
            clip: 0.0,
            ..Default::default()
        };
        let mut opt = Adam::new(cfg).unwrap();
        let coef = [0.3, -2.0, 5e-3, -40.0];
        for _ in 0..200 {
            let g = grads_for(&l, &coef);
            opt.step(&mut [&mut l], &g).unwrap();
        }
        let prev = l.weight.to_vec();
        let g = grads_for(&l, &coef);
        opt.step(&mut [&mut l], &g).unwrap();
        let after = l.weight.to_vec();
        for j in 0..4 {
            let step = after[j] - prev[j];
            assert!((step + 1e-3 * coef[j].signum()).abs() < 1e-5, "{j}: {step}");
        }
    }

    #[test]
    fn clipping_rescales_global_norm() {
        let l = layer();
        // weight gradient (6, 8) on the first row, norm 10
        let g = grads_for(&l, &[6.0, 8.0, 0.0, 0.0]);
        let mut a = l.clone();
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        let stats = opt.step(&mut [&mut a], &g).unwrap();
        assert!((stats.grad_norm - 10.0).abs() < 1e-12);
        assert!((stats.clip_scale - 0.1).abs() < 1e-15);
        assert!((opt.m[0][0] - 0.1 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut l = layer();
        let before = l.weight.to_vec();
        let g = grads_for(&l, &[f64::NAN, 0.0, 0.0, 0.0]);
        let err = Adam::new(AdamConfig::default()).unwrap().step(&mut [&mut l], &g).unwrap_err();
        assert!(matches!(&err, Error::NonFiniteGradient(n) if n == "weight"), "{err}");
        assert_eq!(l.weight.to_vec(), before);
    }
}
