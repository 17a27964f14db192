//! Multi-scale waveform discriminator: K_d strided-conv stacks, the k-th one
//! seeing the input average-pooled by 2^k.

use rand::Rng;

use super::config::DiscriminatorConfig;
use crate::error::{invalid, Result};
use crate::nn::{join, Conv1d, Module};
use crate::{Scalar, Tensor};

const LEAK: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct DiscriminatorOutput<S: Scalar> {
    /// One `[B, 1, T_k]` score map per discriminator.
    pub scores: Vec<Tensor<S>>,
    /// Hidden activations, `features[k][l]` for discriminator k, layer l.
    pub features: Vec<Vec<Tensor<S>>>,
}

#[derive(Debug, Clone)]
pub struct WaveDiscriminator<S: Scalar> {
    pub layers: Vec<Conv1d<S>>,
    pub output: Conv1d<S>,
}

impl<S: Scalar> WaveDiscriminator<S> {
    pub fn new(rng: &mut impl Rng, cfg: &DiscriminatorConfig) -> Result<Self> {
        let mut layers = Vec::with_capacity(cfg.layers);
        let mut cin = 1;
        let mut ch = cfg.channels;
        for _ in 0..cfg.layers {
            layers.push(Conv1d::new(rng, cin, ch, cfg.kernel, 2, cfg.kernel / 2)?);
            cin = ch;
            ch = (ch * 2).min(cfg.max_channels);
        }
        let mut output = Conv1d::new(rng, cin, 1, 3, 1, 1)?;
        if cfg.zero_init_output {
            output.weight = Tensor::zeros(output.weight.shape()).requires_grad_(true);
            output.bias = Tensor::zeros(output.bias.shape()).requires_grad_(true);
        }
        Ok(Self { layers, output })
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<(Tensor<S>, Vec<Tensor<S>>)> {
        let mut h = x.clone();
        let mut feats = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            h = l.forward(&h)?.leaky_relu(LEAK);
            feats.push(h.clone());
        }
        Ok((self.output.forward(&h)?, feats))
    }
}

impl<S: Scalar> Module<S> for WaveDiscriminator<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.layers.visit(&join(p, "layers"), f);
        self.output.visit(&join(p, "output"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.layers.visit_mut(&join(p, "layers"), f);
        self.output.visit_mut(&join(p, "output"), f);
    }
}

#[derive(Debug, Clone)]
pub struct MultiScaleDiscriminator<S: Scalar> {
    pub cfg: DiscriminatorConfig,
    pub discs: Vec<WaveDiscriminator<S>>,
}

/// Average pool of `[B, 1, N]` by `factor` (N must be a multiple).
pub fn avg_pool<S: Scalar>(x: &Tensor<S>, factor: usize) -> Result<Tensor<S>> {
    if factor == 1 {
        return Ok(x.clone());
    }
    let (b, c, n) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if n % factor != 0 {
        return invalid(format!("length {n} not divisible by pool factor {factor}"));
    }
    x.reshape(&[b, c, n / factor, factor])?.mean(3, false)
}

impl<S: Scalar> MultiScaleDiscriminator<S> {
    pub fn new(rng: &mut impl Rng, cfg: &DiscriminatorConfig) -> Result<Self> {
        if cfg.count == 0 || cfg.layers == 0 || cfg.channels == 0 {
            return invalid("discriminator count, layers and channels must be positive");
        }
        let discs = (0..cfg.count)
            .map(|_| WaveDiscriminator::new(rng, cfg))
            .collect::<Result<_>>()?;
        Ok(Self { cfg: cfg.clone(), discs })
    }

    pub fn count(&self) -> usize {
        self.discs.len()
    }

    /// Scores `[B, 1, N]` audio at every scale.
    pub fn forward(&self, x: &Tensor<S>) -> Result<DiscriminatorOutput<S>> {
        if x.rank() != 3 || x.shape()[1] != 1 {
            return invalid(format!("discriminator expects [B, 1, N], got {:?}", x.shape()));
        }
        let mut out = DiscriminatorOutput {
            scores: Vec::with_capacity(self.count()),
            features: Vec::with_capacity(self.count()),
        };
        for (k, d) in self.discs.iter().enumerate() {
            let (s, f) = d.forward(&avg_pool(x, 1 << k)?)?;
            out.scores.push(s);
            out.features.push(f);
        }
        Ok(out)
    }
}

impl<S: Scalar> Module<S> for MultiScaleDiscriminator<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.discs.visit(&join(p, "discs"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.discs.visit_mut(&join(p, "discs"), f);
    }
}
