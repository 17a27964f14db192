//! Parameterized layers and the [`Module`] parameter-visiting protocol.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::{Scalar, Tensor};

/// Anything that owns named parameters.
///
/// Names are dotted paths (`blocks.3.attn.q.weight`) and are visited in a
/// fixed order, which checkpoints and the optimizer rely on.
pub trait Module<S: Scalar> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<S>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>));

    fn named_params(&self) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, t| out.push((n.to_string(), t.clone())));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.numel());
        n
    }

    /// Turns gradient tracking on or off for every parameter.
    fn set_trainable(&mut self, flag: bool) {
        self.visit_mut("", &mut |_, t| *t = t.clone().requires_grad_(flag));
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn uniform<S: Scalar>(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Result<Tensor<S>> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| S::of(rng.random_range(-bound..=bound))).collect();
    Tensor::param(data, shape)
}

pub(crate) fn normal<S: Scalar>(rng: &mut impl Rng, shape: &[usize], std: f64) -> Result<Tensor<S>> {
    let n = shape.iter().product();
    let dist = Normal::new(0.0, std).map_err(|e| Error::Invalid(e.to_string()))?;
    let data = (0..n).map(|_| S::of(dist.sample(rng))).collect();
    Tensor::param(data, shape)
}

#[derive(Debug, Clone)]
pub struct Linear<S: Scalar> {
    pub weight: Tensor<S>,
    pub bias: Option<Tensor<S>>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(rng: &mut impl Rng, input: usize, output: usize, bias: bool) -> Result<Self> {
        let bound = 1.0 / (input as f64).sqrt();
        Ok(Self {
            weight: uniform(rng, &[input, output], bound)?,
            bias: if bias { Some(uniform(rng, &[output], bound)?) } else { None },
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let y = x.matmul(&self.weight)?;
        match &self.bias {
            Some(b) => y.add(b),
            None => Ok(y),
        }
    }
}

impl<S: Scalar> Module<S> for Linear<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm<S: Scalar> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
}

impl<S: Scalar> LayerNorm<S> {
    pub fn new(dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::ones(&[dim]).requires_grad_(true),
            beta: Tensor::zeros(&[dim]).requires_grad_(true),
        })
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.layer_norm(&self.gamma, &self.beta, 1e-5)
    }
}

impl<S: Scalar> Module<S> for LayerNorm<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }
}

#[derive(Debug, Clone)]
pub struct Embedding<S: Scalar> {
    pub table: Tensor<S>,
}

impl<S: Scalar> Embedding<S> {
    pub fn new(rng: &mut impl Rng, count: usize, dim: usize) -> Result<Self> {
        Ok(Self {
            table: normal(rng, &[count, dim], 0.3)?,
        })
    }

    pub fn count(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn forward(&self, ids: &[usize], prefix: &[usize]) -> Result<Tensor<S>> {
        self.table.embedding(ids, prefix)
    }
}

impl<S: Scalar> Module<S> for Embedding<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        f(&join(prefix, "table"), &self.table);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        f(&join(prefix, "table"), &mut self.table);
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d<S: Scalar> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub stride: usize,
    pub padding: usize,
}

impl<S: Scalar> Conv1d<S> {
    pub fn new(
        rng: &mut impl Rng,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let bound = 1.0 / ((cin * kernel) as f64).sqrt();
        Ok(Self {
            weight: uniform(rng, &[cout, cin, kernel], bound)?,
            bias: uniform(rng, &[cout], bound)?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.conv1d(&self.weight, Some(&self.bias), self.stride, self.padding)
    }
}

impl<S: Scalar> Module<S> for Conv1d<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct ConvTranspose1d<S: Scalar> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub stride: usize,
    pub padding: usize,
}

impl<S: Scalar> ConvTranspose1d<S> {
    pub fn new(
        rng: &mut impl Rng,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let bound = 1.0 / ((cin * kernel / stride.max(1)) as f64).sqrt();
        Ok(Self {
            weight: uniform(rng, &[cin, cout, kernel], bound)?,
            bias: uniform(rng, &[cout], bound)?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.conv_transpose1d(&self.weight, Some(&self.bias), self.stride, self.padding)
    }
}

impl<S: Scalar> Module<S> for ConvTranspose1d<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Additive attention mask value for blocked positions.
pub const MASK_VALUE: f64 = -1e9;

/// `[T, T]` additive causal mask: 0 on and below the diagonal, −1e9 above.
pub fn causal_mask<S: Scalar>(t: usize) -> Tensor<S> {
    let mut data = vec![S::zero(); t * t];
    for i in 0..t {
        for j in i + 1..t {
            data[i * t + j] = S::of(MASK_VALUE);
        }
    }
    Tensor::new(data, &[t, t]).expect("square mask")
}

/// Multi-head attention; self-attention when `context` is the query input,
/// cross-attention otherwise.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention<S: Scalar> {
    pub q: Linear<S>,
    pub k: Linear<S>,
    pub v: Linear<S>,
    pub o: Linear<S>,
    pub heads: usize,
}

impl<S: Scalar> MultiHeadAttention<S> {
    pub fn new(rng: &mut impl Rng, dim: usize, context_dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Invalid(format!("dim {dim} not divisible by {heads} heads")));
        }
        Ok(Self {
            q: Linear::new(rng, dim, dim, true)?,
            k: Linear::new(rng, context_dim, dim, true)?,
            v: Linear::new(rng, context_dim, dim, true)?,
            o: Linear::new(rng, dim, dim, true)?,
            heads,
        })
    }

    /// `x: [B, Tq, D]`, `context: [B, Tk, Dc]`; `mask` is added to the
    /// `[B, H, Tq, Tk]` scores (suffix broadcast).
    pub fn forward(&self, x: &Tensor<S>, context: &Tensor<S>, mask: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        let (b, tq, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let tk = context.shape()[1];
        let h = self.heads;
        let dh = d / h;
        let split = |t: Tensor<S>, len: usize| -> Result<Tensor<S>> {
            t.reshape(&[b, len, h, dh])?.permute(&[0, 2, 1, 3])
        };
        let q = split(self.q.forward(x)?, tq)?;
        let k = split(self.k.forward(context)?, tk)?;
        let v = split(self.v.forward(context)?, tk)?;
        let mut scores = q.matmul(&k.transpose(2, 3)?)?.scale(1.0 / (dh as f64).sqrt());
        if let Some(m) = mask {
            scores = scores.add(m)?;
        }
        let attn = scores.softmax(3)?;
        let ctx = attn.matmul(&v)?.permute(&[0, 2, 1, 3])?.reshape(&[b, tq, d])?;
        self.o.forward(&ctx)
    }
}

impl<S: Scalar> Module<S> for MultiHeadAttention<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.q.visit(&join(prefix, "q"), f);
        self.k.visit(&join(prefix, "k"), f);
        self.v.visit(&join(prefix, "v"), f);
        self.o.visit(&join(prefix, "o"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.q.visit_mut(&join(prefix, "q"), f);
        self.k.visit_mut(&join(prefix, "k"), f);
        self.v.visit_mut(&join(prefix, "v"), f);
        self.o.visit_mut(&join(prefix, "o"), f);
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward<S: Scalar> {
    pub up: Linear<S>,
    pub down: Linear<S>,
}

impl<S: Scalar> FeedForward<S> {
    pub fn new(rng: &mut impl Rng, dim: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            up: Linear::new(rng, dim, hidden, true)?,
            down: Linear::new(rng, hidden, dim, true)?,
        })
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.down.forward(&self.up.forward(x)?.gelu())
    }
}

impl<S: Scalar> Module<S> for FeedForward<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.up.visit(&join(prefix, "up"), f);
        self.down.visit(&join(prefix, "down"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.up.visit_mut(&join(prefix, "up"), f);
        self.down.visit_mut(&join(prefix, "down"), f);
    }
}

impl<S: Scalar, M: Module<S>> Module<S> for Vec<M> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        for (i, m) in self.iter().enumerate() {
            m.visit(&join(prefix, &i.to_string()), f);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        for (i, m) in self.iter_mut().enumerate() {
            m.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_names_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Linear::<f32>::new(&mut rng, 3, 4, true).unwrap();
        let names: Vec<String> = l.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["weight", "bias"]);
        assert_eq!(l.param_count(), 16);
    }

    #[test]
    fn causal_attention_ignores_future() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let attn = MultiHeadAttention::<f32>::new(&mut rng, 8, 8, 2).unwrap();
        let mut x: Vec<f32> = (0..2 * 5 * 8).map(|i| ((i * 37 % 11) as f32) / 11.0 - 0.5).collect();
        let mask = causal_mask::<f32>(5);
        let t = Tensor::new(x.clone(), &[2, 5, 8]).unwrap();
        let y0 = attn.forward(&t, &t, Some(&mask)).unwrap();
        // perturb time step 3 in both batch rows
        for b in 0..2 {
            for d in 0..8 {
                x[(b * 5 + 3) * 8 + d] += 1.0;
            }
        }
        let t = Tensor::new(x, &[2, 5, 8]).unwrap();
        let y1 = attn.forward(&t, &t, Some(&mask)).unwrap();
        for b in 0..2 {
            for ti in 0..3 {
                for d in 0..8 {
                    let i = (b * 5 + ti) * 8 + d;
                    assert_eq!(y0.data()[i].to_bits(), y1.data()[i].to_bits());
                }
            }
        }
    }

    #[test]
    fn set_trainable_toggles_every_param() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ff = FeedForward::<f32>::new(&mut rng, 4, 8).unwrap();
        ff.set_trainable(false);
        assert!(ff.named_params().iter().all(|(_, t)| !t.requires_grad()));
        ff.set_trainable(true);
        assert!(ff.named_params().iter().all(|(_, t)| t.requires_grad()));
    }
}
