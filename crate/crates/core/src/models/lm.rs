//! Text conditioner and the multi-codebook autoregressive transformer LM.

use rand::Rng;

use super::config::{ConditionerConfig, LmConfig};
use crate::error::{invalid, Error, Result};
use crate::nn::{causal_mask, join, Embedding, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, MASK_VALUE};
use crate::{Scalar, Tensor};

/// Integer codes `[B, K, T]`, row-major, each in `[0, cardinality)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub codes: Vec<usize>,
    pub batch: usize,
    pub codebooks: usize,
    pub time: usize,
    pub cardinality: usize,
}

impl TokenBatch {
    pub fn new(codes: Vec<usize>, batch: usize, codebooks: usize, time: usize, cardinality: usize) -> Result<Self> {
        if codes.len() != batch * codebooks * time {
            return Err(Error::ShapeMismatch {
                op: "token batch",
                lhs: vec![batch, codebooks, time],
                rhs: vec![codes.len()],
            });
        }
        if let Some(&bad) = codes.iter().find(|&&c| c >= cardinality) {
            return Err(Error::OutOfRange {
                what: "codebook",
                index: bad,
                size: cardinality,
            });
        }
        Ok(Self {
            codes,
            batch,
            codebooks,
            time,
            cardinality,
        })
    }

    pub fn at(&self, b: usize, k: usize, t: usize) -> usize {
        self.codes[(b * self.codebooks + k) * self.time + t]
    }
}

/// Unnormalized scores `[B, K, T, C]`.
#[derive(Debug, Clone)]
pub struct LogitsBatch<S: Scalar>(pub Tensor<S>);

/// Output of every transformer block, each `[B, T, dim]`.
#[derive(Debug, Clone)]
pub struct HiddenTrace<S: Scalar> {
    pub layers: Vec<Tensor<S>>,
}

/// Conditioning sequence `[B, Tc, cond_dim]` plus per-position validity.
#[derive(Debug, Clone)]
pub struct CondEmbeddings<S: Scalar> {
    pub values: Tensor<S>,
    pub valid: Vec<Vec<bool>>,
    /// Output of every encoder layer.
    pub trace: Vec<Tensor<S>>,
}

/// Additive `[B, H, Tq, Tk]` mask blocking invalid key positions.
fn key_padding_mask<S: Scalar>(valid: &[Vec<bool>], heads: usize, tq: usize) -> Result<Tensor<S>> {
    let b = valid.len();
    let tk = valid.first().map_or(0, |v| v.len());
    let mut data = Vec::with_capacity(b * heads * tq * tk);
    for row in valid {
        for _ in 0..heads * tq {
            data.extend(row.iter().map(|&ok| if ok { S::zero() } else { S::of(MASK_VALUE) }));
        }
    }
    Tensor::new(data, &[b, heads, tq, tk])
}

#[derive(Debug, Clone)]
pub struct EncoderLayer<S: Scalar> {
    pub ln1: LayerNorm<S>,
    pub attn: MultiHeadAttention<S>,
    pub ln2: LayerNorm<S>,
    pub ffn: FeedForward<S>,
}

impl<S: Scalar> EncoderLayer<S> {
    fn new(rng: &mut impl Rng, dim: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(dim)?,
            attn: MultiHeadAttention::new(rng, dim, dim, heads)?,
            ln2: LayerNorm::new(dim)?,
            ffn: FeedForward::new(rng, dim, 2 * dim)?,
        })
    }

    fn forward(&self, x: &Tensor<S>, mask: &Tensor<S>) -> Result<Tensor<S>> {
        let h = self.ln1.forward(x)?;
        let x = x.add(&self.attn.forward(&h, &h, Some(mask))?)?;
        x.add(&self.ffn.forward(&self.ln2.forward(&x)?)?)
    }
}

impl<S: Scalar> Module<S> for EncoderLayer<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.ln1.visit(&join(p, "ln1"), f);
        self.attn.visit(&join(p, "attn"), f);
        self.ln2.visit(&join(p, "ln2"), f);
        self.ffn.visit(&join(p, "ffn"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.ln1.visit_mut(&join(p, "ln1"), f);
        self.attn.visit_mut(&join(p, "attn"), f);
        self.ln2.visit_mut(&join(p, "ln2"), f);
        self.ffn.visit_mut(&join(p, "ffn"), f);
    }
}

/// Small transformer encoder turning caption tokens into embeddings.
#[derive(Debug, Clone)]
pub struct Conditioner<S: Scalar> {
    pub cfg: ConditionerConfig,
    pub token_emb: Embedding<S>,
    pub pos_emb: Embedding<S>,
    pub layers: Vec<EncoderLayer<S>>,
    pub final_norm: LayerNorm<S>,
}

impl<S: Scalar> Conditioner<S> {
    pub fn new(rng: &mut impl Rng, cfg: &ConditionerConfig) -> Result<Self> {
        let layers = (0..cfg.layers)
            .map(|_| EncoderLayer::new(rng, cfg.dim, cfg.heads))
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            token_emb: Embedding::new(rng, cfg.vocab, cfg.dim)?,
            pos_emb: Embedding::new(rng, cfg.max_len, cfg.dim)?,
            layers,
            final_norm: LayerNorm::new(cfg.dim)?,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Removes the last `n` encoder layers; the rest are untouched.
    pub fn drop_layers(&mut self, n: usize) -> Result<()> {
        if n >= self.layers.len() {
            return invalid(format!(
                "cannot drop {n} of {} encoder layers",
                self.layers.len()
            ));
        }
        self.layers.truncate(self.layers.len() - n);
        self.cfg.layers = self.layers.len();
        Ok(())
    }

    /// Encodes a batch of captions, right-padded to the longest one.
    pub fn encode(&self, captions: &[Vec<usize>]) -> Result<CondEmbeddings<S>> {
        let b = captions.len();
        let len = captions.iter().map(Vec::len).max().unwrap_or(0);
        if len > self.cfg.max_len {
            return invalid(format!("caption length {len} exceeds {}", self.cfg.max_len));
        }
        for &tok in captions.iter().flatten() {
            if tok >= self.cfg.vocab {
                return Err(Error::OutOfRange {
                    what: "caption vocabulary",
                    index: tok,
                    size: self.cfg.vocab,
                });
            }
        }
        let valid: Vec<Vec<bool>> = captions
            .iter()
            .map(|c| (0..len).map(|i| i < c.len()).collect())
            .collect();
        if len == 0 {
            return Ok(CondEmbeddings {
                values: Tensor::zeros(&[b, 0, self.cfg.dim]),
                valid,
                trace: Vec::new(),
            });
        }
        let ids: Vec<usize> = captions
            .iter()
            .flat_map(|c| (0..len).map(move |i| c.get(i).copied().unwrap_or(0)))
            .collect();
        let pos: Vec<usize> = (0..len).collect();
        let mut x = self
            .token_emb
            .forward(&ids, &[b, len])?
            .add(&self.pos_emb.forward(&pos, &[len])?)?;
        let mask = key_padding_mask(&valid, self.cfg.heads, len)?;
        let mut trace = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            x = layer.forward(&x, &mask)?;
            trace.push(x.clone());
        }
        Ok(CondEmbeddings {
            values: self.final_norm.forward(&x)?,
            valid,
            trace,
        })
    }
}

impl<S: Scalar> Module<S> for Conditioner<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.token_emb.visit(&join(p, "token_emb"), f);
        self.pos_emb.visit(&join(p, "pos_emb"), f);
        self.layers.visit(&join(p, "layers"), f);
        self.final_norm.visit(&join(p, "final_norm"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.token_emb.visit_mut(&join(p, "token_emb"), f);
        self.pos_emb.visit_mut(&join(p, "pos_emb"), f);
        self.layers.visit_mut(&join(p, "layers"), f);
        self.final_norm.visit_mut(&join(p, "final_norm"), f);
    }
}

/// Pre-norm decoder block: causal self-attention, cross-attention to the
/// conditioning sequence, feed-forward.
#[derive(Debug, Clone)]
pub struct LmBlock<S: Scalar> {
    pub ln1: LayerNorm<S>,
    pub self_attn: MultiHeadAttention<S>,
    pub ln2: LayerNorm<S>,
    pub cross_attn: MultiHeadAttention<S>,
    pub ln3: LayerNorm<S>,
    pub ffn: FeedForward<S>,
}

impl<S: Scalar> LmBlock<S> {
    fn new(rng: &mut impl Rng, cfg: &LmConfig) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(cfg.dim)?,
            self_attn: MultiHeadAttention::new(rng, cfg.dim, cfg.dim, cfg.heads)?,
            ln2: LayerNorm::new(cfg.dim)?,
            cross_attn: MultiHeadAttention::new(rng, cfg.dim, cfg.cond_dim(), cfg.heads)?,
            ln3: LayerNorm::new(cfg.dim)?,
            ffn: FeedForward::new(rng, cfg.dim, cfg.ffn_mult * cfg.dim)?,
        })
    }

    /// One block on `x: [B, T, dim]`.
    pub fn forward(
        &self,
        x: &Tensor<S>,
        cond: &Tensor<S>,
        self_mask: &Tensor<S>,
        cross_mask: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        let h = self.ln1.forward(x)?;
        let x = x.add(&self.self_attn.forward(&h, &h, Some(self_mask))?)?;
        let h = self.ln2.forward(&x)?;
        let x = x.add(&self.cross_attn.forward(&h, cond, Some(cross_mask))?)?;
        x.add(&self.ffn.forward(&self.ln3.forward(&x)?)?)
    }
}

impl<S: Scalar> Module<S> for LmBlock<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.ln1.visit(&join(p, "ln1"), f);
        self.self_attn.visit(&join(p, "self_attn"), f);
        self.ln2.visit(&join(p, "ln2"), f);
        self.cross_attn.visit(&join(p, "cross_attn"), f);
        self.ln3.visit(&join(p, "ln3"), f);
        self.ffn.visit(&join(p, "ffn"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.ln1.visit_mut(&join(p, "ln1"), f);
        self.self_attn.visit_mut(&join(p, "self_attn"), f);
        self.ln2.visit_mut(&join(p, "ln2"), f);
        self.cross_attn.visit_mut(&join(p, "cross_attn"), f);
        self.ln3.visit_mut(&join(p, "ln3"), f);
        self.ffn.visit_mut(&join(p, "ffn"), f);
    }
}

/// Token LM predicting all K codebooks of step `t` from steps `< t`.
///
/// The input at step `t` is the sum of the K code embeddings of step `t - 1`
/// (a BOS id `C` at `t = 0`) plus a learned position embedding. A learned
/// null vector is always prepended to the conditioning sequence, so an empty
/// caption attends to it alone.
#[derive(Debug, Clone)]
pub struct LanguageModel<S: Scalar> {
    pub cfg: LmConfig,
    pub conditioner: Conditioner<S>,
    pub null_cond: Tensor<S>,
    pub code_emb: Vec<Embedding<S>>,
    pub pos_emb: Embedding<S>,
    pub blocks: Vec<LmBlock<S>>,
    pub final_norm: LayerNorm<S>,
    pub heads: Vec<Linear<S>>,
}

impl<S: Scalar> LanguageModel<S> {
    pub fn new(rng: &mut impl Rng, cfg: &LmConfig) -> Result<Self> {
        cfg.validate()?;
        let conditioner = Conditioner::new(rng, &cfg.conditioner)?;
        let null_cond = crate::nn::normal(rng, &[1, cfg.cond_dim()], 0.3)?;
        let code_emb = (0..cfg.codebooks)
            .map(|_| Embedding::new(rng, cfg.cardinality + 1, cfg.dim))
            .collect::<Result<_>>()?;
        let pos_emb = Embedding::new(rng, cfg.max_time, cfg.dim)?;
        let blocks = (0..cfg.layers).map(|_| LmBlock::new(rng, cfg)).collect::<Result<_>>()?;
        let heads = (0..cfg.codebooks)
            .map(|_| Linear::new(rng, cfg.dim, cfg.cardinality, true))
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            conditioner,
            null_cond,
            code_emb,
            pos_emb,
            blocks,
            final_norm: LayerNorm::new(cfg.dim)?,
            heads,
        })
    }

    /// Conditioning sequence with the null vector prepended.
    fn condition(&self, captions: &[Vec<usize>]) -> Result<(Tensor<S>, Vec<Vec<bool>>)> {
        let enc = self.conditioner.encode(captions)?;
        let b = captions.len();
        let cd = self.cfg.cond_dim();
        let null = self.null_cond.reshape(&[1, 1, cd])?;
        let nulls = Tensor::concat(&vec![null; b], 0)?;
        let values = Tensor::concat(&[nulls, enc.values], 1)?;
        let valid = enc
            .valid
            .into_iter()
            .map(|row| std::iter::once(true).chain(row).collect())
            .collect();
        Ok((values, valid))
    }

    /// Embedded decoder input `[B, T, dim]`.
    pub fn embed(&self, tokens: &TokenBatch) -> Result<Tensor<S>> {
        let (b, t) = (tokens.batch, tokens.time);
        let mut x: Option<Tensor<S>> = None;
        for (k, emb) in self.code_emb.iter().enumerate() {
            let ids: Vec<usize> = (0..b)
                .flat_map(|bi| (0..t).map(move |ti| (bi, ti)))
                .map(|(bi, ti)| if ti == 0 { self.cfg.cardinality } else { tokens.at(bi, k, ti - 1) })
                .collect();
            let e = emb.forward(&ids, &[b, t])?;
            x = Some(match x {
                Some(acc) => acc.add(&e)?,
                None => e,
            });
        }
        let pos: Vec<usize> = (0..t).collect();
        x.expect("at least one codebook").add(&self.pos_emb.forward(&pos, &[t])?)
    }

    fn check_tokens(&self, captions: &[Vec<usize>], tokens: &TokenBatch) -> Result<()> {
        if tokens.time > self.cfg.max_time {
            return invalid(format!("sequence length {} exceeds max_time {}", tokens.time, self.cfg.max_time));
        }
        if tokens.codebooks != self.cfg.codebooks || tokens.cardinality != self.cfg.cardinality {
            return Err(Error::ShapeMismatch {
                op: "lm_forward",
                lhs: vec![self.cfg.codebooks, self.cfg.cardinality],
                rhs: vec![tokens.codebooks, tokens.cardinality],
            });
        }
        if captions.len() != tokens.batch {
            return Err(Error::ShapeMismatch {
                op: "lm_forward captions",
                lhs: vec![tokens.batch],
                rhs: vec![captions.len()],
            });
        }
        Ok(())
    }

    /// Logits `[B, K, T, C]` and every block output.
    pub fn forward(&self, captions: &[Vec<usize>], tokens: &TokenBatch) -> Result<(LogitsBatch<S>, HiddenTrace<S>)> {
        self.check_tokens(captions, tokens)?;
        let (b, t) = (tokens.batch, tokens.time);
        let (cond, valid) = self.condition(captions)?;
        let self_mask = causal_mask::<S>(t);
        let cross_mask = key_padding_mask(&valid, self.cfg.heads, t)?;
        let mut x = self.embed(tokens)?;
        let mut layers = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            x = block.forward(&x, &cond, &self_mask, &cross_mask)?;
            layers.push(x.clone());
        }
        let h = self.final_norm.forward(&x)?;
        let c = self.cfg.cardinality;
        let per_head = self
            .heads
            .iter()
            .map(|head| head.forward(&h)?.reshape(&[b, 1, t, c]))
            .collect::<Result<Vec<_>>>()?;
        let logits = Tensor::concat(&per_head, 1)?;
        Ok((LogitsBatch(logits), HiddenTrace { layers }))
    }

    /// Softmax posteriors `[B, K, T, C]` as f64, without recording a graph.
    pub fn posteriors(&self, captions: &[Vec<usize>], tokens: &TokenBatch) -> Result<Vec<f64>> {
        let (logits, _) = self.forward(captions, tokens)?;
        Ok(logits.0.detach().softmax(3)?.to_f64_vec())
    }
}

impl<S: Scalar> Module<S> for LanguageModel<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.conditioner.visit(&join(p, "conditioner"), f);
        f(&join(p, "null_cond"), &self.null_cond);
        self.code_emb.visit(&join(p, "code_emb"), f);
        self.pos_emb.visit(&join(p, "pos_emb"), f);
        self.blocks.visit(&join(p, "blocks"), f);
        self.final_norm.visit(&join(p, "final_norm"), f);
        self.heads.visit(&join(p, "heads"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.conditioner.visit_mut(&join(p, "conditioner"), f);
        f(&join(p, "null_cond"), &mut self.null_cond);
        self.code_emb.visit_mut(&join(p, "code_emb"), f);
        self.pos_emb.visit_mut(&join(p, "pos_emb"), f);
        self.blocks.visit_mut(&join(p, "blocks"), f);
        self.final_norm.visit_mut(&join(p, "final_norm"), f);
        self.heads.visit_mut(&join(p, "heads"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> LmConfig {
        LmConfig {
            layers: 2,
            heads: 2,
            dim: 8,
            codebooks: 2,
            cardinality: 5,
            max_time: 10,
            ffn_mult: 2,
            conditioner: ConditionerConfig {
                vocab: 6,
                dim: 4,
                layers: 4,
                heads: 2,
                max_len: 5,
            },
        }
    }

    fn batch(t: usize, seed: usize) -> TokenBatch {
        let codes = (0..2 * 2 * t).map(|i| (i * 7 + seed) % 5).collect();
        TokenBatch::new(codes, 2, 2, t, 5).unwrap()
    }

    #[test]
    fn logits_and_trace_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lm = LanguageModel::<f32>::new(&mut rng, &tiny()).unwrap();
        let (logits, trace) = lm.forward(&[vec![1, 2], vec![3]], &batch(6, 0)).unwrap();
        assert_eq!(logits.0.shape(), &[2, 2, 6, 5]);
        assert_eq!(trace.layers.len(), 2);
        assert_eq!(trace.layers[0].shape(), &[2, 6, 8]);
        assert!(logits.0.all_finite());
    }

    #[test]
    fn future_tokens_do_not_leak() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lm = LanguageModel::<f32>::new(&mut rng, &tiny()).unwrap();
        let caps = vec![vec![1, 2], vec![4]];
        let a = batch(8, 0);
        let mut b = a.clone();
        for bi in 0..2 {
            for k in 0..2 {
                b.codes[(bi * 2 + k) * 8 + 5] = (a.at(bi, k, 5) + 1) % 5;
            }
        }
        let (la, _) = lm.forward(&caps, &a).unwrap();
        let (lb, _) = lm.forward(&caps, &b).unwrap();
        let (da, db) = (la.0.data(), lb.0.data());
        let mut changed_later = false;
        for bi in 0..2 {
            for k in 0..2 {
                for t in 0..8 {
                    for c in 0..5 {
                        let i = ((bi * 2 + k) * 8 + t) * 5 + c;
                        if t <= 5 {
                            assert_eq!(da[i].to_bits(), db[i].to_bits(), "leak at t={t}");
                        } else if da[i] != db[i] {
                            changed_later = true;
                        }
                    }
                }
            }
        }
        assert!(changed_later);
    }

    #[test]
    fn empty_caption_uses_null_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lm = LanguageModel::<f32>::new(&mut rng, &tiny()).unwrap();
        let enc = lm.conditioner.encode(&[vec![], vec![]]).unwrap();
        assert_eq!(enc.values.shape(), &[2, 0, 4]);
        let (logits, _) = lm.forward(&[vec![], vec![]], &batch(3, 1)).unwrap();
        assert!(logits.0.all_finite());
    }

    #[test]
    fn too_long_sequence_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lm = LanguageModel::<f32>::new(&mut rng, &tiny()).unwrap();
        assert!(lm.forward(&[vec![1], vec![1]], &batch(11, 0)).is_err());
    }

    #[test]
    fn out_of_vocab_caption_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lm = LanguageModel::<f32>::new(&mut rng, &tiny()).unwrap();
        assert!(matches!(
            lm.conditioner.encode(&[vec![9]]),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn dropping_encoder_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = Conditioner::<f32>::new(&mut rng, &tiny().conditioner).unwrap();
        let caps = vec![vec![1, 2, 3]];
        let full = base.encode(&caps).unwrap();
        assert_eq!(full.trace.len(), 4);

        let mut same = base.clone();
        same.drop_layers(0).unwrap();
        assert_eq!(same.encode(&caps).unwrap().values.to_vec(), full.values.to_vec());

        let mut three = base.clone();
        three.drop_layers(1).unwrap();
        assert_eq!(three.num_layers(), 3);
        assert!(three.param_count() < base.param_count());
        assert_ne!(three.encode(&caps).unwrap().values.to_vec(), full.values.to_vec());
        // surviving layers are bit-equal
        for ((n, a), (_, b)) in three.named_params().iter().zip(base.named_params()) {
            if n.starts_with("layers.") {
                assert_eq!(a.to_vec(), b.to_vec());
            }
        }

        let mut two = base.clone();
        two.drop_layers(2).unwrap();
        assert_eq!(two.num_layers(), 2);
        assert!(base.clone().drop_layers(4).is_err());
    }
}
