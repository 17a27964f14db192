//! Convolutional waveform codec: strided-conv encoder, residual vector
//! quantizer, transposed-conv decoder.

use rand::Rng;

use super::config::CodecConfig;
use super::lm::TokenBatch;
use crate::error::{invalid, Error, Result};
use crate::nn::{join, Conv1d, ConvTranspose1d, Module};
use crate::{Scalar, Tensor};

/// Mono audio `[B, 1, N]`.
#[derive(Debug, Clone)]
pub struct Waveform<S: Scalar> {
    pub samples: Tensor<S>,
    pub sample_rate: u32,
}

impl<S: Scalar> Waveform<S> {
    pub fn new(samples: Tensor<S>, sample_rate: u32) -> Result<Self> {
        if samples.rank() != 3 || samples.shape()[1] != 1 {
            return Err(Error::ShapeMismatch {
                op: "waveform",
                lhs: samples.shape().to_vec(),
                rhs: vec![0, 1, 0],
            });
        }
        Ok(Self { samples, sample_rate })
    }

    /// Stacks equal-length clips into one batch.
    pub fn from_clips(clips: &[Vec<f32>], sample_rate: u32) -> Result<Self> {
        let n = clips.first().map_or(0, Vec::len);
        if clips.iter().any(|c| c.len() != n) {
            return invalid("clips in a batch must share a length");
        }
        let data = clips.iter().flatten().map(|&v| S::of(v as f64)).collect();
        Self::new(Tensor::new(data, &[clips.len(), 1, n])?, sample_rate)
    }

    pub fn batch(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.samples.shape()[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// (kernel, padding) making a stride-`s` conv map length `L` to exactly `L / s`
/// and the matching transposed conv map `L` to `L * s`.
fn resample_geometry(stride: usize) -> (usize, usize) {
    if stride.is_multiple_of(2) {
        (2 * stride, stride / 2)
    } else {
        (stride, 0)
    }
}

#[derive(Debug, Clone)]
pub struct ResidualUnit<S: Scalar> {
    pub conv1: Conv1d<S>,
    pub conv2: Conv1d<S>,
}

impl<S: Scalar> ResidualUnit<S> {
    fn new(rng: &mut impl Rng, ch: usize) -> Result<Self> {
        let hidden = (ch / 2).max(1);
        Ok(Self {
            conv1: Conv1d::new(rng, ch, hidden, 3, 1, 1)?,
            conv2: Conv1d::new(rng, hidden, ch, 1, 1, 0)?,
        })
    }

    fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let h = self.conv1.forward(&x.elu(1.0))?;
        x.add(&self.conv2.forward(&h.elu(1.0))?)
    }
}

impl<S: Scalar> Module<S> for ResidualUnit<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.conv1.visit(&join(p, "conv1"), f);
        self.conv2.visit(&join(p, "conv2"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.conv1.visit_mut(&join(p, "conv1"), f);
        self.conv2.visit_mut(&join(p, "conv2"), f);
    }
}

impl<S: Scalar> Module<S> for Option<ResidualUnit<S>> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        if let Some(r) = self {
            r.visit(p, f);
        }
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        if let Some(r) = self {
            r.visit_mut(p, f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderBlock<S: Scalar> {
    pub residual: Option<ResidualUnit<S>>,
    pub down: Conv1d<S>,
}

#[derive(Debug, Clone)]
pub struct Encoder<S: Scalar> {
    pub conv_in: Conv1d<S>,
    pub blocks: Vec<EncoderBlock<S>>,
    pub conv_out: Conv1d<S>,
}

impl<S: Scalar> Encoder<S> {
    pub fn new(rng: &mut impl Rng, cfg: &CodecConfig) -> Result<Self> {
        let mut ch = cfg.base_channels;
        let conv_in = Conv1d::new(rng, 1, ch, 7, 1, 3)?;
        let mut blocks = Vec::new();
        for &s in &cfg.strides {
            let (k, p) = resample_geometry(s);
            let residual = if cfg.residual_units { Some(ResidualUnit::new(rng, ch)?) } else { None };
            blocks.push(EncoderBlock {
                residual,
                down: Conv1d::new(rng, ch, 2 * ch, k, s, p)?,
            });
            ch *= 2;
        }
        Ok(Self {
            conv_in,
            blocks,
            conv_out: Conv1d::new(rng, ch, cfg.latent_dim, 3, 1, 1)?,
        })
    }

    /// `[B, 1, N] -> [B, latent, N / downsample]`
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut h = self.conv_in.forward(x)?;
        for b in &self.blocks {
            if let Some(r) = &b.residual {
                h = r.forward(&h)?;
            }
            h = b.down.forward(&h.elu(1.0))?;
        }
        self.conv_out.forward(&h.elu(1.0))
    }
}

impl<S: Scalar> Module<S> for Encoder<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.conv_in.visit(&join(p, "conv_in"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            let bp = join(p, &format!("blocks.{i}"));
            b.residual.visit(&join(&bp, "residual"), f);
            b.down.visit(&join(&bp, "down"), f);
        }
        self.conv_out.visit(&join(p, "conv_out"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.conv_in.visit_mut(&join(p, "conv_in"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let bp = join(p, &format!("blocks.{i}"));
            b.residual.visit_mut(&join(&bp, "residual"), f);
            b.down.visit_mut(&join(&bp, "down"), f);
        }
        self.conv_out.visit_mut(&join(p, "conv_out"), f);
    }
}

#[derive(Debug, Clone)]
pub struct DecoderBlock<S: Scalar> {
    pub up: ConvTranspose1d<S>,
    pub residual: Option<ResidualUnit<S>>,
}

/// Mirror of the encoder; `decoder_channels` plays the role of
/// `base_channels`.
#[derive(Debug, Clone)]
pub struct Decoder<S: Scalar> {
    pub conv_in: Conv1d<S>,
    pub blocks: Vec<DecoderBlock<S>>,
    pub conv_out: Conv1d<S>,
}

impl<S: Scalar> Decoder<S> {
    pub fn new(rng: &mut impl Rng, cfg: &CodecConfig) -> Result<Self> {
        let mut ch = cfg.decoder_channels << cfg.strides.len();
        let conv_in = Conv1d::new(rng, cfg.latent_dim, ch, 3, 1, 1)?;
        let mut blocks = Vec::new();
        for &s in cfg.strides.iter().rev() {
            let (k, p) = resample_geometry(s);
            let up = ConvTranspose1d::new(rng, ch, ch / 2, k, s, p)?;
            ch /= 2;
            let residual = if cfg.residual_units { Some(ResidualUnit::new(rng, ch)?) } else { None };
            blocks.push(DecoderBlock { up, residual });
        }
        Ok(Self {
            conv_in,
            blocks,
            conv_out: Conv1d::new(rng, ch, 1, 7, 1, 3)?,
        })
    }

    /// `[B, latent, T'] -> [B, 1, T' * downsample]`, squashed by tanh.
    pub fn forward(&self, z: &Tensor<S>) -> Result<Tensor<S>> {
        let mut h = self.conv_in.forward(z)?;
        for b in &self.blocks {
            h = b.up.forward(&h.elu(1.0))?;
            if let Some(r) = &b.residual {
                h = r.forward(&h)?;
            }
        }
        Ok(self.conv_out.forward(&h.elu(1.0))?.tanh())
    }
}

impl<S: Scalar> Module<S> for Decoder<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.conv_in.visit(&join(p, "conv_in"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            let bp = join(p, &format!("blocks.{i}"));
            b.up.visit(&join(&bp, "up"), f);
            b.residual.visit(&join(&bp, "residual"), f);
        }
        self.conv_out.visit(&join(p, "conv_out"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.conv_in.visit_mut(&join(p, "conv_in"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let bp = join(p, &format!("blocks.{i}"));
            b.up.visit_mut(&join(&bp, "up"), f);
            b.residual.visit_mut(&join(&bp, "residual"), f);
        }
        self.conv_out.visit_mut(&join(p, "conv_out"), f);
    }
}

/// One RVQ stage: the residual entering it and the entry it selected.
#[derive(Debug, Clone)]
pub struct StageTrace<S: Scalar> {
    /// `[M, D]` residual vectors entering the stage.
    pub residual: Tensor<S>,
    /// `[M, D]` selected codebook entries.
    pub selected: Tensor<S>,
}

#[derive(Debug, Clone)]
pub struct Quantized<S: Scalar> {
    pub codes: TokenBatch,
    /// Sum of selected entries, `[B, D, T']`.
    pub latent: Tensor<S>,
    pub trace: Vec<StageTrace<S>>,
}

/// Residual vector quantizer. Entry 0 of every codebook is pinned to the zero
/// vector, so no stage can increase the residual norm.
#[derive(Debug, Clone)]
pub struct ResidualVq<S: Scalar> {
    /// Learned entries `1..size` of each stage, `[size - 1, D]`.
    pub codebooks: Vec<Tensor<S>>,
    pub size: usize,
    pub dim: usize,
}

impl<S: Scalar> ResidualVq<S> {
    pub fn new(rng: &mut impl Rng, stages: usize, size: usize, dim: usize) -> Result<Self> {
        let codebooks = (0..stages)
            .map(|s| crate::nn::normal(rng, &[size - 1, dim], 0.5 / (1 << s) as f64))
            .collect::<Result<_>>()?;
        Ok(Self { codebooks, size, dim })
    }

    pub fn stages(&self) -> usize {
        self.codebooks.len()
    }

    /// Data-dependent init: each stage's learned entries become residual
    /// vectors drawn from latents `z: [B, D, T']`. With the pinned zero entry,
    /// a random init far from the encoder outputs quantizes everything to
    /// zero and training never escapes.
    pub fn init_from_latents(&mut self, rng: &mut impl Rng, z: &Tensor<S>) -> Result<()> {
        if z.rank() != 3 || z.shape()[1] != self.dim {
            return Err(Error::ShapeMismatch {
                op: "rvq init",
                lhs: z.shape().to_vec(),
                rhs: vec![0, self.dim, 0],
            });
        }
        let d = self.dim;
        let flat = z.detach().permute(&[0, 2, 1])?;
        let mut residual: Vec<f64> = flat.data().iter().map(|v| v.wide()).collect();
        let rows = residual.len() / d;
        if rows == 0 {
            return invalid("rvq init needs at least one latent vector");
        }
        for s in 0..self.stages() {
            let mut entries = Vec::with_capacity((self.size - 1) * d);
            for _ in 1..self.size {
                let r = rng.random_range(0..rows);
                entries.extend_from_slice(&residual[r * d..(r + 1) * d]);
            }
            let trainable = self.codebooks[s].requires_grad();
            self.codebooks[s] = Tensor::from_f64(&entries, &[self.size - 1, d])?.requires_grad_(trainable);
            let cb = self.full_codebook(s)?;
            let as_s: Vec<S> = residual.iter().map(|&v| S::of(v)).collect();
            for (m, i) in Self::nearest(&as_s, cb.data(), d).into_iter().enumerate() {
                for (j, v) in residual[m * d..(m + 1) * d].iter_mut().enumerate() {
                    *v -= cb.data()[i * d + j].wide();
                }
            }
        }
        Ok(())
    }

    fn full_codebook(&self, stage: usize) -> Result<Tensor<S>> {
        Tensor::concat(&[Tensor::zeros(&[1, self.dim]), self.codebooks[stage].clone()], 0)
    }

    /// Nearest-entry index of every row of `r: [M, D]` in `cb: [size, D]`.
    fn nearest(r: &[S], cb: &[S], dim: usize) -> Vec<usize> {
        r.chunks(dim)
            .map(|v| {
                let mut best = (0, f64::INFINITY);
                for (i, e) in cb.chunks(dim).enumerate() {
                    let d: f64 = v.iter().zip(e).map(|(a, b)| (a.wide() - b.wide()).powi(2)).sum();
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                best.0
            })
            .collect()
    }

    /// Quantizes latents `[B, D, T']`.
    pub fn quantize(&self, z: &Tensor<S>) -> Result<Quantized<S>> {
        if z.rank() != 3 || z.shape()[1] != self.dim {
            return Err(Error::ShapeMismatch {
                op: "rvq",
                lhs: z.shape().to_vec(),
                rhs: vec![0, self.dim, 0],
            });
        }
        let (b, d, t) = (z.shape()[0], z.shape()[1], z.shape()[2]);
        let mut residual = z.permute(&[0, 2, 1])?.reshape(&[b * t, d])?;
        let mut codes = vec![0usize; b * self.stages() * t];
        let mut trace = Vec::with_capacity(self.stages());
        let mut sum: Option<Tensor<S>> = None;
        for s in 0..self.stages() {
            let cb = self.full_codebook(s)?;
            let idx = Self::nearest(residual.data(), cb.data(), d);
            for (m, &i) in idx.iter().enumerate() {
                let (bi, ti) = (m / t, m % t);
                codes[(bi * self.stages() + s) * t + ti] = i;
            }
            let selected = cb.embedding(&idx, &[b * t])?;
            trace.push(StageTrace {
                residual: residual.clone(),
                selected: selected.clone(),
            });
            residual = residual.sub(&selected)?;
            sum = Some(match sum {
                Some(acc) => acc.add(&selected)?,
                None => selected,
            });
        }
        let latent = sum
            .expect("at least one stage")
            .reshape(&[b, t, d])?
            .permute(&[0, 2, 1])?;
        Ok(Quantized {
            codes: TokenBatch::new(codes, b, self.stages(), t, self.size)?,
            latent,
            trace,
        })
    }

    /// Sum of the entries named by `codes: [B, stages, T']`, as `[B, D, T']`.
    pub fn lookup(&self, codes: &TokenBatch) -> Result<Tensor<S>> {
        if codes.codebooks != self.stages() {
            return Err(Error::ShapeMismatch {
                op: "rvq lookup",
                lhs: vec![self.stages()],
                rhs: vec![codes.codebooks],
            });
        }
        if let Some(&bad) = codes.codes.iter().find(|&&c| c >= self.size) {
            return Err(Error::OutOfRange {
                what: "rvq codebook",
                index: bad,
                size: self.size,
            });
        }
        let (b, t) = (codes.batch, codes.time);
        let mut sum: Option<Tensor<S>> = None;
        for s in 0..self.stages() {
            let ids: Vec<usize> = (0..b)
                .flat_map(|bi| (0..t).map(move |ti| (bi, ti)))
                .map(|(bi, ti)| codes.at(bi, s, ti))
                .collect();
            let e = self.full_codebook(s)?.embedding(&ids, &[b, t])?;
            sum = Some(match sum {
                Some(acc) => acc.add(&e)?,
                None => e,
            });
        }
        sum.expect("at least one stage").permute(&[0, 2, 1])
    }
}

impl<S: Scalar> Module<S> for ResidualVq<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        for (i, cb) in self.codebooks.iter().enumerate() {
            f(&join(p, &format!("codebooks.{i}")), cb);
        }
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        for (i, cb) in self.codebooks.iter_mut().enumerate() {
            f(&join(p, &format!("codebooks.{i}")), cb);
        }
    }
}

/// Encoder, quantizer and decoder.
#[derive(Debug, Clone)]
pub struct Codec<S: Scalar> {
    pub cfg: CodecConfig,
    pub encoder: Encoder<S>,
    pub quantizer: ResidualVq<S>,
    pub decoder: Decoder<S>,
}

impl<S: Scalar> Codec<S> {
    pub fn new(rng: &mut impl Rng, cfg: &CodecConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            encoder: Encoder::new(rng, cfg)?,
            quantizer: ResidualVq::new(rng, cfg.rvq_stages, cfg.rvq_codebook_size, cfg.latent_dim)?,
            decoder: Decoder::new(rng, cfg)?,
        })
    }

    /// Student sharing `teacher`'s encoder and quantizer with a fresh decoder
    /// of `decoder_channels`.
    pub fn student_of(teacher: &Codec<S>, rng: &mut impl Rng, decoder_channels: usize) -> Result<Self> {
        let cfg = teacher.cfg.student_of(decoder_channels);
        cfg.validate()?;
        Ok(Self {
            decoder: Decoder::new(rng, &cfg)?,
            cfg,
            encoder: teacher.encoder.clone(),
            quantizer: teacher.quantizer.clone(),
        })
    }

    /// Freezes (or unfreezes) encoder and quantizer.
    pub fn freeze_encoder_quantizer(&mut self, frozen: bool) {
        self.encoder.set_trainable(!frozen);
        self.quantizer.set_trainable(!frozen);
    }

    pub fn encode_quantize(&self, x: &Waveform<S>) -> Result<Quantized<S>> {
        let ds = self.cfg.downsample();
        if !x.len().is_multiple_of(ds) || x.is_empty() {
            return invalid(format!("waveform length {} not divisible by downsample {ds}", x.len()));
        }
        self.quantizer.quantize(&self.encoder.forward(&x.samples)?)
    }

    pub fn decode(&self, codes: &TokenBatch, sample_rate: u32) -> Result<Waveform<S>> {
        let z = self.quantizer.lookup(codes)?;
        Waveform::new(self.decoder.forward(&z)?, sample_rate)
    }

    /// Full pass with a straight-through estimator around the quantizer.
    pub fn reconstruct(&self, x: &Waveform<S>) -> Result<(Waveform<S>, Quantized<S>)> {
        let ds = self.cfg.downsample();
        if !x.len().is_multiple_of(ds) || x.is_empty() {
            return invalid(format!("waveform length {} not divisible by downsample {ds}", x.len()));
        }
        let z = self.encoder.forward(&x.samples)?;
        let q = self.quantizer.quantize(&z)?;
        let st = z.add(&q.latent.sub(&z)?.detach())?;
        let y = Waveform::new(self.decoder.forward(&st)?, x.sample_rate)?;
        Ok((y, q))
    }

    pub fn decoder_param_count(&self) -> usize {
        self.decoder.param_count()
    }
}

impl<S: Scalar> Module<S> for Codec<S> {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.encoder.visit(&join(p, "encoder"), f);
        self.quantizer.visit(&join(p, "quantizer"), f);
        self.decoder.visit(&join(p, "decoder"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.encoder.visit_mut(&join(p, "encoder"), f);
        self.quantizer.visit_mut(&join(p, "quantizer"), f);
        self.decoder.visit_mut(&join(p, "decoder"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> CodecConfig {
        CodecConfig {
            base_channels: 4,
            strides: vec![2, 4],
            latent_dim: 6,
            rvq_stages: 3,
            rvq_codebook_size: 8,
            decoder_channels: 4,
            residual_units: true,
        }
    }

    fn sine(n: usize, b: usize) -> Waveform<f32> {
        let clips: Vec<Vec<f32>> = (0..b)
            .map(|bi| (0..n).map(|i| (0.3 * i as f32 + bi as f32).sin() * 0.5).collect())
            .collect();
        Waveform::from_clips(&clips, 8000).unwrap()
    }

    #[test]
    fn shapes_through_the_codec() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let codec = Codec::<f32>::new(&mut rng, &tiny()).unwrap();
        let x = sine(64, 2);
        let q = codec.encode_quantize(&x).unwrap();
        assert_eq!((q.codes.batch, q.codes.codebooks, q.codes.time), (2, 3, 8));
        let y = codec.decode(&q.codes, 8000).unwrap();
        assert_eq!(y.samples.shape(), &[2, 1, 64]);
        assert!(y.samples.data().iter().all(|v| v.abs() <= 1.0));
        let y2 = codec.decode(&q.codes, 8000).unwrap();
        assert_eq!(y.samples.to_vec(), y2.samples.to_vec());
    }

    #[test]
    fn indivisible_length_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let codec = Codec::<f32>::new(&mut rng, &tiny()).unwrap();
        assert!(codec.encode_quantize(&sine(60, 1)).is_err());
    }

    #[test]
    fn zero_latent_has_zero_stage_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let vq = ResidualVq::<f64>::new(&mut rng, 2, 8, 4).unwrap();
        let q = vq.quantize(&Tensor::zeros(&[1, 4, 3])).unwrap();
        let r0 = q.trace[0].residual.sub(&q.trace[0].selected).unwrap();
        assert!(r0.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_energy_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vq = ResidualVq::<f64>::new(&mut rng, 4, 16, 5).unwrap();
        let z: Vec<f64> = (0..2 * 5 * 7).map(|_| rng.random_range(-2.0..2.0)).collect();
        let q = vq.quantize(&Tensor::from_f64(&z, &[2, 5, 7]).unwrap()).unwrap();
        let energy = |t: &Tensor<f64>| t.data().iter().map(|v| v * v).sum::<f64>();
        let mut prev = f64::INFINITY;
        for st in &q.trace {
            let e = energy(&st.residual);
            assert!(e <= prev + 1e-12);
            prev = e;
        }
        // brute force: every stage picked the nearest entry
        for (s, st) in q.trace.iter().enumerate() {
            let cb = vq.full_codebook(s).unwrap();
            for (r, sel) in st.residual.data().chunks(5).zip(st.selected.data().chunks(5)) {
                let d_sel: f64 = r.iter().zip(sel).map(|(a, b)| (a - b).powi(2)).sum();
                for e in cb.data().chunks(5) {
                    let d: f64 = r.iter().zip(e).map(|(a, b)| (a - b).powi(2)).sum();
                    assert!(d_sel <= d + 1e-12);
                }
            }
        }
    }

    #[test]
    fn lookup_rejects_out_of_range_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let codec = Codec::<f32>::new(&mut rng, &tiny()).unwrap();
        let codes = TokenBatch {
            codes: vec![8; 3],
            batch: 1,
            codebooks: 3,
            time: 1,
            cardinality: 9,
        };
        assert!(matches!(codec.decode(&codes, 8000), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn narrower_student_decoder_is_smaller() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let teacher = Codec::<f32>::new(&mut rng, &CodecConfig::desk_teacher()).unwrap();
        let student = Codec::student_of(&teacher, &mut rng, 4).unwrap();
        assert!(student.decoder_param_count() < teacher.decoder_param_count());
        assert!(student.param_count() < teacher.param_count());
    }

    #[test]
    fn teacher_geometry_echo() {
        let cfg = CodecConfig::encodec_teacher();
        assert_eq!(cfg.strides.len(), 4);
        assert_eq!(cfg.base_channels, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::<f32>::new(&mut rng, &cfg).unwrap();
        assert_eq!(enc.blocks.len(), 4);
        assert_eq!(enc.conv_in.weight.shape()[0], 64);
    }
}
