//! Codec-decoder distillation losses: time-domain L1, multi-scale mel
//! L1 + L2, hinge adversarial, normalized feature matching, RVQ commitment,
//! their λ-weighted total, and the teacher-aware discriminator loss.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{DiscriminatorOutput, MultiScaleDiscriminator, StageTrace};
use crate::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    /// Window exponents `i`: window `2^i`, hop `2^i / 4`.
    pub scales: Vec<u32>,
    pub mel_bins: usize,
    /// Per-scale weight of the L2 part.
    pub alpha: Vec<f64>,
    pub sample_rate: u32,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            scales: (5..=9).collect(),
            mel_bins: 32,
            alpha: vec![1.0; 5],
            sample_rate: 8000,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|&i| !(2..=16).contains(&i)) {
            return invalid("mel scales must be nonempty exponents in [2, 16]");
        }
        if self.alpha.len() != self.scales.len() || self.alpha.iter().any(|&a| !(a >= 0.0)) {
            return invalid("mel alpha needs one nonnegative weight per scale");
        }
        if self.mel_bins == 0 || self.sample_rate == 0 {
            return invalid("mel bins and sample rate must be positive");
        }
        Ok(())
    }

    pub fn max_window(&self) -> usize {
        1 << self.scales.iter().max().copied().unwrap_or(0)
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters `[n_freq, bins]` over `[0, sr/2]`, evaluated at the
/// DFT bin frequencies.
pub fn mel_filterbank(n_fft: usize, bins: usize, sample_rate: u32) -> Vec<f64> {
    let n_freq = n_fft / 2 + 1;
    let nyq = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyq);
    let edges: Vec<f64> = (0..bins + 2).map(|j| mel_to_hz(top * j as f64 / (bins + 1) as f64)).collect();
    let mut fb = vec![0.0; n_freq * bins];
    for k in 0..n_freq {
        let f = k as f64 * sample_rate as f64 / n_fft as f64;
        for m in 0..bins {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let w = ((f - lo) / (c - lo)).min((hi - f) / (hi - c));
            fb[k * bins + m] = w.max(0.0);
        }
    }
    fb
}

/// Precomputed windowed DFT and filterbank matrices for one scale.
#[derive(Debug, Clone)]
struct MelScale<S: Scalar> {
    win: usize,
    hop: usize,
    cos: Tensor<S>,
    sin: Tensor<S>,
    fb: Tensor<S>,
}

/// Multi-scale mel spectrogram operator.
#[derive(Debug, Clone)]
pub struct MelBank<S: Scalar> {
    pub cfg: MelConfig,
    scales: Vec<MelScale<S>>,
}

impl<S: Scalar> MelBank<S> {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let scales = cfg
            .scales
            .iter()
            .map(|&i| {
                let win = 1usize << i;
                let n_freq = win / 2 + 1;
                // periodic Hann, unit energy
                let w: Vec<f64> = (0..win)
                    .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())
                    .collect();
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut c = Vec::with_capacity(win * n_freq);
                let mut s = Vec::with_capacity(win * n_freq);
                for (n, wn) in w.iter().enumerate() {
                    for k in 0..n_freq {
                        let ph = 2.0 * std::f64::consts::PI * ((n * k) % win) as f64 / win as f64;
                        c.push(wn * ph.cos() / norm);
                        s.push(-wn * ph.sin() / norm);
                    }
                }
                Ok(MelScale {
                    win,
                    hop: (win / 4).max(1),
                    cos: Tensor::from_f64(&c, &[win, n_freq])?,
                    sin: Tensor::from_f64(&s, &[win, n_freq])?,
                    fb: Tensor::from_f64(&mel_filterbank(win, cfg.mel_bins, cfg.sample_rate), &[n_freq, cfg.mel_bins])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { cfg: cfg.clone(), scales })
    }

    /// Mel magnitudes `[B, frames, bins]` of `x: [B, 1, N]` at every scale.
    pub fn spectrograms(&self, x: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
        let (b, n) = wave_dims("mel", x)?;
        if n < self.cfg.max_window() {
            return invalid(format!("waveform of {n} samples shorter than largest mel window {}", self.cfg.max_window()));
        }
        let flat = x.reshape(&[b, n])?;
        self.scales
            .iter()
            .map(|sc| {
                let fr = flat.frames(sc.win, sc.hop)?;
                let re = fr.matmul(&sc.cos)?;
                let im = fr.matmul(&sc.sin)?;
                // magnitude floored at 1e-5
                let mag = re.square().add(&im.square())?.clamp_min(1e-10).sqrt();
                mag.matmul(&sc.fb)
            })
            .collect()
    }
}

fn wave_dims<S: Scalar>(op: &'static str, x: &Tensor<S>) -> Result<(usize, usize)> {
    if x.rank() != 3 || x.shape()[1] != 1 {
        return Err(Error::ShapeMismatch {
            op,
            lhs: x.shape().to_vec(),
            rhs: vec![0, 1, 0],
        });
    }
    Ok((x.shape()[0], x.shape()[2]))
}

fn same_wave_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    wave_dims(op, a)?;
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean absolute sample difference.
pub fn time_l1<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    same_wave_shape("time_l1", a, b)?;
    a.l1(b)
}

/// `1/(|α|·|scales|) Σ_i [mean|S_i(a) − S_i(b)| + α_i · mean(S_i(a) − S_i(b))²]`.
pub fn mel_multi_scale<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, mel: &MelBank<S>) -> Result<Tensor<S>> {
    same_wave_shape("mel_multi_scale", a, b)?;
    let sa = mel.spectrograms(a)?;
    let sb = mel.spectrograms(b)?;
    let mut total: Option<Tensor<S>> = None;
    for ((x, y), &alpha) in sa.iter().zip(&sb).zip(&mel.cfg.alpha) {
        let mut term = x.l1(y)?;
        if alpha != 0.0 {
            term = term.add(&x.mse(y)?.scale(alpha))?;
        }
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    let norm = (mel.cfg.alpha.len() * mel.cfg.scales.len()) as f64;
    Ok(total.expect("nonempty scales").scale(1.0 / norm))
}

fn mean_over<S: Scalar>(terms: Vec<Tensor<S>>) -> Result<Tensor<S>> {
    let n = terms.len();
    let mut it = terms.into_iter();
    let first = it.next().ok_or_else(|| Error::Invalid("empty discriminator output".into()))?;
    let sum = it.try_fold(first, |acc, t| acc.add(&t))?;
    Ok(sum.scale(1.0 / n as f64))
}

/// `(1/K_d) Σ_k mean(max(0, 1 − D_k))` over already-computed scores.
pub fn hinge_generator<S: Scalar>(scores: &DiscriminatorOutput<S>) -> Result<Tensor<S>> {
    mean_over(
        scores
            .scores
            .iter()
            .map(|s| s.neg().add_scalar(1.0).relu().mean_all())
            .collect(),
    )
}

/// Generator hinge on the second argument; the first only fixes the pairing.
pub fn gen_adv<S: Scalar>(disc: &MultiScaleDiscriminator<S>, first: &Tensor<S>, second: &Tensor<S>) -> Result<Tensor<S>> {
    same_wave_shape("gen_adv", first, second)?;
    hinge_generator(&disc.forward(second)?)
}

/// `(1/(K_d·L)) Σ_k Σ_l mean|F_kl(a) − F_kl(b)| / max(mean|F_kl(b)|, 1e-8)`,
/// the denominator held constant for the gradient.
pub fn feature_match_outputs<S: Scalar>(a: &DiscriminatorOutput<S>, b: &DiscriminatorOutput<S>) -> Result<Tensor<S>> {
    if a.features.len() != b.features.len() {
        return Err(Error::ShapeMismatch {
            op: "feat_match",
            lhs: vec![a.features.len()],
            rhs: vec![b.features.len()],
        });
    }
    let mut terms = Vec::new();
    for (fa, fb) in a.features.iter().zip(&b.features) {
        for (x, y) in fa.iter().zip(fb) {
            let denom = y.detach().abs().mean_all().item()?.max(1e-8);
            terms.push(x.l1(y)?.scale(1.0 / denom));
        }
    }
    mean_over(terms)
}

pub fn feat_match<S: Scalar>(disc: &MultiScaleDiscriminator<S>, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    same_wave_shape("feat_match", a, b)?;
    feature_match_outputs(&disc.forward(a)?, &disc.forward(b)?)
}

/// Σ over stages of the batch mean of `‖residual − selected‖²`.
pub fn commitment<S: Scalar>(trace: &[StageTrace<S>]) -> Result<Tensor<S>> {
    if trace.is_empty() {
        return invalid("commitment loss needs a nonempty quantizer trace");
    }
    let mut total: Option<Tensor<S>> = None;
    for st in trace {
        let rows = st.residual.shape()[0].max(1);
        let term = st.residual.sub(&st.selected)?.square().sum_all().scale(1.0 / rows as f64);
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    Ok(total.expect("nonempty trace"))
}

/// Which terms the weight factor multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorScope {
    /// All five λ's.
    #[default]
    All,
    /// Only the terms pairing the student with the teacher output.
    TeacherPaired,
}

/// Which output the second adversarial term scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvTarget {
    /// `max(0, 1 − D(x̂_T))`: carries no student gradient.
    #[default]
    Teacher,
    /// `max(0, 1 − D(x̂_S))`.
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambdas {
    pub time: f64,
    pub freq: f64,
    pub adv: f64,
    pub feat: f64,
    pub commit: f64,
    pub weight_factor: f64,
    #[serde(default)]
    pub factor_scope: FactorScope,
    #[serde(default)]
    pub adv_target: AdvTarget,
}

impl Default for Lambdas {
    fn default() -> Self {
        Self {
            time: 0.1,
            freq: 2.0,
            adv: 4.0,
            feat: 4.0,
            commit: 0.1,
            weight_factor: 1.0,
            factor_scope: FactorScope::All,
            adv_target: AdvTarget::Teacher,
        }
    }
}

impl Lambdas {
    pub fn validate(&self) -> Result<()> {
        let all = [self.time, self.freq, self.adv, self.feat, self.commit, self.weight_factor];
        if all.iter().any(|&v| !(v >= 0.0)) {
            return invalid(format!("codec loss weights must be nonnegative, got {all:?}"));
        }
        Ok(())
    }

    /// `(λ_t, λ_f, λ_g, λ_feat, λ_w)` after the weight factor, for the
    /// ground-truth-paired and the teacher-paired terms respectively.
    pub fn effective(&self) -> ([f64; 5], [f64; 5]) {
        let base = [self.time, self.freq, self.adv, self.feat, self.commit];
        let scaled = base.map(|l| l * self.weight_factor);
        match self.factor_scope {
            FactorScope::All => (scaled, scaled),
            FactorScope::TeacherPaired => (base, scaled),
        }
    }
}

/// The nine terms of the generator objective and their weighted total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecBreakdown {
    pub time_gt: f64,
    pub time_kd: f64,
    pub mel_gt: f64,
    pub mel_kd: f64,
    pub adv_gt: f64,
    pub adv_kd: f64,
    pub feat_gt: f64,
    pub feat_kd: f64,
    pub commit: f64,
    pub total: f64,
}

impl CodecBreakdown {
    pub fn terms(&self) -> [f64; 9] {
        [
            self.time_gt,
            self.time_kd,
            self.mel_gt,
            self.mel_kd,
            self.adv_gt,
            self.adv_kd,
            self.feat_gt,
            self.feat_kd,
            self.commit,
        ]
    }

    /// Recomputes the total from the terms.
    pub fn compose(&self, lambdas: &Lambdas) -> f64 {
        let (g, k) = lambdas.effective();
        let t = self.terms();
        g[0] * t[0] + k[0] * t[1] + g[1] * t[2] + k[1] * t[3] + g[2] * t[4] + k[2] * t[5] + g[3] * t[6] + k[3] * t[7]
            + k[4] * t[8]
    }
}

/// Generator objective for student output `xs` given ground truth `x` and
/// teacher output `xt` (detached here).
///
/// Pairs: time/mel/feature terms on `(x, xs)` and `(xs, xt)`; adversarial on
/// `D(xs)` and `D(xt)` (or `D(xs)` twice, see [`AdvTarget`]); commitment on
/// the quantizer trace. Feature matching is always normalized by the
/// student's features.
pub fn codec_total<S: Scalar>(
    disc: &MultiScaleDiscriminator<S>,
    mel: &MelBank<S>,
    x: &Tensor<S>,
    xs: &Tensor<S>,
    xt: &Tensor<S>,
    trace: &[StageTrace<S>],
    lambdas: &Lambdas,
) -> Result<(Tensor<S>, CodecBreakdown)> {
    lambdas.validate()?;
    same_wave_shape("codec_total", x, xs)?;
    same_wave_shape("codec_total", xs, xt)?;
    let x = x.detach();
    let xt = xt.detach();
    let dx = disc.forward(&x)?;
    let ds = disc.forward(xs)?;
    let dt = disc.forward(&xt)?;
    let adv_kd = match lambdas.adv_target {
        AdvTarget::Teacher => hinge_generator(&dt)?,
        AdvTarget::Student => hinge_generator(&ds)?,
    };
    let terms = [
        time_l1(&x, xs)?,
        time_l1(xs, &xt)?,
        mel_multi_scale(&x, xs, mel)?,
        mel_multi_scale(xs, &xt, mel)?,
        hinge_generator(&ds)?,
        adv_kd,
        feature_match_outputs(&dx, &ds)?,
        feature_match_outputs(&dt, &ds)?,
        commitment(trace)?,
    ];
    let (g, k) = lambdas.effective();
    let weights = [g[0], k[0], g[1], k[1], g[2], k[2], g[3], k[3], k[4]];
    let mut total: Option<Tensor<S>> = None;
    for (t, &w) in terms.iter().zip(&weights) {
        let term = t.scale(w);
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    let total = total.expect("nine terms");
    let v: Vec<f64> = terms.iter().map(|t| t.item()).collect::<Result<_>>()?;
    let breakdown = CodecBreakdown {
        time_gt: v[0],
        time_kd: v[1],
        mel_gt: v[2],
        mel_kd: v[3],
        adv_gt: v[4],
        adv_kd: v[5],
        feat_gt: v[6],
        feat_kd: v[7],
        commit: v[8],
        total: total.item()?,
    };
    Ok((total, breakdown))
}

/// `(1/K_d) Σ_k [2·(max(0, 1 − D_k(x)) + max(0, 1 + D_k(xs))) + max(0, 1 + D_k(xt))]`
/// with every waveform detached, so only discriminator parameters get gradient.
pub fn disc_loss<S: Scalar>(
    disc: &MultiScaleDiscriminator<S>,
    x: &Tensor<S>,
    xs: &Tensor<S>,
    xt: &Tensor<S>,
) -> Result<Tensor<S>> {
    same_wave_shape("disc_loss", x, xs)?;
    same_wave_shape("disc_loss", xs, xt)?;
    disc_loss_outputs(&disc.forward(&x.detach())?, &disc.forward(&xs.detach())?, &disc.forward(&xt.detach())?)
}

pub fn disc_loss_outputs<S: Scalar>(
    real: &DiscriminatorOutput<S>,
    student: &DiscriminatorOutput<S>,
    teacher: &DiscriminatorOutput<S>,
) -> Result<Tensor<S>> {
    let mut terms = Vec::with_capacity(real.scores.len());
    for ((r, s), t) in real.scores.iter().zip(&student.scores).zip(&teacher.scores) {
        let real_term = r.neg().add_scalar(1.0).relu().mean_all();
        let fake_s = s.add_scalar(1.0).relu().mean_all();
        let fake_t = t.add_scalar(1.0).relu().mean_all();
        terms.push(real_term.add(&fake_s)?.scale(2.0).add(&fake_t)?);
    }
    mean_over(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::DiscriminatorConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tone(freq: f64, n: usize) -> Tensor<f64> {
        let v: Vec<f64> = (0..n).map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 8000.0).sin()).collect();
        Tensor::from_f64(&v, &[1, 1, n]).unwrap()
    }

    fn scores(vals: &[f64]) -> DiscriminatorOutput<f64> {
        DiscriminatorOutput {
            scores: vals.iter().map(|&v| Tensor::full(&[1, 1, 3], v)).collect(),
            features: vec![],
        }
    }

    #[test]
    fn time_l1_cases() {
        let x = tone(440.0, 64);
        assert_eq!(time_l1(&x, &x).unwrap().item().unwrap(), 0.0);
        let y = x.add_scalar(0.5);
        assert!((time_l1(&x, &y).unwrap().item().unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(time_l1(&x, &y).unwrap().item().unwrap(), time_l1(&y, &x).unwrap().item().unwrap());
        assert!(time_l1(&x, &tone(440.0, 32)).is_err());
    }

    #[test]
    fn mel_distance_tracks_frequency_gap() {
        let mel = MelBank::<f64>::new(&MelConfig::default()).unwrap();
        let a = tone(440.0, 2048);
        assert_eq!(mel_multi_scale(&a, &a, &mel).unwrap().item().unwrap(), 0.0);
        let far = mel_multi_scale(&a, &tone(880.0, 2048), &mel).unwrap().item().unwrap();
        let near = mel_multi_scale(&a, &tone(450.0, 2048), &mel).unwrap().item().unwrap();
        assert!(far > near && near > 0.0, "{far} {near}");
        assert!(mel_multi_scale(&tone(1.0, 256), &tone(2.0, 256), &mel).is_err());
    }

    #[test]
    fn zero_alpha_is_pure_l1() {
        let cfg = MelConfig {
            alpha: vec![0.0; 5],
            ..Default::default()
        };
        let mel = MelBank::<f64>::new(&cfg).unwrap();
        let (a, b) = (tone(300.0, 1024), tone(900.0, 1024));
        let got = mel_multi_scale(&a, &b, &mel).unwrap().item().unwrap();
        let sa = mel.spectrograms(&a).unwrap();
        let sb = mel.spectrograms(&b).unwrap();
        let l1: f64 = sa.iter().zip(&sb).map(|(x, y)| x.l1(y).unwrap().item().unwrap()).sum();
        assert!((got - l1 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn hinge_arithmetic() {
        assert_eq!(hinge_generator(&scores(&[0.0])).unwrap().item().unwrap(), 1.0);
        assert_eq!(hinge_generator(&scores(&[1.0, 2.5])).unwrap().item().unwrap(), 0.0);
        assert_eq!(hinge_generator(&scores(&[0.5, -0.5])).unwrap().item().unwrap(), 1.0);
        let z = scores(&[0.0, 0.0, 0.0]);
        assert_eq!(disc_loss_outputs(&z, &z, &z).unwrap().item().unwrap(), 5.0);
        let perfect = disc_loss_outputs(&scores(&[1.0]), &scores(&[-1.0]), &scores(&[-2.0])).unwrap();
        assert_eq!(perfect.item().unwrap(), 0.0);
    }

    #[test]
    fn feature_matching_arithmetic() {
        let out = |v: f64| DiscriminatorOutput {
            scores: vec![Tensor::<f64>::zeros(&[1, 1, 1])],
            features: vec![vec![Tensor::full(&[1, 1, 1], v)]],
        };
        assert_eq!(feature_match_outputs(&out(2.0), &out(1.0)).unwrap().item().unwrap(), 1.0);
        assert_eq!(feature_match_outputs(&out(2.0), &out(2.0)).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn commitment_cases() {
        let st = StageTrace {
            residual: Tensor::<f64>::from_f64(&[1.0, 0.0], &[1, 2]).unwrap(),
            selected: Tensor::zeros(&[1, 2]),
        };
        assert_eq!(commitment(std::slice::from_ref(&st)).unwrap().item().unwrap(), 1.0);
        let exact = StageTrace {
            residual: st.residual.clone(),
            selected: st.residual.clone(),
        };
        assert_eq!(commitment(&[exact]).unwrap().item().unwrap(), 0.0);
        assert!(commitment::<f64>(&[]).is_err());
    }

    #[test]
    fn weight_factor_scales_lambdas() {
        let l = Lambdas {
            weight_factor: 0.75,
            ..Default::default()
        };
        let (g, k) = l.effective();
        for (got, want) in g.iter().zip([0.075, 1.5, 3.0, 3.0, 0.075]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(g, k);
        let scoped = Lambdas {
            factor_scope: FactorScope::TeacherPaired,
            ..l
        };
        let (g, k) = scoped.effective();
        assert_eq!(g, [0.1, 2.0, 4.0, 4.0, 0.1]);
        assert_eq!(k[1], 1.5);
    }

    #[test]
    fn identical_inputs_leave_only_hinge_residue() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DiscriminatorConfig {
            zero_init_output: true,
            ..Default::default()
        };
        let disc = MultiScaleDiscriminator::<f64>::new(&mut rng, &cfg).unwrap();
        let mel = MelBank::new(&MelConfig::default()).unwrap();
        let x = tone(500.0, 1024);
        let trace = [StageTrace {
            residual: Tensor::zeros(&[2, 2]),
            selected: Tensor::zeros(&[2, 2]),
        }];
        for wf in [0.75, 1.0, 1.25] {
            let l = Lambdas {
                weight_factor: wf,
                ..Default::default()
            };
            let (_, b) = codec_total(&disc, &mel, &x, &x, &x, &trace, &l).unwrap();
            assert!((b.total - 4.0 * 2.0 * wf).abs() < 1e-12, "{b:?}");
            assert!((b.compose(&l) - b.total).abs() < 1e-10);
        }
    }

    #[test]
    fn generator_loss_leaves_teacher_output_without_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let disc = MultiScaleDiscriminator::<f64>::new(&mut rng, &DiscriminatorConfig::default()).unwrap();
        let mel = MelBank::new(&MelConfig::default()).unwrap();
        let xs = tone(500.0, 512).requires_grad_(true);
        let xt = tone(520.0, 512).requires_grad_(true);
        let trace = [StageTrace {
            residual: Tensor::<f64>::ones(&[1, 2]),
            selected: Tensor::zeros(&[1, 2]),
        }];
        let (total, _) = codec_total(&disc, &mel, &tone(480.0, 512), &xs, &xt, &trace, &Lambdas::default()).unwrap();
        let g = total.backward().unwrap();
        assert!(g.get(&xt).is_none());
        assert!(g.get(&xs).unwrap().iter().any(|&v| v != 0.0));
        let d = disc_loss(&disc, &tone(480.0, 512), &xs, &xt).unwrap();
        let g = d.backward().unwrap();
        assert!(g.get(&xs).is_none());
        assert!(g.get(&disc.discs[0].output.weight).is_some());
    }
}
