//! Finite-difference check of every differentiable kernel and loss, run as
//! one seeded suite in f64. Inputs are kept away from the kinks of relu, abs,
//! l1 and clamp so central differences are meaningful.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec_loss::{codec_total, commitment, disc_loss, feat_match, gen_adv, mel_multi_scale, time_l1, Lambdas, MelBank, MelConfig};
use crate::error::Result;
use crate::kd_loss::{combined_lm_loss, intermediate_mse, student_loss, teacher_loss, KdOptions, LossParts, LossScales};
use crate::models::discriminator::avg_pool;
use crate::models::{DiscriminatorConfig, HiddenTrace, LogitsBatch, MultiScaleDiscriminator, StageTrace, TokenBatch};
use crate::nn::{Linear, Module, MultiHeadAttention};
use crate::sampling::SimplexWeights;
use crate::{grad_check, Tensor};

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-3;

type T = Tensor<f64>;

const MAX_REDRAWS: usize = 3;

/// Whether the forward and backward one-sided slopes of `f` along component
/// `i` disagree by more than a smooth function's O(eps) curvature allows.
fn kink_at(f: &impl Fn(&T) -> Result<T>, x: &T, i: usize) -> Result<bool> {
    let base = x.to_f64_vec();
    let at = |delta: f64| -> Result<f64> {
        let mut v = base.clone();
        v[i] += delta;
        f(&Tensor::from_f64(&v, x.shape())?)?.item()
    };
    let (lo, mid, hi) = (at(-EPS)?, at(0.0)?, at(EPS)?);
    let (fwd, bwd) = ((hi - mid) / EPS, (mid - lo) / EPS);
    Ok((fwd - bwd).abs() > 1e-2 * fwd.abs().max(bwd.abs()).max(1e-6))
}

struct Suite {
    rng: ChaCha8Rng,
    worst: BTreeMap<String, f64>,
}

impl Suite {
    /// Uniform magnitudes in `[lo, hi]` with random signs.
    fn away(&mut self, shape: &[usize], lo: f64, hi: f64) -> T {
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let m = self.rng.random_range(lo..hi);
                if self.rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        Tensor::from_f64(&v, shape).expect("shape matches data")
    }

    fn pos(&mut self, shape: &[usize], lo: f64, hi: f64) -> T {
        self.away(shape, lo, hi).abs().detach()
    }

    fn check(&mut self, name: &str, x: &T, f: impl Fn(&T) -> Result<T>) -> Result<()> {
        let mut x = x.detach();
        let mut r = grad_check(&f, &x, EPS)?;
        // A failure where the one-sided slopes disagree is a kink (relu,
        // hinge) within eps of the base point, not a gradient error: re-draw
        // the point with a small jitter.
        for _ in 0..MAX_REDRAWS {
            if r.max_rel_error < TOLERANCE || !kink_at(&f, &x, r.worst_index)? {
                break;
            }
            x = x.add(&self.away(x.shape(), 0.0, 1e-3))?.detach();
            r = grad_check(&f, &x, EPS)?;
        }
        let e = self.worst.entry(name.to_string()).or_insert(0.0);
        *e = e.max(r.max_rel_error);
        Ok(())
    }

    /// Analytic gradient of `f` against central differences of
    /// `reference(base, ·)`: the same loss with the detached parts frozen at
    /// `base`.
    fn check_against(
        &mut self,
        name: &str,
        x: &T,
        f: impl Fn(&T) -> Result<T>,
        reference: impl Fn(&T, &T) -> Result<T>,
    ) -> Result<()> {
        let mut x = x.detach();
        let mut redraws = 0;
        loop {
            let analytic = grad_check(&f, &x, EPS)?.analytic;
            let frozen = |y: &T| reference(&x, y);
            let numeric = grad_check(frozen, &x, EPS)?.numeric;
            let (worst, r) = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
                .enumerate()
                .fold((0, 0.0), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
            if r < TOLERANCE || redraws == MAX_REDRAWS || !kink_at(&frozen, &x, worst)? {
                let e = self.worst.entry(name.to_string()).or_insert(0.0);
                *e = e.max(r);
                return Ok(());
            }
            x = x.add(&self.away(x.shape(), 0.0, 1e-3))?.detach();
            redraws += 1;
        }
    }

    /// Checks a tensor-valued map through a fixed random projection to a scalar.
    fn check_map(&mut self, name: &str, x: &T, g: impl Fn(&T) -> Result<T>) -> Result<()> {
        let y0 = g(x)?;
        let r = self.away(y0.shape(), 0.5, 1.5);
        self.check(name, x, |x| Ok(g(x)?.mul(&r)?.sum_all()))
    }
}

fn with_param(disc: &MultiScaleDiscriminator<f64>, name: &str, value: &T) -> MultiScaleDiscriminator<f64> {
    let mut d = disc.clone();
    d.visit_mut("", &mut |n, t| {
        if n == name {
            *t = value.clone();
        }
    });
    d
}

fn kernels(s: &mut Suite) -> Result<()> {
    let a = s.away(&[3, 4], 0.2, 1.0);
    let b = s.away(&[4], 0.2, 1.0);
    let bp = s.pos(&[4], 0.5, 1.5);
    s.check_map("add", &a, |x| x.add(&b))?;
    s.check_map("add", &b, |x| a.add(x))?;
    s.check_map("sub", &a, |x| x.sub(&b))?;
    s.check_map("sub", &b, |x| a.sub(x))?;
    s.check_map("mul", &a, |x| x.mul(&b))?;
    s.check_map("mul", &b, |x| a.mul(x))?;
    s.check_map("div", &a, |x| x.div(&bp))?;
    s.check_map("div", &bp, |x| a.div(x))?;

    let u = s.away(&[2, 5], 0.1, 1.0);
    let p = s.pos(&[2, 5], 0.2, 2.0);
    s.check_map("scale", &u, |x| Ok(x.scale(1.7)))?;
    s.check_map("add_scalar", &u, |x| Ok(x.add_scalar(0.3)))?;
    s.check_map("neg", &u, |x| Ok(x.neg()))?;
    s.check_map("square", &u, |x| Ok(x.square()))?;
    s.check_map("abs", &u, |x| Ok(x.abs()))?;
    s.check_map("exp", &u, |x| Ok(x.exp()))?;
    s.check_map("ln", &p, |x| Ok(x.ln()))?;
    s.check_map("sqrt", &p, |x| Ok(x.sqrt()))?;
    s.check_map("clamp_min", &u, |x| Ok(x.clamp_min(0.0)))?;
    s.check_map("relu", &u, |x| Ok(x.relu()))?;
    s.check_map("leaky_relu", &u, |x| Ok(x.leaky_relu(0.2)))?;
    s.check_map("elu", &u, |x| Ok(x.elu(1.0)))?;
    s.check_map("tanh", &u, |x| Ok(x.tanh()))?;
    s.check_map("sigmoid", &u, |x| Ok(x.sigmoid()))?;
    s.check_map("gelu", &u, |x| Ok(x.gelu()))?;

    let v = s.away(&[2, 3, 4], 0.1, 1.0);
    let w = s.away(&[2, 2, 4], 0.1, 1.0);
    s.check_map("reshape", &v, |x| x.reshape(&[4, 6]))?;
    s.check_map("permute", &v, |x| x.permute(&[2, 0, 1]))?;
    s.check_map("transpose", &v, |x| x.transpose(0, 2))?;
    s.check_map("narrow", &v, |x| x.narrow(1, 1, 2))?;
    s.check_map("concat", &v, |x| Tensor::concat(&[x.clone(), w.clone()], 1))?;
    s.check_map("concat", &w, |x| Tensor::concat(&[v.clone(), x.clone()], 1))?;
    let table = s.away(&[5, 3], 0.1, 1.0);
    s.check_map("embedding", &table, |x| x.embedding(&[0, 2, 2, 4, 1, 2], &[2, 3]))?;
    let wave = s.away(&[2, 20], 0.1, 1.0);
    s.check_map("frames", &wave, |x| x.frames(8, 4))?;

    s.check("sum_all", &v, |x| Ok(x.sum_all()))?;
    s.check("mean_all", &v, |x| Ok(x.mean_all()))?;
    s.check_map("sum", &v, |x| x.sum(1, false))?;
    s.check_map("mean", &v, |x| x.mean(2, true))?;
    let v2 = v.add(&s.away(&[2, 3, 4], 0.1, 1.0))?.detach();
    s.check("mse", &v, |x| x.mse(&v2))?;
    s.check("mse", &v2, |x| v.mse(x))?;
    s.check("l1", &v, |x| x.l1(&v2))?;
    s.check("l1", &v2, |x| v.l1(x))?;

    let m1 = s.away(&[3, 4], 0.1, 1.0);
    let m2 = s.away(&[4, 5], 0.1, 1.0);
    s.check_map("matmul", &m1, |x| x.matmul(&m2))?;
    s.check_map("matmul", &m2, |x| m1.matmul(x))?;
    let q = s.away(&[2, 2, 3, 4], 0.1, 1.0);
    let k = s.away(&[2, 2, 4, 3], 0.1, 1.0);
    s.check_map("matmul", &q, |x| x.matmul(&k))?;
    s.check_map("matmul", &k, |x| q.matmul(x))?;

    let logits = s.away(&[3, 5], 0.1, 2.0);
    s.check_map("softmax", &logits, |x| x.softmax(1))?;
    s.check_map("log_softmax", &logits, |x| x.log_softmax(1))?;

    let h = s.away(&[2, 3, 6], 0.1, 1.5);
    let gamma = s.away(&[6], 0.5, 1.5);
    let beta = s.away(&[6], 0.1, 1.0);
    s.check_map("layer_norm", &h, |x| x.layer_norm(&gamma, &beta, 1e-5))?;
    s.check_map("layer_norm", &gamma, |x| h.layer_norm(x, &beta, 1e-5))?;
    s.check_map("layer_norm", &beta, |x| h.layer_norm(&gamma, x, 1e-5))?;

    let cx = s.away(&[2, 3, 11], 0.1, 1.0);
    let cw = s.away(&[4, 3, 3], 0.1, 1.0);
    let cb = s.away(&[4], 0.1, 1.0);
    for (stride, pad) in [(1, 2), (2, 1), (3, 0)] {
        s.check_map("conv1d", &cx, |x| x.conv1d(&cw, Some(&cb), stride, pad))?;
        s.check_map("conv1d", &cw, |x| cx.conv1d(x, Some(&cb), stride, pad))?;
        s.check_map("conv1d", &cb, |x| cx.conv1d(&cw, Some(x), stride, pad))?;
    }
    let tx = s.away(&[2, 3, 5], 0.1, 1.0);
    let tw = s.away(&[3, 2, 4], 0.1, 1.0);
    let tb = s.away(&[2], 0.1, 1.0);
    for (stride, pad) in [(1, 0), (2, 1), (3, 2)] {
        s.check_map("conv_transpose1d", &tx, |x| x.conv_transpose1d(&tw, Some(&tb), stride, pad))?;
        s.check_map("conv_transpose1d", &tw, |x| tx.conv_transpose1d(x, Some(&tb), stride, pad))?;
        s.check_map("conv_transpose1d", &tb, |x| tx.conv_transpose1d(&tw, Some(x), stride, pad))?;
    }

    let pooled = s.away(&[2, 1, 8], 0.1, 1.0);
    s.check_map("avg_pool", &pooled, |x| avg_pool(x, 2))?;

    let attn = MultiHeadAttention::<f64>::new(&mut s.rng, 8, 6, 2)?;
    let ax = s.away(&[2, 3, 8], 0.1, 1.0);
    let ctx = s.away(&[2, 4, 6], 0.1, 1.0);
    s.check_map("attention", &ax, |x| attn.forward(x, &ctx, None))?;
    s.check_map("attention", &ctx, |x| attn.forward(&ax, x, None))?;
    Ok(())
}

fn lm_losses(s: &mut Suite) -> Result<()> {
    let (b, k, t, c) = (2, 2, 3, 5);
    let codes: Vec<usize> = (0..b * k * t).map(|_| s.rng.random_range(0..c)).collect();
    let targets = TokenBatch::new(codes, b, k, t, c)?;
    let student = s.away(&[b, k, t, c], 0.1, 2.0);
    let teacher = s.away(&[b, k, t, c], 0.1, 2.0);
    let warm = KdOptions {
        sum_over_time: true,
        temperature: 2.0,
    };
    for opts in [KdOptions::default(), warm] {
        s.check("student_loss", &student, |x| student_loss(&LogitsBatch(x.clone()), &targets, &opts))?;
        s.check("teacher_loss", &student, |x| {
            teacher_loss(&LogitsBatch(x.clone()), &LogitsBatch(teacher.clone()), &opts)
        })?;
    }

    let teacher_trace = HiddenTrace {
        layers: (0..3).map(|_| s.away(&[2, 3, 6], 0.1, 1.0)).collect(),
    };
    let other = s.away(&[2, 3, 4], 0.1, 1.0);
    let proj = Linear::<f64>::new(&mut s.rng, 4, 6, false)?;
    let hidden = s.away(&[2, 3, 4], 0.1, 1.0);
    let trace_of = |x: &T| HiddenTrace {
        layers: vec![x.clone(), other.clone()],
    };
    s.check("intermediate_mse", &hidden, |x| {
        intermediate_mse(&trace_of(x), &teacher_trace, &[1, 2], Some(&proj))
    })?;

    let same_dim = HiddenTrace {
        layers: vec![s.away(&[2, 3, 6], 0.1, 1.0)],
    };
    let weights = SimplexWeights::new(vec![0.2, 0.3, 0.5])?;
    let scales = LossScales {
        l_s: 1.0,
        l_t: 0.7,
        l_m: 1.3,
    };
    let parts_of = |x: &T| -> Result<LossParts<f64>> {
        let logits = LogitsBatch(x.clone());
        let flat = x.reshape(&[2, 3, 10])?.narrow(2, 0, 6)?;
        Ok(LossParts {
            student: Some(student_loss(&logits, &targets, &KdOptions::default())?),
            teacher: Some(teacher_loss(&logits, &LogitsBatch(teacher.clone()), &KdOptions::default())?),
            mse: Some(intermediate_mse(&HiddenTrace { layers: vec![flat] }, &same_dim, &[0], None)?),
        })
    };
    for w in [None, Some(&weights)] {
        s.check("combined_lm_loss", &student, |x| Ok(combined_lm_loss(&parts_of(x)?, &scales, w)?.0))?;
    }
    Ok(())
}

fn codec_losses(s: &mut Suite) -> Result<()> {
    let n = 32;
    let x = s.away(&[2, 1, n], 0.05, 0.9);
    let xs = x.add(&s.away(&[2, 1, n], 0.05, 0.3))?.detach();
    let xt = xs.add(&s.away(&[2, 1, n], 0.05, 0.3))?.detach();
    s.check("time_l1", &xs, |y| time_l1(&x, y))?;

    let mel = MelBank::<f64>::new(&MelConfig {
        scales: vec![3, 4],
        mel_bins: 6,
        alpha: vec![1.0, 0.5],
        sample_rate: 8000,
    })?;
    s.check("mel_multi_scale", &xs, |y| mel_multi_scale(&x, y, &mel))?;

    let dcfg = DiscriminatorConfig {
        count: 2,
        layers: 2,
        channels: 2,
        max_channels: 4,
        kernel: 3,
        zero_init_output: false,
    };
    let disc = MultiScaleDiscriminator::<f64>::new(&mut s.rng, &dcfg)?;
    s.check("gen_adv", &xs, |y| gen_adv(&disc, &x, y))?;
    // The normalizer (second argument's features) is detached by design, so
    // along that argument the analytic gradient is compared with central
    // differences of the loss with the normalizer frozen at the base point.
    s.check("feat_match", &xs, |y| feat_match(&disc, y, &xt))?;
    let denoms = |base: &T| -> Result<Vec<f64>> {
        disc.forward(base)?
            .features
            .iter()
            .flatten()
            .map(|f| Ok(f.abs().mean_all().item()?.max(1e-8)))
            .collect()
    };
    let frozen = |base: &T, y: &T| -> Result<T> {
        let denoms = denoms(base)?;
        let (fa, fb) = (disc.forward(&x)?, disc.forward(y)?);
        let mut acc = Tensor::scalar(0.0);
        for ((a, b), d) in fa.features.iter().flatten().zip(fb.features.iter().flatten()).zip(&denoms) {
            acc = acc.add(&a.l1(b)?.scale(1.0 / d))?;
        }
        Ok(acc.scale(1.0 / denoms.len() as f64))
    };
    s.check_against("feat_match", &xs, |y| feat_match(&disc, &x, y), frozen)?;

    let residual = s.away(&[6, 4], 0.1, 1.0);
    let selected = s.away(&[6, 4], 0.1, 1.0);
    s.check("commitment", &residual, |r| {
        commitment(&[StageTrace {
            residual: r.clone(),
            selected: selected.clone(),
        }])
    })?;

    let trace = vec![StageTrace {
        residual: residual.clone(),
        selected: selected.clone(),
    }];
    let lambdas = Lambdas {
        weight_factor: 1.25,
        ..Lambdas::default()
    };
    let no_feat = Lambdas { feat: 0.0, ..lambdas };
    s.check("codec_total", &xs, |y| Ok(codec_total(&disc, &mel, &x, y, &xt, &trace, &no_feat)?.0))?;
    s.check_against(
        "codec_total",
        &xs,
        |y| Ok(codec_total(&disc, &mel, &x, y, &xt, &trace, &lambdas)?.0),
        |base, y| {
            let denoms = denoms(base)?;
            let rest = codec_total(&disc, &mel, &x, y, &xt, &trace, &no_feat)?.0;
            let dx = disc.forward(&x)?;
            let dt = disc.forward(&xt)?;
            let dy = disc.forward(y)?;
            let mut fm = Tensor::scalar(0.0);
            let pairs = dx.features.iter().flatten().zip(dt.features.iter().flatten());
            for (((fx, ft), fy), d) in pairs.zip(dy.features.iter().flatten()).zip(&denoms) {
                fm = fm.add(&fx.l1(fy)?.add(&ft.l1(fy)?)?.scale(1.0 / d))?;
            }
            let w = lambdas.effective().0[3];
            rest.add(&fm.scale(w / denoms.len() as f64))
        },
    )?;

    let mut names = Vec::new();
    disc.visit("", &mut |name, _| names.push(name.to_string()));
    for name in names.iter().filter(|n| n.ends_with("weight")).take(2) {
        let mut p = None;
        disc.visit("", &mut |n, t| {
            if n == name {
                p = Some(t.detach());
            }
        });
        let p = p.expect("visited parameter");
        s.check("disc_loss", &p, |w| disc_loss(&with_param(&disc, name, w), &x, &xs, &xt))?;
    }
    Ok(())
}

/// Worst relative error per kernel/loss over one seeded draw of inputs.
pub fn run(seed: u64) -> Result<BTreeMap<String, f64>> {
    let mut s = Suite {
        rng: ChaCha8Rng::seed_from_u64(seed),
        worst: BTreeMap::new(),
    };
    kernels(&mut s)?;
    lm_losses(&mut s)?;
    codec_losses(&mut s)?;
    Ok(s.worst)
}

/// Per-name maximum over seeds `0..seeds`.
pub fn run_seeds(seeds: u64) -> Result<BTreeMap<String, f64>> {
    let mut all = BTreeMap::new();
    for seed in 0..seeds {
        for (k, v) in run(seed)? {
            let e: &mut f64 = all.entry(k).or_insert(0.0);
            *e = e.max(v);
        }
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    #[test]
    fn one_seed_passes() {
        let r = super::run(0).unwrap();
        let bad: Vec<_> = r.iter().filter(|(_, &v)| !(v < super::TOLERANCE)).collect();
        assert!(bad.is_empty(), "{bad:?}");
        assert!(r.len() > 40);
    }
}
