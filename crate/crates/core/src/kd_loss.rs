//! LM distillation objective: cross-entropy against ground-truth codes, KL
//! against a frozen teacher, hidden-state MSE on mapped layers, and their
//! weighted sum.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{HiddenTrace, LogitsBatch, TokenBatch};
use crate::nn::Linear;
use crate::sampling::SimplexWeights;
use crate::{Scalar, Tensor};

/// Probability floor inside every log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Reduction and temperature shared by the output-level losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdOptions {
    /// Sum over time instead of averaging.
    pub sum_over_time: bool,
    pub temperature: f64,
}

impl Default for KdOptions {
    fn default() -> Self {
        Self {
            sum_over_time: false,
            temperature: 1.0,
        }
    }
}

impl KdOptions {
    fn check(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return invalid(format!("temperature must be positive, got {}", self.temperature));
        }
        Ok(())
    }

    fn time_factor(&self, t: usize) -> f64 {
        if self.sum_over_time {
            t as f64
        } else {
            1.0
        }
    }
}

/// Per-term magnitude alignment factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossScales {
    pub l_s: f64,
    pub l_t: f64,
    pub l_m: f64,
}

impl Default for LossScales {
    fn default() -> Self {
        Self {
            l_s: 1.0,
            l_t: 1.0,
            l_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub student: f64,
    pub teacher: f64,
    pub mse: f64,
    pub total: f64,
    /// Sampled mixing weights, `None` for the fixed-weight sum.
    pub weights: Option<Vec<f64>>,
}

fn log_probs<S: Scalar>(logits: &Tensor<S>, temperature: f64) -> Result<Tensor<S>> {
    if temperature == 1.0 {
        logits.log_softmax(3)
    } else {
        logits.scale(1.0 / temperature).log_softmax(3)
    }
}

/// Cross-entropy of `logits: [B, K, T, C]` against `targets`, averaged over
/// codebooks, batch and (unless `sum_over_time`) time.
pub fn student_loss<S: Scalar>(logits: &LogitsBatch<S>, targets: &TokenBatch, opts: &KdOptions) -> Result<Tensor<S>> {
    opts.check()?;
    let l = &logits.0;
    let (b, k, t, c) = (targets.batch, targets.codebooks, targets.time, targets.cardinality);
    if l.shape() != [b, k, t, c] {
        return Err(Error::ShapeMismatch {
            op: "student_loss",
            lhs: l.shape().to_vec(),
            rhs: vec![b, k, t, c],
        });
    }
    let mut onehot = vec![S::zero(); b * k * t * c];
    for (i, &code) in targets.codes.iter().enumerate() {
        if code >= c {
            return Err(Error::OutOfRange {
                what: "target code",
                index: code,
                size: c,
            });
        }
        onehot[i * c + code] = S::one();
    }
    let y = Tensor::new(onehot, l.shape())?;
    let ce = log_probs(l, opts.temperature)?.mul(&y)?.sum_all();
    Ok(ce.scale(-opts.time_factor(t) / (b * k * t) as f64))
}

/// `KL(q || p)` with `q` the (detached) teacher posterior and `p` the
/// student's, averaged like [`student_loss`]. Always nonnegative.
pub fn teacher_loss<S: Scalar>(
    student: &LogitsBatch<S>,
    teacher: &LogitsBatch<S>,
    opts: &KdOptions,
) -> Result<Tensor<S>> {
    opts.check()?;
    let (s, t) = (&student.0, &teacher.0);
    if s.shape() != t.shape() || s.rank() != 4 {
        return Err(Error::ShapeMismatch {
            op: "teacher_loss",
            lhs: s.shape().to_vec(),
            rhs: t.shape().to_vec(),
        });
    }
    let floor = PROB_FLOOR.ln();
    let log_q = log_probs(&t.detach(), opts.temperature)?;
    let q = log_q.exp();
    let log_q = log_q.clamp_min(floor);
    let log_p = log_probs(s, opts.temperature)?.clamp_min(floor);
    let kl = q.mul(&log_q.sub(&log_p)?)?.sum_all();
    let sh = s.shape();
    Ok(kl.scale(opts.time_factor(sh[2]) / (sh[0] * sh[1] * sh[2]) as f64))
}

/// Student→teacher width projection for the hidden-state loss.
pub fn hidden_projection<S: Scalar>(rng: &mut impl rand::Rng, student_dim: usize, teacher_dim: usize) -> Result<Linear<S>> {
    Linear::new(rng, student_dim, teacher_dim, false)
}

/// Mean over student layers `k` of the per-element mean squared error between
/// teacher layer `mapping[k]` and the (optionally projected) student layer `k`.
pub fn intermediate_mse<S: Scalar>(
    student: &HiddenTrace<S>,
    teacher: &HiddenTrace<S>,
    mapping: &[usize],
    projection: Option<&Linear<S>>,
) -> Result<Tensor<S>> {
    if mapping.len() != student.layers.len() || mapping.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "intermediate_mse mapping",
            lhs: vec![student.layers.len()],
            rhs: vec![mapping.len()],
        });
    }
    let mut total: Option<Tensor<S>> = None;
    for (ys, &m) in student.layers.iter().zip(mapping) {
        let yt = teacher.layers.get(m).ok_or(Error::OutOfRange {
            what: "teacher layer",
            index: m,
            size: teacher.layers.len(),
        })?;
        let ys = match projection {
            Some(p) => p.forward(ys)?,
            None => ys.clone(),
        };
        let term = ys.mse(&yt.detach())?;
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    Ok(total.expect("nonempty mapping").scale(1.0 / mapping.len() as f64))
}

/// Active loss terms; `None` means the term is disabled.
#[derive(Debug, Clone)]
pub struct LossParts<S: Scalar> {
    pub student: Option<Tensor<S>>,
    pub teacher: Option<Tensor<S>>,
    pub mse: Option<Tensor<S>>,
}

/// `Σ a_i · scale_i · L_i` with `a` the sampled weights, or `Σ scale_i · L_i`
/// without them. Disabled terms contribute 0.
pub fn combined_lm_loss<S: Scalar>(
    parts: &LossParts<S>,
    scales: &LossScales,
    weights: Option<&SimplexWeights>,
) -> Result<(Tensor<S>, LossBreakdown)> {
    let sc = [scales.l_s, scales.l_t, scales.l_m];
    if sc.iter().any(|&v| !(v >= 0.0)) {
        return invalid(format!("loss scales must be nonnegative, got {sc:?}"));
    }
    let a = match weights {
        Some(w) => {
            let a = w.as_slice();
            if a.len() != 3 {
                return invalid(format!("expected 3 loss weights, got {}", a.len()));
            }
            let s: f64 = a.iter().sum();
            if (s - 1.0).abs() > 1e-9 || a.iter().any(|&v| v < 0.0) {
                return invalid(format!("loss weights {a:?} are not on the simplex"));
            }
            [a[0], a[1], a[2]]
        }
        None => [1.0; 3],
    };
    let terms = [&parts.student, &parts.teacher, &parts.mse];
    let mut values = [0.0; 3];
    let mut total: Option<Tensor<S>> = None;
    for i in 0..3 {
        let Some(t) = terms[i] else { continue };
        values[i] = t.item()?;
        let w = a[i] * sc[i];
        let term = t.scale(w);
        total = Some(match total {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
    }
    let Some(total) = total else {
        return invalid("no active loss term");
    };
    let breakdown = LossBreakdown {
        student: values[0],
        teacher: values[1],
        mse: values[2],
        total: total.item()?,
        weights: weights.map(|w| w.0.clone()),
    };
    Ok((total, breakdown))
}
