//! Teacher training and LM distillation.

use std::time::Instant;

use crate::checkpoint::param_hash;
use crate::data::TokenCorpus;
use crate::error::{invalid, Error, Result};
use crate::kd_loss::{combined_lm_loss, hidden_projection, intermediate_mse, student_loss, teacher_loss, LossParts};
use crate::models::{LanguageModel, LmConfig};
use crate::nn::{Linear, Module};
use crate::sampling::sample_active;
use crate::train::config::{Init, RunConfig, Task};
use crate::train::log::{MetricsLog, StepLosses, StepRecord};
use crate::train::optim::Adam;
use crate::train::{stream_rng, BatchSampler};
use crate::transfer::{layer_map, transfer_weights, LayerMapping};
use crate::Real;

/// Rejects corpora whose token layout or captions do not fit `cfg`.
pub fn check_corpus(corpus: &TokenCorpus, cfg: &LmConfig) -> Result<()> {
    if corpus.clips.is_empty() {
        return invalid("token corpus is empty");
    }
    if corpus.codebooks != cfg.codebooks || corpus.cardinality != cfg.cardinality {
        return Err(Error::ShapeMismatch {
            op: "corpus vs lm config (K, C)",
            lhs: vec![cfg.codebooks, cfg.cardinality],
            rhs: vec![corpus.codebooks, corpus.cardinality],
        });
    }
    let t0 = corpus.clips[0].time;
    for (i, clip) in corpus.clips.iter().enumerate() {
        if clip.time != t0 || clip.time > cfg.max_time {
            return invalid(format!(
                "clip {i}: length {} (first clip {t0}, max_time {})",
                clip.time, cfg.max_time
            ));
        }
        if clip.caption.len() > cfg.conditioner.max_len {
            return invalid(format!("clip {i}: caption longer than {}", cfg.conditioner.max_len));
        }
        if let Some(&tok) = clip.caption.iter().find(|&&t| t >= cfg.conditioner.vocab) {
            return Err(Error::OutOfRange {
                what: "caption vocab",
                index: tok,
                size: cfg.conditioner.vocab,
            });
        }
    }
    Ok(())
}

fn elapsed(cfg: &RunConfig, start: &Instant) -> Option<f64> {
    cfg.log_wall_time.then(|| start.elapsed().as_secs_f64())
}

/// Trains an LM on ground-truth codes with the cross-entropy term only.
pub fn train_teacher(cfg: &RunConfig, corpus: &TokenCorpus, log: &mut MetricsLog) -> Result<LanguageModel<Real>> {
    if cfg.task != Task::TrainTeacher {
        return invalid(format!("train_teacher called with task {:?}", cfg.task));
    }
    cfg.validate()?;
    check_corpus(corpus, &cfg.teacher_lm)?;
    let mut model = LanguageModel::<Real>::new(&mut stream_rng(cfg.seed, 0), &cfg.teacher_lm)?;
    let mut batches = BatchSampler::new(corpus.clips.len(), cfg.batch_size, stream_rng(cfg.seed, 1));
    let mut opt = Adam::new(cfg.optimizer)?;
    let start = Instant::now();
    for step in 0..cfg.steps {
        let (captions, tokens) = corpus.batch(&batches.next_batch())?;
        let (logits, _) = model.forward(&captions, &tokens)?;
        let parts = LossParts {
            student: Some(student_loss(&logits, &tokens, &cfg.kd)?),
            teacher: None,
            mse: None,
        };
        let (loss, breakdown) = combined_lm_loss(&parts, &cfg.scales, None)?;
        let grads = loss.backward()?;
        let stats = opt.step(&mut [&mut model], &grads)?;
        log.push(&StepRecord {
            step,
            losses: StepLosses::Lm(breakdown),
            weights: None,
            lr: cfg.optimizer.lr,
            grad_norm: stats.grad_norm,
            wall_time: elapsed(cfg, &start),
        })?;
    }
    log.flush()?;
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct DistilledLm {
    pub student: LanguageModel<Real>,
    /// Student→teacher width projection when the MSE term needs one.
    pub projection: Option<Linear<Real>>,
    pub mapping: LayerMapping,
    pub teacher_hash: String,
}

/// Fresh (or transferred) student for `cfg`, with its layer mapping and
/// optional projection. Deterministic in `cfg.seed`.
pub fn init_student(cfg: &RunConfig, teacher: &LanguageModel<Real>) -> Result<DistilledLm> {
    let scfg = cfg.student_lm();
    let mut rng = stream_rng(cfg.seed, 0);
    let mut student = LanguageModel::<Real>::new(&mut rng, &scfg)?;
    let mapping = layer_map(cfg.layer_map, scfg.layers, teacher.cfg.layers)?;
    if cfg.init == Init::Transfer {
        transfer_weights(teacher, &mut student, &mapping)?;
    }
    let projection = if cfg.losses.mse && scfg.dim != teacher.cfg.dim {
        Some(hidden_projection(&mut rng, scfg.dim, teacher.cfg.dim)?)
    } else {
        None
    };
    Ok(DistilledLm {
        student,
        projection,
        mapping,
        teacher_hash: param_hash(teacher),
    })
}

/// Distils `teacher` into a student with the loss terms, weighting and
/// initialization selected by `cfg`. The teacher is never updated.
pub fn distill_lm(
    cfg: &RunConfig,
    teacher: &LanguageModel<Real>,
    corpus: &TokenCorpus,
    log: &mut MetricsLog,
) -> Result<DistilledLm> {
    if cfg.task != Task::DistillLm {
        return invalid(format!("distill_lm called with task {:?}", cfg.task));
    }
    cfg.validate()?;
    if teacher.cfg != cfg.teacher_lm {
        return invalid("teacher checkpoint geometry differs from the configured teacher_lm");
    }
    check_corpus(corpus, &cfg.teacher_lm)?;
    let mut run = init_student(cfg, teacher)?;
    let mut frozen = teacher.clone();
    frozen.set_trainable(false);
    let flags = cfg.losses;
    let mut batches = BatchSampler::new(corpus.clips.len(), cfg.batch_size, stream_rng(cfg.seed, 1));
    let mut weight_rng = stream_rng(cfg.seed, 2);
    let mut opt = Adam::new(cfg.optimizer)?;
    let start = Instant::now();
    for step in 0..cfg.steps {
        let (captions, tokens) = corpus.batch(&batches.next_batch())?;
        let (t_logits, t_trace) = if flags.soft || flags.mse {
            let (l, t) = frozen.forward(&captions, &tokens)?;
            (Some(l), Some(t))
        } else {
            (None, None)
        };
        let (s_logits, s_trace) = run.student.forward(&captions, &tokens)?;
        let parts = LossParts {
            student: flags.hard.then(|| student_loss(&s_logits, &tokens, &cfg.kd)).transpose()?,
            teacher: match (&t_logits, flags.soft) {
                (Some(t), true) => Some(teacher_loss(&s_logits, t, &cfg.kd)?),
                _ => None,
            },
            mse: match (&t_trace, flags.mse) {
                (Some(t), true) => Some(intermediate_mse(&s_trace, t, &run.mapping.map, run.projection.as_ref())?),
                _ => None,
            },
        };
        let weights = sample_active(cfg.sampling, &mut weight_rng, &flags.as_array());
        let (loss, breakdown) = combined_lm_loss(&parts, &cfg.scales, weights.as_ref())?;
        let grads = loss.backward()?;
        let stats = match &mut run.projection {
            Some(p) => opt.step(&mut [&mut run.student, p], &grads)?,
            None => opt.step(&mut [&mut run.student], &grads)?,
        };
        log.push(&StepRecord {
            step,
            losses: StepLosses::Lm(breakdown),
            weights: weights.map(|w| w.0),
            lr: cfg.optimizer.lr,
            grad_norm: stats.grad_norm,
            wall_time: elapsed(cfg, &start),
        })?;
    }
    log.flush()?;
    if param_hash(&frozen) != run.teacher_hash {
        return invalid("teacher parameters changed during distillation");
    }
    Ok(run)
}

