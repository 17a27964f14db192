//! Codec teacher training and decoder-only codec distillation.

use std::time::Instant;

use crate::checkpoint::{hex_sha256, param_hash};
use crate::codec_loss::{codec_total, commitment, disc_loss, mel_multi_scale, time_l1, MelBank};
use crate::error::{invalid, Result};
use crate::models::{Codec, MultiScaleDiscriminator, Waveform};
use crate::nn::Module;
use crate::train::config::{RunConfig, Task};
use crate::train::log::{MetricsLog, StepLosses, StepRecord};
use crate::train::optim::Adam;
use crate::train::{stream_rng, BatchSampler};
use crate::Real;

/// Rejects clips the codec cannot process.
pub fn check_clips(clips: &[Vec<f32>], codec: &crate::models::CodecConfig, min_len: usize) -> Result<()> {
    let Some(first) = clips.first() else {
        return invalid("waveform corpus is empty");
    };
    let n = first.len();
    let ds = codec.downsample();
    if n % ds != 0 || n < min_len {
        return invalid(format!(
            "clip length {n} incompatible with codec: must be a multiple of {ds} and at least {min_len}"
        ));
    }
    if let Some(i) = clips.iter().position(|c| c.len() != n) {
        return invalid(format!("clip {i} has length {}, expected {n}", clips[i].len()));
    }
    Ok(())
}

fn gather(clips: &[Vec<f32>], idx: &[usize], sample_rate: u32) -> Result<Waveform<Real>> {
    let batch: Vec<Vec<f32>> = idx.iter().map(|&i| clips[i].clone()).collect();
    Waveform::from_clips(&batch, sample_rate)
}

/// Trains a full codec on reconstruction (time L1 + multi-scale mel) plus
/// commitment, weighted by the ground-truth λ's of `cfg.lambdas`.
pub fn train_codec_teacher(
    cfg: &RunConfig,
    clips: &[Vec<f32>],
    sample_rate: u32,
    log: &mut MetricsLog,
) -> Result<Codec<Real>> {
    if cfg.task != Task::TrainCodecTeacher {
        return invalid(format!("train_codec_teacher called with task {:?}", cfg.task));
    }
    cfg.validate()?;
    check_clips(clips, &cfg.codec, cfg.mel.max_window())?;
    let mel = MelBank::<Real>::new(&cfg.mel)?;
    let mut rng = stream_rng(cfg.seed, 0);
    let mut codec = Codec::<Real>::new(&mut rng, &cfg.codec)?;
    let warm = BatchSampler::new(clips.len(), cfg.batch_size, stream_rng(cfg.seed, 3)).next_batch();
    let z = codec.encoder.forward(&gather(clips, &warm, sample_rate)?.samples)?;
    codec.quantizer.init_from_latents(&mut rng, &z)?;
    let mut batches = BatchSampler::new(clips.len(), cfg.batch_size, stream_rng(cfg.seed, 1));
    let mut opt = Adam::new(cfg.optimizer)?;
    let (g, _) = cfg.lambdas.effective();
    let start = Instant::now();
    for step in 0..cfg.steps {
        let x = gather(clips, &batches.next_batch(), sample_rate)?;
        let (y, q) = codec.reconstruct(&x)?;
        let lt = time_l1(&x.samples, &y.samples)?;
        let lf = mel_multi_scale(&x.samples, &y.samples, &mel)?;
        let lw = commitment(&q.trace)?;
        let loss = lt.scale(g[0]).add(&lf.scale(g[1]))?.add(&lw.scale(g[4]))?;
        let grads = loss.backward()?;
        let stats = opt.step(&mut [&mut codec], &grads)?;
        log.push(&StepRecord {
            step,
            losses: StepLosses::Recon {
                time: lt.item()?,
                mel: lf.item()?,
                commit: lw.item()?,
                total: loss.item()?,
            },
            weights: None,
            lr: cfg.optimizer.lr,
            grad_norm: stats.grad_norm,
            wall_time: cfg.log_wall_time.then(|| start.elapsed().as_secs_f64()),
        })?;
    }
    log.flush()?;
    Ok(codec)
}

#[derive(Debug, Clone)]
pub struct DistilledCodec {
    /// Teacher encoder and quantizer (frozen) with the trained student decoder.
    pub student: Codec<Real>,
    pub discriminator: MultiScaleDiscriminator<Real>,
    /// Hash of the frozen encoder + quantizer, identical before and after.
    pub frozen_hash: String,
}

/// Hash of a codec's encoder and quantizer parameters.
pub fn frozen_part_hash(codec: &Codec<Real>) -> String {
    let joined = format!("{}{}", param_hash(&codec.encoder), param_hash(&codec.quantizer));
    hex_sha256(joined.as_bytes())
}

/// Fresh student (teacher encoder/quantizer, new decoder) and discriminator.
pub fn init_codec_student(cfg: &RunConfig, teacher: &Codec<Real>) -> Result<DistilledCodec> {
    let mut rng = stream_rng(cfg.seed, 0);
    let mut student = Codec::student_of(teacher, &mut rng, cfg.student_decoder_channels)?;
    student.freeze_encoder_quantizer(true);
    student.decoder.set_trainable(true);
    let discriminator = MultiScaleDiscriminator::new(&mut rng, &cfg.discriminator)?;
    Ok(DistilledCodec {
        frozen_hash: frozen_part_hash(&student),
        student,
        discriminator,
    })
}

/// Mean multi-scale mel distance between `codec` reconstructions and the
/// clips, over batches of `batch`.
pub fn eval_mel(codec: &Codec<Real>, clips: &[Vec<f32>], sample_rate: u32, mel: &MelBank<Real>, batch: usize) -> Result<f64> {
    let mut frozen = codec.clone();
    frozen.set_trainable(false);
    let mut total = 0.0;
    let idx: Vec<usize> = (0..clips.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let x = gather(clips, chunk, sample_rate)?;
        let (y, _) = frozen.reconstruct(&x)?;
        total += mel_multi_scale(&x.samples, &y.samples, mel)?.item()? * chunk.len() as f64;
    }
    Ok(total / clips.len() as f64)
}

/// Alternating discriminator / generator updates (1 : 1); only the student
/// decoder and the discriminators learn.
pub fn distill_codec(
    cfg: &RunConfig,
    teacher: &Codec<Real>,
    clips: &[Vec<f32>],
    sample_rate: u32,
    log: &mut MetricsLog,
) -> Result<DistilledCodec> {
    if cfg.task != Task::DistillCodec {
        return invalid(format!("distill_codec called with task {:?}", cfg.task));
    }
    cfg.validate()?;
    if teacher.cfg != cfg.codec {
        return invalid("teacher codec geometry differs from the configured codec");
    }
    check_clips(clips, &cfg.codec, cfg.mel.max_window())?;
    let mel = MelBank::<Real>::new(&cfg.mel)?;
    let mut run = init_codec_student(cfg, teacher)?;
    let mut frozen_teacher = teacher.clone();
    frozen_teacher.set_trainable(false);
    let mut batches = BatchSampler::new(clips.len(), cfg.batch_size, stream_rng(cfg.seed, 1));
    let mut opt_g = Adam::new(cfg.optimizer)?;
    let mut opt_d = Adam::new(cfg.optimizer)?;
    let start = Instant::now();
    for step in 0..cfg.steps {
        let x = gather(clips, &batches.next_batch(), sample_rate)?;
        let (xt, _) = frozen_teacher.reconstruct(&x)?;
        let (xs, q) = run.student.reconstruct(&x)?;

        let ld = disc_loss(&run.discriminator, &x.samples, &xs.samples, &xt.samples)?;
        let d_grads = ld.backward()?;
        opt_d.step(&mut [&mut run.discriminator], &d_grads)?;

        let (lg, breakdown) = codec_total(
            &run.discriminator,
            &mel,
            &x.samples,
            &xs.samples,
            &xt.samples,
            &q.trace,
            &cfg.lambdas,
        )?;
        let g_grads = lg.backward()?;
        let stats = opt_g.step(&mut [&mut run.student], &g_grads)?;
        log.push(&StepRecord {
            step,
            losses: StepLosses::Codec {
                generator: breakdown,
                discriminator: Some(ld.item()?),
            },
            weights: None,
            lr: cfg.optimizer.lr,
            grad_norm: stats.grad_norm,
            wall_time: cfg.log_wall_time.then(|| start.elapsed().as_secs_f64()),
        })?;
    }
    log.flush()?;
    if frozen_part_hash(&run.student) != run.frozen_hash {
        return invalid("encoder or quantizer changed during decoder distillation");
    }
    Ok(run)
}
