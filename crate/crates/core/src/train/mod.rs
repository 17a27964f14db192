//! Seeded training loops: LM teacher and distillation, codec teacher and
//! decoder distillation, plus the optimizer, run configs and logs they share.
//!
//! Every run is a pure function of its [`RunConfig`]: model init, batch order
//! and loss-weight draws come from separate streams of one seeded ChaCha RNG.

pub mod codec;
pub mod config;
pub mod lm;
pub mod log;
pub mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use codec::{distill_codec, eval_mel, frozen_part_hash, train_codec_teacher, DistilledCodec};
pub use config::{lm_ablation_grid, weight_factor_sweep, Init, LossFlags, Paths, RunConfig, Task, Variant};
pub use lm::{distill_lm, init_student, train_teacher, DistilledLm};
pub use log::{version_string, MetricsLog, RunManifest, StepLosses, StepRecord};
pub use optim::{Adam, AdamConfig, StepStats};

/// Stream `stream` of the run RNG seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Epoch-wise shuffled minibatches; a batch never straddles two epochs, so
/// the last one of an epoch may be smaller.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, batch: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            batch: batch.clamp(1, n.max(1)),
            rng,
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        out
    }
}
