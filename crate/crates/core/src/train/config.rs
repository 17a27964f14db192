//! Run configuration: one JSON document per training run.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkpoint::hex_sha256;
use crate::codec_loss::{Lambdas, MelConfig};
use crate::error::{invalid, Error, Result};
use crate::kd_loss::{KdOptions, LossScales};
use crate::models::{CodecConfig, DiscriminatorConfig, LmConfig};
use crate::sampling::Strategy;
use crate::train::optim::AdamConfig;
use crate::transfer::{check_transfer_compat, MapStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    TrainTeacher,
    DistillLm,
    TrainCodecTeacher,
    DistillCodec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Fewer layers at teacher width.
    V1,
    /// More, narrower layers.
    #[default]
    V2,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::V1 => "V1",
            Variant::V2 => "V2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    #[default]
    Random,
    /// Copy mapped teacher blocks into the student.
    Transfer,
}

/// Which LM distillation terms are active: `H` ground-truth cross-entropy,
/// `S` teacher KL, `mse` hidden-state alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossFlags {
    pub hard: bool,
    pub soft: bool,
    pub mse: bool,
}

impl Default for LossFlags {
    fn default() -> Self {
        Self {
            hard: true,
            soft: true,
            mse: true,
        }
    }
}

impl LossFlags {
    pub fn as_array(&self) -> [bool; 3] {
        [self.hard, self.soft, self.mse]
    }

    pub fn count(&self) -> usize {
        self.as_array().iter().filter(|&&f| f).count()
    }
}

impl fmt::Display for LossFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.hard, "H"), (self.soft, "S"), (self.mse, "mse")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        f.write_str(&names.join("/"))
    }
}

impl FromStr for LossFlags {
    type Err = Error;
    /// `H,S,mse`, `H/S`, `s` …
    fn from_str(s: &str) -> Result<Self> {
        let mut flags = Self {
            hard: false,
            soft: false,
            mse: false,
        };
        for part in s.split([',', '/']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "h" => flags.hard = true,
                "s" => flags.soft = true,
                "mse" => flags.mse = true,
                other => return invalid(format!("unknown loss flag `{other}` (expected H, S or mse)")),
            }
        }
        if flags.count() == 0 {
            return invalid("no loss flag given");
        }
        Ok(flags)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Token corpus file or waveform corpus directory.
    pub data: Option<PathBuf>,
    /// Held-out waveform directory for codec evaluation.
    pub eval_data: Option<PathBuf>,
    /// Teacher checkpoint.
    pub teacher: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub variant: Variant,
    pub losses: LossFlags,
    pub sampling: Strategy,
    pub init: Init,
    pub layer_map: MapStrategy,
    pub scales: LossScales,
    pub kd: KdOptions,
    pub lambdas: Lambdas,
    pub optimizer: AdamConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub teacher_lm: LmConfig,
    /// Overrides the variant's preset geometry.
    pub student_lm: Option<LmConfig>,
    pub codec: CodecConfig,
    pub student_decoder_channels: usize,
    pub discriminator: DiscriminatorConfig,
    pub mel: MelConfig,
    /// Fresh contexts for the exact conditional KL at the end of LM runs.
    pub eval_contexts: usize,
    /// Record wall-clock time in the metrics log (breaks bitwise
    /// reproducibility of the log).
    pub log_wall_time: bool,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::default(),
            variant: Variant::default(),
            losses: LossFlags::default(),
            sampling: Strategy::None,
            init: Init::default(),
            layer_map: MapStrategy::default(),
            scales: LossScales::default(),
            kd: KdOptions::default(),
            lambdas: Lambdas::default(),
            optimizer: AdamConfig::default(),
            steps: 1000,
            batch_size: 16,
            seed: 0,
            teacher_lm: LmConfig::desk_teacher(),
            student_lm: None,
            codec: CodecConfig::desk_teacher(),
            student_decoder_channels: 4,
            discriminator: DiscriminatorConfig::default(),
            mel: MelConfig::default(),
            eval_contexts: 256,
            log_wall_time: false,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Student geometry: the override, or the variant preset with the
    /// teacher's token layout and conditioner.
    pub fn student_lm(&self) -> LmConfig {
        if let Some(s) = &self.student_lm {
            return s.clone();
        }
        let preset = match self.variant {
            Variant::V1 => LmConfig::desk_v1(),
            Variant::V2 => LmConfig::desk_v2(),
        };
        LmConfig {
            codebooks: self.teacher_lm.codebooks,
            cardinality: self.teacher_lm.cardinality,
            max_time: self.teacher_lm.max_time,
            conditioner: self.teacher_lm.conditioner.clone(),
            ..preset
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return invalid("steps and batch_size must be positive");
        }
        self.optimizer.validate()?;
        self.teacher_lm.validate()?;
        match self.task {
            Task::TrainTeacher => {}
            Task::DistillLm => {
                let student = self.student_lm();
                student.validate()?;
                if self.losses.count() == 0 {
                    return invalid("at least one loss flag must be active");
                }
                if self.sampling != Strategy::None && self.losses.count() < 2 {
                    return invalid(format!(
                        "sampling {:?} needs at least two active loss terms, got {}",
                        self.sampling, self.losses
                    ));
                }
                if self.init == Init::Transfer {
                    check_transfer_compat(&self.teacher_lm, &student)?;
                }
                if student.layers > self.teacher_lm.layers {
                    return invalid("student deeper than teacher");
                }
            }
            Task::TrainCodecTeacher | Task::DistillCodec => {
                self.codec.validate()?;
                self.mel.validate()?;
                self.lambdas.validate()?;
                if self.student_decoder_channels == 0 {
                    return invalid("student decoder needs channels");
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn hash(&self) -> String {
        hex_sha256(self.to_json().as_bytes())
    }

    /// Table-style row label, e.g. `V2 H/S/mse/S2`.
    pub fn label(&self) -> String {
        let mut s = format!("{} {}", self.variant, self.losses);
        match self.sampling {
            Strategy::None => {}
            Strategy::S1 => s.push_str("/S1"),
            Strategy::S2 => s.push_str("/S2"),
        }
        if self.init == Init::Transfer {
            s.push_str(", weight copy");
        }
        s
    }
}

/// The LM ablation grid: every distilled-student row, as `(label, config)`.
pub fn lm_ablation_grid(base: &RunConfig) -> Vec<(String, RunConfig)> {
    let row = |variant, losses: &str, init, sampling| {
        let cfg = RunConfig {
            task: Task::DistillLm,
            variant,
            losses: losses.parse().expect("static flags"),
            init,
            sampling,
            ..base.clone()
        };
        (cfg.label(), cfg)
    };
    use Init::*;
    use Strategy as St;
    use Variant::*;
    vec![
        row(V1, "H", Random, St::None),
        row(V1, "S", Random, St::None),
        row(V1, "H", Transfer, St::None),
        row(V1, "S", Transfer, St::None),
        row(V1, "H,mse", Random, St::None),
        row(V1, "S,mse", Random, St::None),
        row(V1, "H,S,mse", Random, St::None),
        row(V2, "H", Random, St::None),
        row(V2, "S", Random, St::None),
        row(V2, "H,mse", Random, St::None),
        row(V2, "S,mse", Random, St::None),
        row(V2, "H,S,mse", Random, St::None),
        row(V2, "H,S,mse", Random, St::S1),
        row(V2, "H,S,mse", Random, St::S2),
    ]
}

/// Codec distillation configs for each weight factor.
pub fn weight_factor_sweep(base: &RunConfig, factors: &[f64]) -> Vec<RunConfig> {
    factors
        .iter()
        .map(|&wf| RunConfig {
            task: Task::DistillCodec,
            lambdas: Lambdas {
                weight_factor: wf,
                ..base.lambdas
            },
            ..base.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let partial = RunConfig::from_json(r#"{"task": "distill-lm", "steps": 5}"#).unwrap();
        assert_eq!(partial.steps, 5);
        assert!(RunConfig::from_json(r#"{"stepz": 5}"#).is_err());
    }

    #[test]
    fn flags_parse_and_print() {
        let f: LossFlags = "H,S,mse".parse().unwrap();
        assert_eq!(f.to_string(), "H/S/mse");
        assert_eq!("s/MSE".parse::<LossFlags>().unwrap().to_string(), "S/mse");
        assert!("H,x".parse::<LossFlags>().is_err());
        assert!("".parse::<LossFlags>().is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        let mut cfg = RunConfig {
            task: Task::DistillLm,
            losses: "H".parse().unwrap(),
            sampling: Strategy::S1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.sampling = Strategy::None;
        cfg.validate().unwrap();
        cfg.init = Init::Transfer;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("24") && err.contains("32"), "{err}");
        cfg.variant = Variant::V1;
        cfg.validate().unwrap();
    }
}
