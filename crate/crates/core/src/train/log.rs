//! JSON-lines metrics log and run manifest.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec_loss::CodecBreakdown;
use crate::error::Result;
use crate::kd_loss::LossBreakdown;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepLosses {
    Lm(LossBreakdown),
    Codec {
        generator: CodecBreakdown,
        discriminator: Option<f64>,
    },
    /// Codec teacher: reconstruction terms only.
    Recon { time: f64, mel: f64, commit: f64, total: f64 },
}

/// One optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub losses: StepLosses,
    /// Mixing weights over (H, S, mse) when sampled.
    pub weights: Option<Vec<f64>>,
    pub lr: f64,
    pub grad_norm: f64,
    /// Seconds since the run started; only when enabled in the config.
    pub wall_time: Option<f64>,
}

/// Append-only: one line per optimizer step, mirrored to an optional sink.
#[derive(Default)]
pub struct MetricsLog {
    lines: Vec<String>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for MetricsLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricsLog").field("lines", &self.lines.len()).finish()
    }
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn to_file(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::create(path)?;
        Ok(Self {
            lines: Vec::new(),
            sink: Some(Box::new(std::io::BufWriter::new(f))),
        })
    }

    pub fn push(&mut self, record: &StepRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        if let Some(sink) = &mut self.sink {
            writeln!(sink, "{line}")?;
        }
        self.lines.push(line);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(sink) = &mut self.sink {
            sink.flush()?;
        }
        Ok(())
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn records(&self) -> Result<Vec<StepRecord>> {
        self.lines.iter().map(|l| Ok(serde_json::from_str(l)?)).collect()
    }

    pub fn contents(&self) -> String {
        self.lines.iter().map(|l| format!("{l}\n")).collect()
    }
}

impl Drop for MetricsLog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// Written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub task: crate::train::Task,
    pub label: Option<String>,
    pub layer_mapping: Option<Vec<usize>>,
    pub teacher_hash: Option<String>,
    pub checkpoint_hash: Option<String>,
    pub final_metric: Option<f64>,
    pub version: String,
}

pub fn version_string() -> String {
    format!("kdforge {}", env!("CARGO_PKG_VERSION"))
}
