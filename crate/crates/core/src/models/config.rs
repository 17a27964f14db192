use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Text conditioner geometry (a small transformer encoder).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionerConfig {
    pub vocab: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
}

impl Default for ConditionerConfig {
    fn default() -> Self {
        // four encoder layers, as in T5-tiny
        Self {
            vocab: 32,
            dim: 16,
            layers: 4,
            heads: 2,
            max_len: 16,
        }
    }
}

/// Multi-codebook autoregressive LM geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    /// K parallel codebooks per time step.
    pub codebooks: usize,
    /// C, size of each codebook.
    pub cardinality: usize,
    pub max_time: usize,
    pub ffn_mult: usize,
    pub conditioner: ConditionerConfig,
}

impl LmConfig {
    pub fn cond_dim(&self) -> usize {
        self.conditioner.dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return invalid(format!("lm dim {} not divisible by {} heads", self.dim, self.heads));
        }
        if self.codebooks < 1 {
            return invalid("lm needs at least one codebook");
        }
        if self.cardinality < 2 {
            return invalid("codebook cardinality must be at least 2");
        }
        if self.layers == 0 || self.max_time == 0 || self.ffn_mult == 0 {
            return invalid("lm layers, max_time and ffn_mult must be positive");
        }
        let c = &self.conditioner;
        if c.heads == 0 || !c.dim.is_multiple_of(c.heads) {
            return invalid(format!("conditioner dim {} not divisible by {} heads", c.dim, c.heads));
        }
        Ok(())
    }

    fn with_geometry(layers: usize, heads: usize, dim: usize) -> Self {
        Self {
            layers,
            heads,
            dim,
            codebooks: 4,
            cardinality: 64,
            max_time: 32,
            ffn_mult: 4,
            conditioner: ConditionerConfig::default(),
        }
    }

    /// Full-size Variant 1 geometry: 4 layers, 16 heads, width 1024.
    pub fn full_v1() -> Self {
        Self::with_geometry(4, 16, 1024)
    }

    /// Full-size Variant 2 geometry: 7 layers, 8 heads, width 720.
    pub fn full_v2() -> Self {
        Self::with_geometry(7, 8, 720)
    }

    /// Full-size teacher geometry: 24 layers, 16 heads, width 1024.
    pub fn full_teacher() -> Self {
        Self::with_geometry(24, 16, 1024)
    }

    /// Desk-scale teacher: 24 layers at width 32.
    pub fn desk_teacher() -> Self {
        Self::with_geometry(24, 16, 32)
    }

    /// Desk-scale V1: teacher width, 4 layers.
    pub fn desk_v1() -> Self {
        Self::with_geometry(4, 16, 32)
    }

    /// Desk-scale V2: 7 layers at 24/32 of the teacher width (720/1024 rounded
    /// to a multiple of 8 heads).
    pub fn desk_v2() -> Self {
        Self::with_geometry(7, 8, 24)
    }
}

/// Convolutional codec geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub base_channels: usize,
    pub strides: Vec<usize>,
    pub latent_dim: usize,
    pub rvq_stages: usize,
    pub rvq_codebook_size: usize,
    pub decoder_channels: usize,
    /// Conv residual unit in every block (stands in for the LSTM).
    pub residual_units: bool,
}

impl CodecConfig {
    pub fn downsample(&self) -> usize {
        self.strides.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty() || self.strides.contains(&0) {
            return invalid("codec strides must be nonempty and positive");
        }
        if self.base_channels == 0 || self.decoder_channels == 0 || self.latent_dim == 0 {
            return invalid("codec channel counts must be positive");
        }
        if self.rvq_stages == 0 || self.rvq_codebook_size < 2 {
            return invalid("rvq needs at least one stage and two entries per codebook");
        }
        Ok(())
    }

    /// Teacher geometry: four conv blocks starting at 64 channels.
    pub fn encodec_teacher() -> Self {
        Self {
            base_channels: 64,
            strides: vec![2, 4, 5, 8],
            latent_dim: 128,
            rvq_stages: 4,
            rvq_codebook_size: 1024,
            decoder_channels: 64,
            residual_units: true,
        }
    }

    pub fn desk_teacher() -> Self {
        Self {
            base_channels: 8,
            strides: vec![2, 2, 2, 2],
            latent_dim: 16,
            rvq_stages: 4,
            rvq_codebook_size: 64,
            decoder_channels: 8,
            residual_units: true,
        }
    }

    /// Same encoder and quantizer as `self`, narrower decoder.
    pub fn student_of(&self, decoder_channels: usize) -> Self {
        Self {
            decoder_channels,
            ..self.clone()
        }
    }
}

/// Multi-scale waveform discriminator geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// K_d discriminators; discriminator k sees the input pooled by 2^k.
    pub count: usize,
    /// L strided conv + leaky-relu layers per discriminator.
    pub layers: usize,
    pub channels: usize,
    pub max_channels: usize,
    pub kernel: usize,
    pub zero_init_output: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            count: 3,
            layers: 4,
            channels: 8,
            max_channels: 32,
            kernel: 5,
            zero_init_output: false,
        }
    }
}
