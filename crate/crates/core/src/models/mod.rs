//! Language model, conditioner, codec and discriminators.

pub mod codec;
pub mod config;
pub mod discriminator;
pub mod lm;

pub use codec::{Codec, Decoder, Encoder, Quantized, ResidualVq, StageTrace, Waveform};
pub use config::{CodecConfig, ConditionerConfig, DiscriminatorConfig, LmConfig};
pub use discriminator::{DiscriminatorOutput, MultiScaleDiscriminator, WaveDiscriminator};
pub use lm::{CondEmbeddings, Conditioner, HiddenTrace, LanguageModel, LogitsBatch, TokenBatch};
