//! Knowledge distillation for text-conditioned multi-codebook token language
//! models and neural audio codec decoders, on a small reverse-mode autodiff
//! engine.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the precision used by the training pipeline.

// `!(x >= 0.0)` is how validation rejects NaN along with negatives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod codec_loss;
pub mod data;
pub mod error;
pub mod gradcheck_suite;
pub mod kd_loss;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod sampling;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{grad_check, GradCheckReport, Gradients, Tensor};

/// Storage precision of the training pipeline.
pub type Real = f32;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;


pub type LanguageModel32 = models::LanguageModel<f32>;
pub type Codec32 = models::Codec<f32>;
pub type MultiScaleDiscriminator32 = models::MultiScaleDiscriminator<f32>;
