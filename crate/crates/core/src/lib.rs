//! Fair generative-model training via transfer learning.
//!
//! A small GAN is pretrained on a large attribute-biased dataset and then
//! adapted on a small attribute-balanced reference set, either by plain
//! fine-tuning (`fairTL`) or by fine-tuning with a frozen copy of the source
//! discriminator and a temporary freeze of the discriminator's lower layers
//! (`fairTL++`). Fairness Discrepancy and a Fréchet distance track fairness
//! and sample quality.

pub mod data;
pub mod error;
pub mod gan;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
