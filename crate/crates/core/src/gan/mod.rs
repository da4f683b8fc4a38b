//! Adversarial objectives, optimizer steps and the discriminator freeze
//! schedule.

mod freeze;
mod loss;
mod optim;
mod state;

pub use freeze::{layer_weight_change, FreezeMask};
pub use loss::{
    apply_update, discriminator_loss, generator_loss, DiscriminatorLoss, GeneratorLoss,
    GeneratorLossForm, LossConfig, Saturation, StepGradients, DEFAULT_LAMBDA, OUTPUT_EPSILON,
};
pub use optim::{AdamConfig, AdamState, ADAM_EPSILON};
pub use state::{GanArch, GanState, OptimizerState, Stage};
