//! Dense linear algebra, seeded sampling and the fully connected networks
//! used for both generator and discriminator.

mod matrix;
mod mlp;
mod rng;

pub use matrix::Matrix;
pub use mlp::{
    sigmoid, softplus, Activation, Backward, DenseLayer, ForwardPass, MlpGrads, MlpParams,
};
pub use rng::{mix_seed, Rng};
