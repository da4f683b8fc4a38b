use crate::error::{Error, Result};
use crate::numerics::MlpParams;

/// Discriminator layers held fixed during the linear-probing phase.
///
/// Layer 0 is nearest the input. The mask applies while `epoch <
/// active_until_epoch` and is inert afterwards. It never refers to the
/// generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreezeMask {
    layers: Vec<bool>,
    active_until_epoch: usize,
}

impl FreezeMask {
    pub fn new(layers: Vec<bool>, active_until_epoch: usize) -> Self {
        FreezeMask {
            layers,
            active_until_epoch,
        }
    }

    /// Freezes the `count` input-nearest layers of a discriminator with
    /// `num_layers` layers for the first `active_until_epoch` epochs.
    pub fn lower_layers(
        num_layers: usize,
        count: usize,
        active_until_epoch: usize,
    ) -> Result<Self> {
        if count > num_layers {
            return Err(Error::invalid(format!(
                "cannot freeze {count} of {num_layers} layers"
            )));
        }
        Ok(FreezeMask {
            layers: (0..num_layers).map(|l| l < count).collect(),
            active_until_epoch,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn active_until_epoch(&self) -> usize {
        self.active_until_epoch
    }

    pub fn layers(&self) -> &[bool] {
        &self.layers
    }

    pub fn is_active(&self, epoch: usize) -> bool {
        epoch < self.active_until_epoch
    }

    /// Per-layer frozen flags in force at `epoch`.
    pub fn frozen_at(&self, epoch: usize) -> Vec<bool> {
        if self.is_active(epoch) {
            self.layers.clone()
        } else {
            vec![false; self.layers.len()]
        }
    }
}

/// Mean absolute change of each layer's weights and biases between two
/// snapshots of the same network.
pub fn layer_weight_change(before: &MlpParams, after: &MlpParams) -> Result<Vec<f64>> {
    if !before.same_shape(after) {
        return Err(Error::shape(format!(
            "cannot compare networks with dims {:?} and {:?}",
            before.layer_dims(),
            after.layer_dims()
        )));
    }
    Ok(before
        .layers()
        .iter()
        .zip(after.layers())
        .map(|(a, b)| {
            let weights = a.weights.as_slice().iter().zip(b.weights.as_slice());
            let biases = a.biases.iter().zip(&b.biases);
            let total: f64 = weights.chain(biases).map(|(x, y)| (y - x).abs()).sum();
            total / a.param_count() as f64
        })
        .collect())
}
