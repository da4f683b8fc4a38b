use serde::{Deserialize, Serialize};

use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::gan::{
    apply_update, discriminator_loss, generator_loss, FreezeMask, GanState, LossConfig,
    StepGradients,
};
use crate::metrics::{Evaluate, MetricsReport};
use crate::numerics::{mix_seed, Rng};

/// Seed stream for network initialisation, kept apart from the training
/// stream so the two never share draws.
pub(crate) const INIT_STREAM: u64 = 0x1;
pub(crate) const TRAIN_STREAM: u64 = 0x2;

#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub epochs: usize,
    pub loss: LossConfig,
    /// Linear-probing freeze; only meaningful for `fairTL++`.
    pub freeze: Option<FreezeMask>,
    pub seed: u64,
    /// Evaluate after every `eval_every` epochs; 0 disables evaluation.
    pub eval_every: usize,
    /// Keep the source's Adam moments instead of starting fresh.
    pub reuse_optimizer_state: bool,
}

impl StageConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        StageConfig {
            epochs,
            loss: LossConfig::default(),
            freeze: None,
            seed,
            eval_every: 10,
            reuse_optimizer_state: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    /// Mean discriminator objective over the epoch's batches.
    pub discriminator: f64,
    /// Mean generator objective over the epoch's batches.
    pub generator: f64,
    /// Discriminator outputs within epsilon of 0 or 1.
    pub saturated_outputs: usize,
}

/// Result of one training stage.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub losses: Vec<EpochLosses>,
    /// Evaluations in strictly increasing epoch order.
    pub evals: Vec<MetricsReport>,
    pub state: GanState,
}

/// Called after every epoch with the number of completed epochs.
pub type EpochCallback<'a> = &'a mut dyn FnMut(usize, &GanState);

/// Optional observers of a training stage.
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub evaluator: Option<&'a dyn Evaluate>,
    pub on_epoch: Option<EpochCallback<'a>>,
}

impl<'a> TrainHooks<'a> {
    pub fn with_evaluator(evaluator: &'a dyn Evaluate) -> Self {
        TrainHooks {
            evaluator: Some(evaluator),
            on_epoch: None,
        }
    }
}

/// Runs `config.epochs` epochs of alternating updates, one discriminator
/// step then one generator step per minibatch.
pub(crate) fn run_stage(
    mut state: GanState,
    data: &FeatureSet,
    config: &StageConfig,
    mut hooks: TrainHooks<'_>,
) -> Result<RunRecord> {
    config.loss.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    if data.dim() != state.data_dim() {
        return Err(Error::shape(format!(
            "data has {} features, generator emits {}",
            data.dim(),
            state.data_dim()
        )));
    }
    if let Some(mask) = &config.freeze {
        if mask.num_layers() != state.discriminator().num_layers() {
            return Err(Error::shape(format!(
                "freeze mask covers {} layers, discriminator has {}",
                mask.num_layers(),
                state.discriminator().num_layers()
            )));
        }
    }

    let mut rng = Rng::new(mix_seed(config.seed, TRAIN_STREAM));
    let latent = state.latent_dim();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut evals = Vec::new();

    if let Some(ev) = hooks.evaluator {
        if config.eval_every > 0 {
            evals.push(ev.evaluate(&state, 0)?);
        }
    }

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let frozen = config
            .freeze
            .as_ref()
            .map(|m| m.frozen_at(epoch))
            .unwrap_or_default();
        let (mut d_sum, mut g_sum, mut saturated, mut batches) = (0.0, 0.0, 0, 0);
        for batch in order.chunks(config.loss.batch_size) {
            let real = data.matrix().select_rows(batch);
            let z = rng.gauss_sample(batch.len(), latent)?;
            let fake = state.generate(&z)?;
            let d = discriminator_loss(&state, &real, &fake, &frozen)?;
            apply_update(
                &mut state,
                &StepGradients {
                    discriminator: Some(d.grads),
                    generator: None,
                },
                config.freeze.as_ref(),
                epoch,
                &config.loss,
            )?;

            let z = rng.gauss_sample(batch.len(), latent)?;
            let g = generator_loss(&state, &z, &config.loss)?;
            apply_update(
                &mut state,
                &StepGradients {
                    generator: Some(g.grads),
                    discriminator: None,
                },
                None,
                epoch,
                &config.loss,
            )?;

            d_sum += d.value;
            g_sum += g.value;
            saturated += d.saturation.saturated + g.saturation.saturated;
            batches += 1;
        }
        if !(d_sum.is_finite() && g_sum.is_finite()) {
            return Err(Error::NonFinite(format!("losses at epoch {epoch}")));
        }
        let done = epoch + 1;
        losses.push(EpochLosses {
            epoch: done,
            discriminator: d_sum / batches as f64,
            generator: g_sum / batches as f64,
            saturated_outputs: saturated,
        });
        if let Some(cb) = hooks.on_epoch.as_deref_mut() {
            cb(done, &state);
        }
        if let Some(ev) = hooks.evaluator {
            if config.eval_every > 0 && (done % config.eval_every == 0 || done == config.epochs) {
                evals.push(ev.evaluate(&state, done)?);
            }
        }
    }
    Ok(RunRecord {
        losses,
        evals,
        state,
    })
}
