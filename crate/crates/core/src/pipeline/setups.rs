use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::train::{run_stage, RunRecord, StageConfig, TrainHooks, INIT_STREAM};
use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::gan::{layer_weight_change, GanArch, GanState, Stage};
use crate::harness::checkpoint::Checkpoint;
use crate::numerics::{mix_seed, Matrix, Rng};

/// Trains a fresh GAN on the pretraining set (`D_bias ∪ D_ref` in the
/// usual setup).
pub fn pretrain(
    data: &FeatureSet,
    arch: &GanArch,
    config: &StageConfig,
    hooks: TrainHooks<'_>,
) -> Result<RunRecord> {
    if data.is_empty() {
        return Err(Error::invalid("pretraining data is empty"));
    }
    if config.freeze.is_some() {
        return Err(Error::invalid("pretraining does not take a freeze mask"));
    }
    let state = arch.init(&mut Rng::new(mix_seed(config.seed, INIT_STREAM)))?;
    run_stage(state, data, config, hooks)
}

/// Fine-tunes every parameter of a pretrained source on the reference set.
/// The source is not modified.
pub fn adapt_fairtl(
    source: &GanState,
    reference: &FeatureSet,
    config: &StageConfig,
    hooks: TrainHooks<'_>,
) -> Result<RunRecord> {
    if reference.is_empty() {
        return Err(Error::invalid("reference set is empty"));
    }
    if config.freeze.is_some() {
        return Err(Error::invalid("fairTL adapts without a freeze mask"));
    }
    let mut state = source.to_fairtl()?;
    if !config.reuse_optimizer_state {
        state.reset_optimizer();
    }
    run_stage(state, reference, config, hooks)
}

/// Adapts with a frozen copy of the source discriminator in the generator
/// objective and, when `config.freeze` is set, with the discriminator's
/// lower layers held fixed for the first `T` epochs.
pub fn adapt_fairtlpp(
    source: &GanState,
    reference: &FeatureSet,
    config: &StageConfig,
    hooks: TrainHooks<'_>,
) -> Result<RunRecord> {
    if reference.is_empty() {
        return Err(Error::invalid("reference set is empty"));
    }
    if let Some(mask) = &config.freeze {
        let t = mask.active_until_epoch();
        if t > 0 && t >= config.epochs {
            return Err(Error::invalid(format!(
                "linear probing for {t} epochs leaves no fine-tuning in a {}-epoch run",
                config.epochs
            )));
        }
    }
    let mut state = source.to_fairtlpp()?;
    if !config.reuse_optimizer_state {
        state.reset_optimizer();
    }
    run_stage(state, reference, config, hooks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[serde(rename = "fairtl")]
    FairTl,
    #[serde(rename = "fairtlpp")]
    FairTlPp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FairTl => "fairtl",
            Method::FairTlPp => "fairtlpp",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fairtl" => Ok(Method::FairTl),
            "fairtlpp" => Ok(Method::FairTlPp),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Debiases a saved model when its pretraining data is unavailable: the
/// checkpoint's networks become the source and only the reference set is
/// used.
pub fn debias_pretrained(
    checkpoint: &Checkpoint,
    reference: &FeatureSet,
    method: Method,
    config: &StageConfig,
    hooks: TrainHooks<'_>,
) -> Result<RunRecord> {
    let discriminator = checkpoint
        .discriminator
        .clone()
        .ok_or(Error::MissingDiscriminator)?;
    let source = GanState::new(checkpoint.generator.clone(), discriminator)?;
    match method {
        Method::FairTl => adapt_fairtl(&source, reference, config, hooks),
        Method::FairTlPp => adapt_fairtlpp(&source, reference, config, hooks),
    }
}

/// Samples of two models on one shared latent batch, aligned by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    pub noise: Matrix,
    pub before: Matrix,
    pub after: Matrix,
    /// Hash of the latent batch each model was fed.
    pub noise_hash_before: u64,
    pub noise_hash_after: u64,
}

fn hash_matrix(m: &Matrix) -> u64 {
    let mut h = DefaultHasher::new();
    m.shape().hash(&mut h);
    for b in m.le_bytes() {
        b.hash(&mut h);
    }
    h.finish()
}

pub fn fixed_noise_gallery(
    before: &GanState,
    after: &GanState,
    n: usize,
    rng: &mut Rng,
) -> Result<Gallery> {
    if before.latent_dim() != after.latent_dim() {
        return Err(Error::shape(format!(
            "latent dims differ: {} vs {}",
            before.latent_dim(),
            after.latent_dim()
        )));
    }
    if n == 0 {
        return Ok(Gallery {
            noise: Matrix::zeros(0, before.latent_dim()),
            before: Matrix::zeros(0, before.data_dim()),
            after: Matrix::zeros(0, after.data_dim()),
            noise_hash_before: 0,
            noise_hash_after: 0,
        });
    }
    let noise = rng.gauss_sample(n, before.latent_dim())?;
    let feed_before = noise.clone();
    let feed_after = noise.clone();
    Ok(Gallery {
        before: before.generate(&feed_before)?,
        after: after.generate(&feed_after)?,
        noise_hash_before: hash_matrix(&feed_before),
        noise_hash_after: hash_matrix(&feed_after),
        noise,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Network {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerChangeRow {
    pub network: Network,
    /// Layer index; 0 is nearest the network input.
    pub layer: usize,
    pub mean_abs_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerChangeTable {
    pub rows: Vec<LayerChangeRow>,
}

impl LayerChangeTable {
    pub fn discriminator_changes(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.network == Network::Discriminator)
            .map(|r| r.mean_abs_change)
            .collect()
    }

    /// Whether the two input-nearest discriminator layers changed less than
    /// every other discriminator layer. Reported, not enforced.
    pub fn lower_discriminator_layers_smallest(&self) -> bool {
        let d = self.discriminator_changes();
        if d.len() < 3 {
            return false;
        }
        let lower = d[0].max(d[1]);
        d[2..].iter().all(|&v| lower < v)
    }
}

pub struct LayerStudyConfig {
    pub pretrain: StageConfig,
    pub adapt: StageConfig,
    /// Minimum `|large reference| / |pretraining set|`.
    pub min_reference_ratio: f64,
}

/// Pretrains, adapts with fairTL on a large balanced reference set and
/// reports how far each layer of both networks moved during adaptation.
pub fn layer_change_study(
    pretrain_data: &FeatureSet,
    large_reference: &FeatureSet,
    arch: &GanArch,
    config: &LayerStudyConfig,
) -> Result<(LayerChangeTable, GanState, GanState)> {
    let needed = config.min_reference_ratio * pretrain_data.len() as f64;
    if (large_reference.len() as f64) < needed {
        return Err(Error::invalid(format!(
            "reference set of {} samples is below the required {needed:.0}",
            large_reference.len()
        )));
    }
    let source = pretrain(pretrain_data, arch, &config.pretrain, TrainHooks::default())?.state;
    let adapted = adapt_fairtl(
        &source,
        large_reference,
        &config.adapt,
        TrainHooks::default(),
    )?
    .state;
    debug_assert_eq!(adapted.stage(), Stage::FairTl);
    let mut rows = Vec::new();
    for (network, before, after) in [
        (Network::Generator, source.generator(), adapted.generator()),
        (
            Network::Discriminator,
            source.discriminator(),
            adapted.discriminator(),
        ),
    ] {
        for (layer, change) in layer_weight_change(before, after)?.into_iter().enumerate() {
            rows.push(LayerChangeRow {
                network,
                layer,
                mean_abs_change: change,
            });
        }
    }
    Ok((LayerChangeTable { rows }, source, adapted))
}
