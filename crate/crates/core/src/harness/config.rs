//! Run configuration: one TOML file per run. Missing keys take their
//! defaults, and the fully materialised configuration is what gets hashed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{AttributeSpec, FamilyKind, SyntheticFamily};
use crate::error::{Error, Result};
use crate::gan::{FreezeMask, GanArch, GeneratorLossForm, LossConfig, DEFAULT_LAMBDA};
use crate::pipeline::StageConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every cell seed is derived from it.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub grid: GridConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub family: FamilyKind,
    /// Radius of the circle carrying the mixture means.
    pub mixture_radius: f64,
    pub attributes: AttributeSpec,
    /// Samples per joint label in the generated base pool.
    pub base_per_class: usize,
    pub size_bias: usize,
    /// Bias vector and perc used by single-run commands.
    pub bias: Vec<f64>,
    pub perc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub leaky_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub adapt_epochs: usize,
    /// Adaptation runs at least this many optimizer steps; small reference
    /// sets get proportionally more epochs.
    pub adapt_min_steps: usize,
    pub lambda: f64,
    /// Linear-probing length as a fraction of the adaptation epochs.
    pub lp_fraction: f64,
    /// Number of input-nearest discriminator layers frozen while probing.
    pub lp_layers: usize,
    pub generator_loss_form: GeneratorLossForm,
    pub batch_size: usize,
    pub learning_rate_g: f64,
    pub learning_rate_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub reuse_optimizer_state: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierChoice {
    /// Bayes oracle where the family allows it, a trained MLP otherwise.
    Auto,
    BayesOracle,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub eval_every: usize,
    pub reference_per_class: usize,
    pub classifier: ClassifierChoice,
    /// Seed of the shared evaluation latent batch.
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GridMethod {
    #[serde(rename = "pretrained")]
    Pretrained,
    #[serde(rename = "fairtl")]
    FairTl,
    #[serde(rename = "fairtlpp")]
    FairTlPp,
}

impl GridMethod {
    pub fn name(self) -> &'static str {
        match self {
            GridMethod::Pretrained => "pretrained",
            GridMethod::FairTl => "fairtl",
            GridMethod::FairTlPp => "fairtlpp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pretrained" => Ok(GridMethod::Pretrained),
            "fairtl" => Ok(GridMethod::FairTl),
            "fairtlpp" => Ok(GridMethod::FairTlPp),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub biases: Vec<Vec<f64>>,
    pub percs: Vec<f64>,
    pub methods: Vec<GridMethod>,
    pub seeds: Vec<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            family: FamilyKind::GaussianMixture2d,
            mixture_radius: 2.0,
            attributes: AttributeSpec::binary("a"),
            base_per_class: 6000,
            size_bias: 4000,
            bias: vec![0.9, 0.1],
            perc: 0.025,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        let arch = GanArch::desk_scale(2);
        ModelConfig {
            latent_dim: arch.latent_dim,
            generator_hidden: arch.generator_hidden,
            discriminator_hidden: arch.discriminator_hidden,
            leaky_slope: arch.leaky_slope,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        let loss = LossConfig::default();
        TrainConfig {
            pretrain_epochs: 200,
            adapt_epochs: 100,
            adapt_min_steps: 1600,
            lambda: DEFAULT_LAMBDA,
            lp_fraction: 0.2,
            lp_layers: 2,
            generator_loss_form: loss.generator_loss_form,
            batch_size: loss.batch_size,
            learning_rate_g: loss.learning_rate_g,
            learning_rate_d: loss.learning_rate_d,
            beta1: loss.beta1,
            beta2: loss.beta2,
            reuse_optimizer_state: false,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_samples: 4096,
            eval_every: 10,
            reference_per_class: 1000,
            classifier: ClassifierChoice::Auto,
            noise_seed: 77,
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            biases: vec![vec![0.9, 0.1]],
            percs: vec![0.25, 0.1, 0.05, 0.025],
            methods: vec![
                GridMethod::Pretrained,
                GridMethod::FairTl,
                GridMethod::FairTlPp,
            ],
            seeds: (0..5).collect(),
        }
    }
}

/// Epoch counts of one adaptation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptPlan {
    pub epochs: usize,
    pub lp_epochs: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.data.attributes.joint_cardinality();
        self.family()?;
        check_bias(&self.data.bias, k)?;
        check_perc(self.data.perc)?;
        if self.data.size_bias == 0 || self.data.base_per_class == 0 {
            return Err(Error::Config("dataset sizes must be positive".into()));
        }
        if self.model.latent_dim == 0
            || self.model.generator_hidden.is_empty()
            || self.model.discriminator_hidden.is_empty()
        {
            return Err(Error::Config(
                "model needs a latent dimension and hidden layers".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.train.lp_fraction) {
            return Err(Error::Config(format!(
                "lp_fraction {} outside [0, 1)",
                self.train.lp_fraction
            )));
        }
        if self.train.lp_layers > self.model.discriminator_hidden.len() + 1 {
            return Err(Error::Config(
                "lp_layers exceeds the discriminator depth".into(),
            ));
        }
        self.loss()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.eval.n_samples < 2 || self.eval.reference_per_class == 0 {
            return Err(Error::Config("evaluation sizes too small".into()));
        }
        let g = &self.grid;
        if g.biases.is_empty() || g.percs.is_empty() || g.methods.is_empty() || g.seeds.is_empty() {
            return Err(Error::Config(
                "every grid dimension needs at least one entry".into(),
            ));
        }
        for b in &g.biases {
            check_bias(b, k)?;
        }
        for &p in &g.percs {
            check_perc(p)?;
        }
        Ok(())
    }

    /// The configuration with every default written out.
    pub fn resolved_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of the resolved configuration, lowercase hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.resolved_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn family(&self) -> Result<SyntheticFamily> {
        let k = self.data.attributes.joint_cardinality();
        match self.data.family {
            FamilyKind::GaussianMixture2d => {
                SyntheticFamily::gaussian_circle(k, self.data.mixture_radius)
            }
            FamilyKind::ProceduralImage8x8 => {
                SyntheticFamily::procedural_image(&self.data.attributes)
            }
        }
    }

    pub fn arch(&self, data_dim: usize) -> GanArch {
        GanArch {
            latent_dim: self.model.latent_dim,
            data_dim,
            generator_hidden: self.model.generator_hidden.clone(),
            discriminator_hidden: self.model.discriminator_hidden.clone(),
            leaky_slope: self.model.leaky_slope,
        }
    }

    pub fn loss(&self) -> LossConfig {
        let t = &self.train;
        LossConfig {
            lambda: t.lambda,
            generator_loss_form: t.generator_loss_form,
            batch_size: t.batch_size,
            learning_rate_g: t.learning_rate_g,
            learning_rate_d: t.learning_rate_d,
            beta1: t.beta1,
            beta2: t.beta2,
        }
    }

    pub fn pretrain_stage(&self, seed: u64) -> StageConfig {
        let mut s = StageConfig::new(self.train.pretrain_epochs, seed);
        s.loss = self.loss();
        s.eval_every = self.eval.eval_every;
        s
    }

    pub fn adapt_plan(&self, reference_len: usize) -> AdaptPlan {
        let batches = reference_len.div_ceil(self.train.batch_size).max(1);
        let epochs = self
            .train
            .adapt_epochs
            .max(self.train.adapt_min_steps.div_ceil(batches));
        AdaptPlan {
            epochs,
            lp_epochs: (epochs as f64 * self.train.lp_fraction).floor() as usize,
        }
    }

    /// Stage configuration for fairTL on a reference set of the given size.
    pub fn fairtl_stage(&self, reference_len: usize, seed: u64) -> StageConfig {
        let mut s = StageConfig::new(self.adapt_plan(reference_len).epochs, seed);
        s.loss = self.loss();
        s.eval_every = self.eval.eval_every;
        s.reuse_optimizer_state = self.train.reuse_optimizer_state;
        s
    }

    /// Stage configuration for fairTL++: fairTL plus the lower-layer freeze.
    pub fn fairtlpp_stage(&self, reference_len: usize, seed: u64) -> Result<StageConfig> {
        let plan = self.adapt_plan(reference_len);
        let mut s = self.fairtl_stage(reference_len, seed);
        if plan.lp_epochs > 0 {
            let layers = self.model.discriminator_hidden.len() + 1;
            s.freeze = Some(FreezeMask::lower_layers(
                layers,
                self.train.lp_layers,
                plan.lp_epochs,
            )?);
        }
        Ok(s)
    }
}

fn check_bias(bias: &[f64], k: usize) -> Result<()> {
    if bias.len() != k {
        return Err(Error::Config(format!(
            "bias vector has {} entries for {k} joint labels",
            bias.len()
        )));
    }
    let sum: f64 = bias.iter().sum();
    if bias.iter().any(|b| b.is_nan() || *b < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "bias vector {bias:?} is not a distribution"
        )));
    }
    Ok(())
}

fn check_perc(perc: f64) -> Result<()> {
    if !(perc > 0.0 && perc <= 1.0) {
        return Err(Error::Config(format!("perc {perc} outside (0, 1]")));
    }
    Ok(())
}

/// Short text id of a bias vector, e.g. `0.9/0.1`.
pub fn bias_id(bias: &[f64]) -> String {
    bias.iter()
        .map(|b| b.to_string())
        .collect::<Vec<_>>()
        .join("/")
}
