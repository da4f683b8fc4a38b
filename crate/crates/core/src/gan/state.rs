use serde::{Deserialize, Serialize};

use super::optim::AdamState;
use crate::error::{Error, Result};
use crate::numerics::{Activation, Matrix, MlpParams, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Pretrained,
    #[serde(rename = "fairtl")]
    FairTl,
    #[serde(rename = "fairtlpp")]
    FairTlPp,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrained => "pretrained",
            Stage::FairTl => "fairtl",
            Stage::FairTlPp => "fairtlpp",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Layer widths of the generator and discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanArch {
    pub latent_dim: usize,
    pub data_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub leaky_slope: f64,
}

impl GanArch {
    /// Latent 8, two hidden layers of 32 on each side.
    pub fn desk_scale(data_dim: usize) -> Self {
        GanArch {
            latent_dim: 8,
            data_dim,
            generator_hidden: vec![32, 32],
            discriminator_hidden: vec![32, 32],
            leaky_slope: 0.2,
        }
    }

    pub fn generator_dims(&self) -> Vec<usize> {
        let mut d = vec![self.latent_dim];
        d.extend(&self.generator_hidden);
        d.push(self.data_dim);
        d
    }

    pub fn discriminator_dims(&self) -> Vec<usize> {
        let mut d = vec![self.data_dim];
        d.extend(&self.discriminator_hidden);
        d.push(1);
        d
    }

    /// Fresh generator and discriminator: leaky-ReLU hidden layers, identity
    /// generator output, sigmoid discriminator output.
    pub fn init(&self, rng: &mut Rng) -> Result<GanState> {
        if self.generator_hidden.is_empty() || self.discriminator_hidden.is_empty() {
            return Err(Error::invalid(
                "both networks need at least one hidden layer",
            ));
        }
        let hidden = Activation::LeakyRelu(self.leaky_slope);
        let g_dims = self.generator_dims();
        let mut g_acts = vec![hidden; g_dims.len() - 2];
        g_acts.push(Activation::Identity);
        let d_dims = self.discriminator_dims();
        let mut d_acts = vec![hidden; d_dims.len() - 2];
        d_acts.push(Activation::Sigmoid);
        let generator = MlpParams::new(&g_dims, &g_acts, rng)?;
        let discriminator = MlpParams::new(&d_dims, &d_acts, rng)?;
        GanState::new(generator, discriminator)
    }
}

/// Per-network optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub generator: AdamState,
    pub discriminator: AdamState,
}

impl OptimizerState {
    pub fn fresh(generator: &MlpParams, discriminator: &MlpParams) -> Self {
        OptimizerState {
            generator: AdamState::new(generator),
            discriminator: AdamState::new(discriminator),
        }
    }
}

/// Generator, discriminator and, for `fairTL++`, the frozen copy of the
/// source discriminator.
///
/// The frozen copy exists iff the stage is [`Stage::FairTlPp`] and there is
/// no mutable access to it.
#[derive(Debug, Clone, PartialEq)]
pub struct GanState {
    generator: MlpParams,
    discriminator: MlpParams,
    frozen_source: Option<MlpParams>,
    stage: Stage,
    pub optimizer: OptimizerState,
}

impl GanState {
    pub fn new(generator: MlpParams, discriminator: MlpParams) -> Result<Self> {
        Self::check_pair(&generator, &discriminator)?;
        let optimizer = OptimizerState::fresh(&generator, &discriminator);
        Ok(GanState {
            generator,
            discriminator,
            frozen_source: None,
            stage: Stage::Pretrained,
            optimizer,
        })
    }

    /// Reassembles a state from its parts, enforcing the stage invariant.
    pub fn from_parts(
        generator: MlpParams,
        discriminator: MlpParams,
        frozen_source: Option<MlpParams>,
        stage: Stage,
        optimizer: OptimizerState,
    ) -> Result<Self> {
        Self::check_pair(&generator, &discriminator)?;
        match (&frozen_source, stage) {
            (Some(src), Stage::FairTlPp) => {
                if !src.same_shape(&discriminator) {
                    return Err(Error::shape("frozen source discriminator differs in shape"));
                }
            }
            (None, Stage::FairTlPp) => {
                return Err(Error::MissingSourceDiscriminator { stage: "fairtlpp" })
            }
            (Some(_), s) => {
                return Err(Error::Stage(format!(
                    "stage {s} cannot carry a frozen source discriminator"
                )))
            }
            (None, _) => {}
        }
        if !optimizer.generator.matches(&generator)
            || !optimizer.discriminator.matches(&discriminator)
        {
            return Err(Error::shape("optimizer state does not match the networks"));
        }
        Ok(GanState {
            generator,
            discriminator,
            frozen_source,
            stage,
            optimizer,
        })
    }

    fn check_pair(generator: &MlpParams, discriminator: &MlpParams) -> Result<()> {
        if generator.output_dim() != discriminator.input_dim() {
            return Err(Error::shape(format!(
                "generator emits {} features, discriminator reads {}",
                generator.output_dim(),
                discriminator.input_dim()
            )));
        }
        if discriminator.output_dim() != 1 {
            return Err(Error::shape("discriminator must have a single output"));
        }
        Ok(())
    }

    pub fn generator(&self) -> &MlpParams {
        &self.generator
    }

    pub fn discriminator(&self) -> &MlpParams {
        &self.discriminator
    }

    pub fn generator_mut(&mut self) -> &mut MlpParams {
        &mut self.generator
    }

    pub fn discriminator_mut(&mut self) -> &mut MlpParams {
        &mut self.discriminator
    }

    pub fn frozen_source(&self) -> Option<&MlpParams> {
        self.frozen_source.as_ref()
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.input_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.generator.output_dim()
    }

    pub(crate) fn generator_and_moments(&mut self) -> (&mut MlpParams, &mut AdamState) {
        (&mut self.generator, &mut self.optimizer.generator)
    }

    pub(crate) fn discriminator_and_moments(&mut self) -> (&mut MlpParams, &mut AdamState) {
        (&mut self.discriminator, &mut self.optimizer.discriminator)
    }

    pub fn reset_optimizer(&mut self) {
        self.optimizer = OptimizerState::fresh(&self.generator, &self.discriminator);
    }

    /// Copy of this state entering `fairTL`: same networks, no frozen copy.
    pub fn to_fairtl(&self) -> Result<GanState> {
        self.check_source()?;
        Ok(GanState {
            frozen_source: None,
            stage: Stage::FairTl,
            ..self.clone()
        })
    }

    /// Copy of this state entering `fairTL++`, capturing the current
    /// discriminator as the frozen source.
    pub fn to_fairtlpp(&self) -> Result<GanState> {
        self.check_source()?;
        Ok(GanState {
            frozen_source: Some(self.discriminator.clone()),
            stage: Stage::FairTlPp,
            ..self.clone()
        })
    }

    fn check_source(&self) -> Result<()> {
        if self.stage != Stage::Pretrained {
            return Err(Error::Stage(format!(
                "adaptation starts from a pretrained state, got {}",
                self.stage
            )));
        }
        Ok(())
    }

    /// Samples `G(z)` for a given latent batch.
    pub fn generate(&self, noise: &Matrix) -> Result<Matrix> {
        self.generator.predict(noise)
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Matrix> {
        let z = rng.gauss_sample(n, self.latent_dim())?;
        self.generate(&z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> GanState {
        GanArch::desk_scale(2).init(&mut Rng::new(1)).unwrap()
    }

    #[test]
    fn desk_scale_shapes() {
        let s = state();
        assert_eq!(s.generator().layer_dims(), vec![8, 32, 32, 2]);
        assert_eq!(s.discriminator().layer_dims(), vec![2, 32, 32, 1]);
        assert_eq!(s.stage(), Stage::Pretrained);
        assert!(s.frozen_source().is_none());
    }

    #[test]
    fn stage_transitions() {
        let s = state();
        let pp = s.to_fairtlpp().unwrap();
        assert_eq!(pp.frozen_source(), Some(s.discriminator()));
        assert!(s.to_fairtl().unwrap().frozen_source().is_none());
        assert!(pp.to_fairtl().is_err());
        assert!(pp.to_fairtlpp().is_err());
    }

    #[test]
    fn from_parts_enforces_frozen_copy_invariant() {
        let s = state();
        let opt = s.optimizer.clone();
        let g = s.generator().clone();
        let d = s.discriminator().clone();
        assert!(
            GanState::from_parts(g.clone(), d.clone(), None, Stage::FairTlPp, opt.clone()).is_err()
        );
        assert!(GanState::from_parts(
            g.clone(),
            d.clone(),
            Some(d.clone()),
            Stage::FairTl,
            opt.clone()
        )
        .is_err());
        assert!(GanState::from_parts(g, d.clone(), Some(d), Stage::FairTlPp, opt).is_ok());
    }
}
