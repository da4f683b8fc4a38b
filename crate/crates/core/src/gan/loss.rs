use serde::{Deserialize, Serialize};

use super::optim::AdamConfig;
use super::{FreezeMask, GanState, Stage};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softplus, Matrix, MlpGrads, MlpParams};

/// Discriminator outputs closer than this to 0 or 1 are counted as
/// saturated in [`Saturation`].
pub const OUTPUT_EPSILON: f64 = 1e-7;

pub const DEFAULT_LAMBDA: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorLossForm {
    /// Minimise `log(1 - D(G(z)))`, the objective as written.
    Saturating,
    /// Minimise `-log D(G(z))`.
    NonSaturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the adapted discriminator in the generator objective; the
    /// frozen source discriminator gets `1 - lambda`.
    pub lambda: f64,
    pub generator_loss_form: GeneratorLossForm,
    pub batch_size: usize,
    pub learning_rate_g: f64,
    pub learning_rate_d: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: DEFAULT_LAMBDA,
            generator_loss_form: GeneratorLossForm::NonSaturating,
            batch_size: 64,
            learning_rate_g: 2e-4,
            learning_rate_d: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate_g > 0.0 && self.learning_rate_d > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }

    pub(crate) fn adam_g(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate_g,
            beta1: self.beta1,
            beta2: self.beta2,
        }
    }

    pub(crate) fn adam_d(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate_d,
            beta1: self.beta1,
            beta2: self.beta2,
        }
    }
}

/// Count of discriminator outputs within [`OUTPUT_EPSILON`] of 0 or 1.
/// Losses are computed from logits, so saturation does not produce
/// infinities, but it does signal vanishing gradients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Saturation {
    pub saturated: usize,
    pub total: usize,
}

impl Saturation {
    fn observe(&mut self, logits: &Matrix) {
        for &a in logits.as_slice() {
            let p = sigmoid(a);
            if !(OUTPUT_EPSILON..=1.0 - OUTPUT_EPSILON).contains(&p) {
                self.saturated += 1;
            }
            self.total += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscriminatorLoss {
    /// `E[log D(x)] + E[log(1 - D(G(z)))]`, the quantity the discriminator
    /// maximises.
    pub value: f64,
    /// Gradient of `value` with respect to the adapted discriminator.
    pub grads: MlpGrads,
    pub saturation: Saturation,
}

#[derive(Debug, Clone)]
pub struct GeneratorLoss {
    /// The quantity the generator minimises.
    pub value: f64,
    /// Gradient of `value` with respect to the generator.
    pub grads: MlpGrads,
    pub saturation: Saturation,
}

fn check_batch(name: &str, batch: &Matrix, dim: usize) -> Result<()> {
    if batch.rows() == 0 {
        return Err(Error::invalid(format!("{name} batch is empty")));
    }
    if batch.cols() != dim {
        return Err(Error::shape(format!(
            "{name} batch has {} features, discriminator reads {dim}",
            batch.cols()
        )));
    }
    Ok(())
}

/// Discriminator objective on a real and a generated batch. Only the
/// adapted discriminator is differentiated; layers flagged in `frozen` get
/// zero gradients.
pub fn discriminator_loss(
    state: &GanState,
    real: &Matrix,
    fake: &Matrix,
    frozen: &[bool],
) -> Result<DiscriminatorLoss> {
    let d = state.discriminator();
    check_batch("real", real, d.input_dim())?;
    check_batch("fake", fake, d.input_dim())?;
    let mut saturation = Saturation::default();

    let real_pass = d.forward(real)?;
    let fake_pass = d.forward(fake)?;
    saturation.observe(real_pass.logits());
    saturation.observe(fake_pass.logits());

    let nr = real.rows() as f64;
    let nf = fake.rows() as f64;
    // log D(x) = -softplus(-a), log(1 - D(x)) = -softplus(a)
    let real_term = -real_pass
        .logits()
        .as_slice()
        .iter()
        .map(|&a| softplus(-a))
        .sum::<f64>()
        / nr;
    let fake_term = -fake_pass
        .logits()
        .as_slice()
        .iter()
        .map(|&a| softplus(a))
        .sum::<f64>()
        / nf;

    let real_grad = real_pass.logits().map(|a| (1.0 - sigmoid(a)) / nr);
    let fake_grad = fake_pass.logits().map(|a| -sigmoid(a) / nf);
    let mut grads = d.backward_from_logits(&real_pass, &real_grad)?.grads;
    grads.add_scaled(&d.backward_from_logits(&fake_pass, &fake_grad)?.grads, 1.0);
    grads.zero_layers(frozen);

    Ok(DiscriminatorLoss {
        value: real_term + fake_term,
        grads,
        saturation,
    })
}

/// Generator objective for a latent batch.
///
/// In stage `fairTL++` the objective mixes the adapted discriminator with
/// weight `lambda` and the frozen source discriminator with `1 - lambda`;
/// in other stages only the adapted discriminator scores the samples.
pub fn generator_loss(
    state: &GanState,
    noise: &Matrix,
    config: &LossConfig,
) -> Result<GeneratorLoss> {
    config.validate()?;
    let g = state.generator();
    if noise.rows() == 0 {
        return Err(Error::invalid("noise batch is empty"));
    }
    let critics: Vec<(&MlpParams, f64)> = match state.stage() {
        Stage::FairTlPp => {
            let source = state
                .frozen_source()
                .ok_or(Error::MissingSourceDiscriminator { stage: "fairtlpp" })?;
            vec![
                (state.discriminator(), config.lambda),
                (source, 1.0 - config.lambda),
            ]
        }
        _ => vec![(state.discriminator(), 1.0)],
    };

    let g_pass = g.forward(noise)?;
    let fake = &g_pass.output;
    let n = fake.rows() as f64;
    let mut value = 0.0;
    let mut fake_grad = Matrix::zeros(fake.rows(), fake.cols());
    let mut saturation = Saturation::default();
    for (critic, weight) in critics {
        let pass = critic.forward(fake)?;
        saturation.observe(pass.logits());
        let logits = pass.logits();
        let (term, logit_grad) = match config.generator_loss_form {
            // log(1 - D) = -softplus(a), d/da = -sigmoid(a)
            GeneratorLossForm::Saturating => (
                -logits.as_slice().iter().map(|&a| softplus(a)).sum::<f64>() / n,
                logits.map(|a| -weight * sigmoid(a) / n),
            ),
            // -log D = softplus(-a), d/da = -(1 - sigmoid(a))
            GeneratorLossForm::NonSaturating => (
                logits.as_slice().iter().map(|&a| softplus(-a)).sum::<f64>() / n,
                logits.map(|a| -weight * (1.0 - sigmoid(a)) / n),
            ),
        };
        value += weight * term;
        let back = critic.backward_from_logits(&pass, &logit_grad)?;
        fake_grad = fake_grad.add(&back.input_grad)?;
    }
    let grads = g.backward(&g_pass, &fake_grad)?.grads;
    Ok(GeneratorLoss {
        value,
        grads,
        saturation,
    })
}

/// Gradients for one optimizer step; either side may be absent.
#[derive(Debug, Clone, Default)]
pub struct StepGradients {
    /// Gradient of the generator objective (descended).
    pub generator: Option<MlpGrads>,
    /// Gradient of the discriminator objective (ascended).
    pub discriminator: Option<MlpGrads>,
}

/// Applies one Adam step. Discriminator layers frozen by `mask` at `epoch`
/// are left bit-for-bit unchanged; the frozen source discriminator is never
/// touched.
pub fn apply_update(
    state: &mut GanState,
    grads: &StepGradients,
    mask: Option<&FreezeMask>,
    epoch: usize,
    config: &LossConfig,
) -> Result<()> {
    if let Some(g) = &grads.generator {
        if !g.matches(state.generator()) {
            return Err(Error::shape(
                "generator gradients do not match the generator",
            ));
        }
    }
    if let Some(d) = &grads.discriminator {
        if !d.matches(state.discriminator()) {
            return Err(Error::shape(
                "discriminator gradients do not match the discriminator",
            ));
        }
    }
    if let Some(m) = mask {
        if m.num_layers() != state.discriminator().num_layers() {
            return Err(Error::shape(format!(
                "freeze mask covers {} layers, discriminator has {}",
                m.num_layers(),
                state.discriminator().num_layers()
            )));
        }
    }

    if let Some(d) = &grads.discriminator {
        let frozen = mask.map(|m| m.frozen_at(epoch)).unwrap_or_default();
        let mut ascent = d.clone();
        ascent.scale(-1.0);
        let cfg = config.adam_d();
        let (net, adam) = state.discriminator_and_moments();
        adam.step(net, &ascent, &frozen, cfg);
    }
    if let Some(g) = &grads.generator {
        let cfg = config.adam_g();
        let (net, adam) = state.generator_and_moments();
        adam.step(net, g, &[], cfg);
    }
    Ok(())
}
