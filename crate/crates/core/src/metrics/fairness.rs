use serde::{Deserialize, Serialize};

use super::classifier::Classify;
use super::frechet::{fit_gauss_stats, frechet_sq, GaussStats};
use crate::error::{Error, Result};
use crate::gan::GanState;
use crate::numerics::{Matrix, Rng};

/// `|p̄ - q|₂` for a class-frequency vector `q` against the uniform `p̄`.
pub fn fd_from_frequencies(frequencies: &[f64]) -> f64 {
    let uniform = 1.0 / frequencies.len() as f64;
    frequencies
        .iter()
        .map(|q| (uniform - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Fairness discrepancy of a list of predicted labels: the distance between
/// the uniform vector and the mean one-hot vector.
pub fn fairness_discrepancy(labels: &[usize], num_classes: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid(
            "fairness discrepancy needs at least one label",
        ));
    }
    if num_classes < 2 {
        return Err(Error::invalid(
            "fairness discrepancy needs at least two classes",
        ));
    }
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(Error::invalid(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(fd_from_frequencies(&freq))
}

/// Upper bound of the discrepancy for `k` classes, reached when every
/// sample falls in one class.
pub fn max_fd(k: usize) -> f64 {
    ((k as f64 - 1.0) / k as f64).sqrt()
}

/// Classifies generated samples and returns their fairness discrepancy.
pub fn fd_of_samples(samples: &Matrix, classifier: &dyn Classify) -> Result<f64> {
    classifier.ensure_usable()?;
    fairness_discrepancy(
        &classifier.classify_batch(samples),
        classifier.num_classes(),
    )
}

/// Draws `n` latents, generates, classifies and measures the discrepancy.
pub fn compute_fd(
    state: &GanState,
    classifier: &dyn Classify,
    n: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("need at least one generated sample"));
    }
    fd_of_samples(&state.sample(n, rng)?, classifier)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epoch: usize,
    pub fd: f64,
    pub frechet_sq: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// Scores a model snapshot.
pub trait Evaluate: Sync {
    fn evaluate(&self, state: &GanState, epoch: usize) -> Result<MetricsReport>;
}

/// Fairness and quality against a fixed classifier and balanced reference.
///
/// Every call draws the same latent batch (seeded by `seed`), so successive
/// snapshots and competing methods are compared on common noise.
pub struct Evaluator<'a> {
    pub classifier: &'a dyn Classify,
    pub reference: GaussStats,
    pub n_samples: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl Evaluate for Evaluator<'_> {
    fn evaluate(&self, state: &GanState, epoch: usize) -> Result<MetricsReport> {
        if self.n_samples < 2 {
            return Err(Error::invalid("evaluation needs at least two samples"));
        }
        let samples = state.sample(self.n_samples, &mut Rng::new(self.seed))?;
        let fd = fd_of_samples(&samples, self.classifier)?;
        let frechet = frechet_sq(&fit_gauss_stats(&samples)?, &self.reference)?;
        Ok(MetricsReport {
            epoch,
            fd,
            frechet_sq: frechet,
            n_samples: self.n_samples,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
        })
    }
}
