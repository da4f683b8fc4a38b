use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{
    AttributeSpec, DatasetPair, FamilyKind, GaussianComponent, LabeledSample, SyntheticFamily,
};
use crate::error::{Error, Result};
use crate::gan::{AdamConfig, AdamState};
use crate::numerics::{Activation, Matrix, MlpParams, Rng};

/// Anything that assigns a joint attribute label to a feature vector.
pub trait Classify: Sync {
    fn num_classes(&self) -> usize;

    fn classify(&self, features: &[f64]) -> usize;

    fn classify_batch(&self, samples: &Matrix) -> Vec<usize> {
        samples.row_iter().map(|r| self.classify(r)).collect()
    }

    /// Whether the classifier may be used to measure fairness.
    fn ensure_usable(&self) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierKind {
    /// Maximum-likelihood label under the generating mixture with equal
    /// priors. Only available for the Gaussian mixture family.
    BayesOracle(Vec<GaussianComponent>),
    LearnedMlp {
        net: MlpParams,
        accuracy: f64,
        min_accuracy: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttrClassifier {
    spec: AttributeSpec,
    kind: ClassifierKind,
}

impl AttrClassifier {
    pub fn bayes_oracle(family: &SyntheticFamily, spec: &AttributeSpec) -> Result<Self> {
        family.check_spec(spec)?;
        match family {
            SyntheticFamily::GaussianMixture(components) => Ok(AttrClassifier {
                spec: spec.clone(),
                kind: ClassifierKind::BayesOracle(components.clone()),
            }),
            SyntheticFamily::ProceduralImage(_) => Err(Error::invalid(
                "the Bayes oracle exists only for the Gaussian mixture family",
            )),
        }
    }

    pub fn spec(&self) -> &AttributeSpec {
        &self.spec
    }

    pub fn kind(&self) -> &ClassifierKind {
        &self.kind
    }

    /// Held-out accuracy of a learned classifier; `None` for the oracle.
    pub fn accuracy(&self) -> Option<f64> {
        match &self.kind {
            ClassifierKind::LearnedMlp { accuracy, .. } => Some(*accuracy),
            ClassifierKind::BayesOracle(_) => None,
        }
    }
}

fn gaussian_log_density(c: &GaussianComponent, x: &[f64]) -> f64 {
    let l = c.cholesky();
    let d = x.len();
    let mut y = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        y[i] = (x[i] - c.mean()[i] - s) / l[(i, i)];
    }
    let quad: f64 = y.iter().map(|v| v * v).sum();
    let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    -0.5 * (quad + log_det)
}

fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

impl Classify for AttrClassifier {
    fn num_classes(&self) -> usize {
        self.spec.joint_cardinality()
    }

    fn classify(&self, features: &[f64]) -> usize {
        match &self.kind {
            ClassifierKind::BayesOracle(components) => {
                argmax(components.iter().map(|c| gaussian_log_density(c, features)))
            }
            ClassifierKind::LearnedMlp { net, .. } => {
                let x = Matrix::from_vec(1, features.len(), features.to_vec()).expect("single row");
                let out = net
                    .predict(&x)
                    .expect("feature dimension checked at training");
                argmax(out.row(0).iter().copied())
            }
        }
    }

    fn classify_batch(&self, samples: &Matrix) -> Vec<usize> {
        match &self.kind {
            ClassifierKind::LearnedMlp { net, .. } => {
                let out = net
                    .predict(samples)
                    .expect("feature dimension checked at training");
                out.row_iter().map(|r| argmax(r.iter().copied())).collect()
            }
            ClassifierKind::BayesOracle(_) => {
                samples.row_iter().map(|r| self.classify(r)).collect()
            }
        }
    }

    fn ensure_usable(&self) -> Result<()> {
        match &self.kind {
            ClassifierKind::LearnedMlp {
                accuracy,
                min_accuracy,
                ..
            } if accuracy < min_accuracy => Err(Error::ClassifierAccuracy {
                accuracy: *accuracy,
                threshold: *min_accuracy,
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of the split held back to measure accuracy.
    pub validation_fraction: f64,
    /// Accuracy below which the classifier refuses to score fairness.
    pub min_accuracy: f64,
}

impl ClassifierConfig {
    pub fn for_family(kind: FamilyKind) -> Self {
        ClassifierConfig {
            hidden: 32,
            epochs: 30,
            batch_size: 64,
            learning_rate: 5e-3,
            validation_fraction: 0.2,
            min_accuracy: match kind {
                FamilyKind::GaussianMixture2d => 0.95,
                FamilyKind::ProceduralImage8x8 => 0.9,
            },
        }
    }
}

/// Trains a small softmax MLP on a labeled split and measures its accuracy
/// on a held-back part of the split.
pub fn train_attr_classifier(
    split: &[LabeledSample],
    spec: &AttributeSpec,
    config: &ClassifierConfig,
    rng: &mut Rng,
) -> Result<AttrClassifier> {
    let k = spec.joint_cardinality();
    if split.len() < 2 {
        return Err(Error::invalid(
            "classifier needs at least two labeled samples",
        ));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) || config.batch_size == 0 {
        return Err(Error::invalid("bad classifier configuration"));
    }
    let dim = split[0].features.len();
    if let Some(s) = split
        .iter()
        .find(|s| s.joint_label >= k || s.features.len() != dim)
    {
        return Err(Error::invalid(format!(
            "sample {} does not fit the attribute spec",
            s.id
        )));
    }

    let mut order: Vec<usize> = (0..split.len()).collect();
    rng.shuffle(&mut order);
    let n_val = ((split.len() as f64 * config.validation_fraction).round() as usize)
        .clamp(1, split.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let rows = |idx: &[usize]| -> Result<(Matrix, Vec<usize>)> {
        let feats: Vec<&[f64]> = idx.iter().map(|&i| split[i].features.as_slice()).collect();
        Ok((
            Matrix::from_rows(&feats, dim)?,
            idx.iter().map(|&i| split[i].joint_label).collect(),
        ))
    };
    let (train_x, train_y) = rows(train_idx)?;
    let (val_x, val_y) = rows(val_idx)?;

    let mut net = MlpParams::new(
        &[dim, config.hidden, config.hidden, k],
        &[
            Activation::LeakyRelu(0.2),
            Activation::LeakyRelu(0.2),
            Activation::Identity,
        ],
        rng,
    )?;
    let mut adam = AdamState::new(&net);
    let adam_cfg = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: 0.9,
        beta2: 0.999,
    };
    let mut batch_order: Vec<usize> = (0..train_x.rows()).collect();
    for _ in 0..config.epochs {
        rng.shuffle(&mut batch_order);
        for batch in batch_order.chunks(config.batch_size) {
            let x = train_x.select_rows(batch);
            let pass = net.forward(&x)?;
            // softmax cross-entropy: d/dlogits = softmax - onehot
            let mut grad = Matrix::zeros(batch.len(), k);
            for (r, &i) in batch.iter().enumerate() {
                let logits = pass.output.row(r);
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                for c in 0..k {
                    let target = if c == train_y[i] { 1.0 } else { 0.0 };
                    grad[(r, c)] = (exps[c] / total - target) / batch.len() as f64;
                }
            }
            let grads = net.backward(&pass, &grad)?.grads;
            adam.step(&mut net, &grads, &[], adam_cfg);
        }
    }

    let predicted = net.predict(&val_x)?;
    let correct = predicted
        .row_iter()
        .zip(&val_y)
        .filter(|(r, &y)| argmax(r.iter().copied()) == y)
        .count();
    Ok(AttrClassifier {
        spec: spec.clone(),
        kind: ClassifierKind::LearnedMlp {
            net,
            accuracy: correct as f64 / val_y.len() as f64,
            min_accuracy: config.min_accuracy,
        },
    })
}

/// Trains the evaluation classifier on the pair's holdout, refusing to run
/// if any holdout sample also appears in `D_bias` or `D_ref`.
pub fn train_classifier_for_pair(
    pair: &DatasetPair,
    spec: &AttributeSpec,
    config: &ClassifierConfig,
    rng: &mut Rng,
) -> Result<AttrClassifier> {
    let training: HashSet<u64> = pair
        .d_bias
        .iter()
        .chain(&pair.d_ref)
        .map(|s| s.id)
        .collect();
    if let Some(s) = pair.eval_holdout.iter().find(|s| training.contains(&s.id)) {
        return Err(Error::invalid(format!(
            "holdout sample {} also appears in the GAN training data",
            s.id
        )));
    }
    train_attr_classifier(&pair.eval_holdout, spec, config, rng)
}
