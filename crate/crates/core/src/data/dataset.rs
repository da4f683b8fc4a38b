use std::collections::HashSet;

use super::{AttributeSpec, SyntheticFamily};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// A feature vector with its joint sensitive-attribute label.
///
/// `id` identifies the sample within the base pool it was drawn from, so that
/// splits can be checked for disjointness.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: u64,
    pub features: Vec<f64>,
    pub joint_label: usize,
}

/// Feature-only view of a dataset. Training code accepts nothing else, so
/// the attribute labels cannot leak into adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    features: Matrix,
}

impl FeatureSet {
    pub fn new(features: Matrix) -> Self {
        FeatureSet { features }
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.features
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn union(&self, other: &FeatureSet) -> Result<FeatureSet> {
        Ok(FeatureSet {
            features: self.features.vstack(&other.features)?,
        })
    }
}

pub trait StripLabels {
    fn strip_labels(&self) -> FeatureSet;
}

impl StripLabels for [LabeledSample] {
    fn strip_labels(&self) -> FeatureSet {
        let cols = self.first().map_or(0, |s| s.features.len());
        let rows: Vec<&[f64]> = self.iter().map(|s| s.features.as_slice()).collect();
        let features = Matrix::from_rows(&rows, cols).expect("feature dimension is constant");
        FeatureSet { features }
    }
}

impl StripLabels for Vec<LabeledSample> {
    fn strip_labels(&self) -> FeatureSet {
        self.as_slice().strip_labels()
    }
}

impl StripLabels for FeatureSet {
    fn strip_labels(&self) -> FeatureSet {
        self.clone()
    }
}

/// Apportions `total` units over `weights` by largest remainder. Ties in
/// the fractional part go to the lower index.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = weights
        .iter()
        .map(|&w| {
            let q = total as f64 * w;
            // 0.437 * 2000 evaluates to 873.9999999999999
            if (q - q.round()).abs() < 1e-9 {
                q.round()
            } else {
                q
            }
        })
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

/// Draws `n` labeled samples, stratified uniformly over the joint labels.
pub fn generate_base(
    family: &SyntheticFamily,
    spec: &AttributeSpec,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<LabeledSample>> {
    if n == 0 {
        return Err(Error::invalid("base dataset size must be positive"));
    }
    family.check_spec(spec)?;
    let k = spec.joint_cardinality();
    let counts = apportion(n, &vec![1.0 / k as f64; k]);
    let mut out = Vec::with_capacity(n);
    for (label, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            out.push(LabeledSample {
                id: out.len() as u64,
                features: family.sample(label, rng),
                joint_label: label,
            });
        }
    }
    Ok(out)
}

/// The biased training set, the balanced reference set and a labeled
/// holdout for evaluation, drawn disjointly from one base pool.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub d_bias: Vec<LabeledSample>,
    pub d_ref: Vec<LabeledSample>,
    pub eval_holdout: Vec<LabeledSample>,
    pub bias_vector: Vec<f64>,
    pub perc: f64,
}

impl DatasetPair {
    pub fn joint_cardinality(&self) -> usize {
        self.bias_vector.len()
    }

    pub fn bias_features(&self) -> FeatureSet {
        self.d_bias.strip_labels()
    }

    pub fn ref_features(&self) -> FeatureSet {
        self.d_ref.strip_labels()
    }

    /// Features of `D_bias ∪ D_ref`, the pretraining set.
    pub fn union_features(&self) -> FeatureSet {
        self.bias_features()
            .union(&self.ref_features())
            .expect("splits share a feature dimension")
    }

    /// `true` when no sample id occurs in more than one split.
    pub fn is_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.d_bias
            .iter()
            .chain(&self.d_ref)
            .chain(&self.eval_holdout)
            .all(|s| seen.insert(s.id))
    }
}

pub fn class_counts(samples: &[LabeledSample], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for s in samples {
        counts[s.joint_label] += 1;
    }
    counts
}

/// Splits `base` into `D_bias` with per-class counts apportioned from
/// `bias_vector`, a class-uniform `D_ref` of `round(perc * size_bias)`
/// samples, and a holdout of everything left over.
pub fn build_dataset_pair(
    base: &[LabeledSample],
    bias_vector: &[f64],
    size_bias: usize,
    perc: f64,
    rng: &mut Rng,
) -> Result<DatasetPair> {
    let k = bias_vector.len();
    if k < 2 {
        return Err(Error::invalid("bias vector needs at least two classes"));
    }
    if bias_vector.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::invalid(format!(
            "bias vector {bias_vector:?} has entries outside [0, 1]"
        )));
    }
    let total: f64 = bias_vector.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "bias vector sums to {total}, not 1"
        )));
    }
    if !(perc > 0.0 && perc <= 1.0) {
        return Err(Error::invalid(format!("perc {perc} outside (0, 1]")));
    }
    if size_bias == 0 {
        return Err(Error::invalid("D_bias size must be positive"));
    }
    if let Some(s) = base.iter().find(|s| s.joint_label >= k) {
        return Err(Error::invalid(format!(
            "sample {} has label {} but the bias vector covers {k} classes",
            s.id, s.joint_label
        )));
    }

    let bias_counts = apportion(size_bias, bias_vector);
    let ref_total = (perc * size_bias as f64).round() as usize;
    let ref_counts = apportion(ref_total, &vec![1.0 / k as f64; k]);

    let mut pools: Vec<Vec<&LabeledSample>> = vec![Vec::new(); k];
    for s in base {
        pools[s.joint_label].push(s);
    }
    let mut d_bias = Vec::with_capacity(size_bias);
    let mut d_ref = Vec::with_capacity(ref_total);
    let mut eval_holdout = Vec::new();
    for (class, pool) in pools.iter_mut().enumerate() {
        let needed = bias_counts[class] + ref_counts[class];
        if pool.len() < needed {
            return Err(Error::DeficientClass {
                class,
                needed,
                available: pool.len(),
            });
        }
        rng.shuffle(pool);
        let (b, rest) = pool.split_at(bias_counts[class]);
        let (r, h) = rest.split_at(ref_counts[class]);
        d_bias.extend(b.iter().map(|&s| s.clone()));
        d_ref.extend(r.iter().map(|&s| s.clone()));
        eval_holdout.extend(h.iter().map(|&s| s.clone()));
    }
    rng.shuffle(&mut d_bias);
    rng.shuffle(&mut d_ref);

    Ok(DatasetPair {
        d_bias,
        d_ref,
        eval_holdout,
        bias_vector: bias_vector.to_vec(),
        perc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_base(n: usize, seed: u64) -> Vec<LabeledSample> {
        let fam = SyntheticFamily::gaussian_circle(2, 2.0).unwrap();
        generate_base(&fam, &AttributeSpec::binary("a"), n, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn apportion_examples() {
        assert_eq!(apportion(1000, &[0.9, 0.1]), vec![900, 100]);
        assert_eq!(
            apportion(2000, &[0.437, 0.063, 0.415, 0.085]),
            vec![874, 126, 830, 170]
        );
        assert_eq!(apportion(10, &[1.0 / 3.0; 3]), vec![4, 3, 3]);
        assert_eq!(apportion(0, &[0.5, 0.5]), vec![0, 0]);
    }

    #[test]
    fn generate_base_is_stratified_and_deterministic() {
        let a = binary_base(400, 1);
        assert_eq!(class_counts(&a, 2), vec![200, 200]);
        assert_eq!(a, binary_base(400, 1));
    }

    #[test]
    fn generate_base_rejects_mismatched_family() {
        let fam = SyntheticFamily::gaussian_circle(3, 2.0).unwrap();
        let err = generate_base(&fam, &AttributeSpec::binary("a"), 10, &mut Rng::new(0));
        assert!(err.is_err());
        let fam = SyntheticFamily::gaussian_circle(2, 2.0).unwrap();
        assert!(generate_base(&fam, &AttributeSpec::binary("a"), 0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn per_label_means_near_component_means() {
        // 500 samples per label: the standard error of each mean coordinate
        // is 1/sqrt(500) = 0.045, so 0.15 is a 3.3 sigma bound.
        let fam = SyntheticFamily::gaussian_mixture(vec![
            super::super::GaussianComponent::isotropic(vec![-2.0, 0.0], 1.0).unwrap(),
            super::super::GaussianComponent::isotropic(vec![2.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        let base =
            generate_base(&fam, &AttributeSpec::binary("a"), 1000, &mut Rng::new(8)).unwrap();
        for (label, expected) in [(0usize, -2.0), (1, 2.0)] {
            let xs: Vec<&LabeledSample> = base.iter().filter(|s| s.joint_label == label).collect();
            let mx = xs.iter().map(|s| s.features[0]).sum::<f64>() / xs.len() as f64;
            let my = xs.iter().map(|s| s.features[1]).sum::<f64>() / xs.len() as f64;
            assert!(
                (mx - expected).abs() < 0.15 && my.abs() < 0.15,
                "label {label}: ({mx}, {my})"
            );
        }
    }

    #[test]
    fn pair_counts_match_requested_ratios() {
        let base = binary_base(6000, 2);
        let pair = build_dataset_pair(&base, &[0.9, 0.1], 1000, 0.1, &mut Rng::new(3)).unwrap();
        assert_eq!(class_counts(&pair.d_bias, 2), vec![900, 100]);
        assert_eq!(class_counts(&pair.d_ref, 2), vec![50, 50]);
        assert_eq!(
            pair.d_bias.len() + pair.d_ref.len() + pair.eval_holdout.len(),
            6000
        );
        assert!(pair.is_disjoint());
    }

    #[test]
    fn smallest_perc_reference_size() {
        let base = binary_base(10_000, 5);
        let pair = build_dataset_pair(&base, &[0.9, 0.1], 4000, 0.025, &mut Rng::new(1)).unwrap();
        assert_eq!(pair.d_ref.len(), 100);
        assert_eq!(class_counts(&pair.d_ref, 2), vec![50, 50]);
    }

    #[test]
    fn deficient_class_is_named() {
        let base = binary_base(1000, 2);
        let err = build_dataset_pair(&base, &[0.9, 0.1], 1000, 0.1, &mut Rng::new(3)).unwrap_err();
        match err {
            Error::DeficientClass {
                class,
                needed,
                available,
            } => {
                assert_eq!((class, needed, available), (0, 950, 500));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn invalid_arguments() {
        let base = binary_base(100, 2);
        let mut rng = Rng::new(0);
        assert!(build_dataset_pair(&base, &[0.8, 0.1], 10, 0.1, &mut rng).is_err());
        assert!(build_dataset_pair(&base, &[0.9, 0.1], 10, 0.0, &mut rng).is_err());
        assert!(build_dataset_pair(&base, &[0.9, 0.1], 10, 1.5, &mut rng).is_err());
        assert!(build_dataset_pair(&base, &[1.0], 10, 0.5, &mut rng).is_err());
    }

    #[test]
    fn strip_labels_keeps_features() {
        let base = binary_base(10, 4);
        let view = base.strip_labels();
        assert_eq!(view.len(), 10);
        assert_eq!(view.matrix().row(3), base[3].features.as_slice());
        assert_eq!(view.strip_labels(), view);
    }
}
