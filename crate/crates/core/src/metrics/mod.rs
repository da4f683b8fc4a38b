//! Fairness discrepancy, Fréchet distance and the attribute classifiers
//! that feed them.

mod classifier;
mod fairness;
mod frechet;

pub use classifier::{
    train_attr_classifier, train_classifier_for_pair, AttrClassifier, ClassifierConfig,
    ClassifierKind, Classify,
};
pub use fairness::{
    compute_fd, fairness_discrepancy, fd_from_frequencies, fd_of_samples, max_fd, Evaluate,
    Evaluator, MetricsReport,
};
pub use frechet::{
    balanced_reference_rows, balanced_reference_stats, fit_gauss_stats, frechet_sq, GaussStats,
    EIGEN_TOLERANCE, SYMMETRY_TOLERANCE,
};
