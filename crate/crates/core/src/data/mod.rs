//! Synthetic labeled data and the biased / reference split.

mod attributes;
mod dataset;
mod family;
pub mod io;

pub use attributes::{Attribute, AttributeSpec};
pub use dataset::{
    apportion, build_dataset_pair, class_counts, generate_base, DatasetPair, FeatureSet,
    LabeledSample, StripLabels,
};
pub use family::{
    FamilyKind, GaussianComponent, ImageRecipe, Shade, Shape, SyntheticFamily, IMAGE_SIDE,
};
