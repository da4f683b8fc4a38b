//! The two training setups: pretrain-then-adapt on the biased and reference
//! sets, and adaptation of a saved checkpoint from the reference set alone.

mod setups;
mod train;

pub use setups::{
    adapt_fairtl, adapt_fairtlpp, debias_pretrained, fixed_noise_gallery, layer_change_study,
    pretrain, Gallery, LayerChangeRow, LayerChangeTable, LayerStudyConfig, Method, Network,
};
pub use train::{EpochCallback, EpochLosses, RunRecord, StageConfig, TrainHooks};
