//! The fused readout model: configuration, parameters, optimizer, training,
//! checkpoints and weight export.

mod checkpoint;
mod config;
mod export;
mod net;
mod optim;
mod train;

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes};
pub use config::{AdamConfig, FeaturePolicy, ModelConfig, PositionalConfig, Preset, Variant};
pub use export::{
    export_fusion_weights, fusion_blocks, import_fusion_weights, read_fusion_weights, BLOCK_BIAS, BLOCK_FR,
    BLOCK_LR, BLOCK_PE,
};
pub use net::{bce_loss, BceLoss, BlockWidths, Evaluated, Gradients, Inputs, Layer, MultiFixModel, PROB_EPS};
pub use optim::Adam;
pub use train::{
    compute_inputs, positional_embedding, predict, resolve_features, train, train_on_inputs, EpochMetrics,
    TrainOutcome,
};
