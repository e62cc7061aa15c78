//! From-scratch convolutional segmentation of ILD images into direct-path
//! and reverberation pixels: layer primitives, the depth-1 encoder-decoder
//! model, a deterministic momentum-SGD trainer and binary checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{normalize_ild, LevelUNet, MaskImage, NetConfig, CLASS_DP, CLASS_REV, ILD_CLIP_DB};
pub use train::{train, write_training_log, EpochStats, TrainHyper, TrainMeta, TrainedModel};
