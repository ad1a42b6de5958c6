//! Attention U-Net assembly, weight containers, checkpoints and inference.

mod config;
mod container;
mod network;
mod persist;
mod predict;

pub use config::{NetConfig, ADAPTER_CHANNELS, BASE_FILTERS};
pub use container::{khkwio_to_oikhkw, oikhkw_to_khkwio, KernelLayout, Manifest, TensorEntry, WeightContainer, MAGIC};
pub use network::{AttentionUNet, ConvPair, Tape};
pub use persist::{from_container, import_pretrained, load_checkpoint, save_checkpoint, to_container, VGG_LAYERS};
pub use predict::{predict, predict_batch, ProbabilityMap};
