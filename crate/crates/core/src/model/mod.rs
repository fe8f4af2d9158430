//! Convolutional restoration network with functional parameters.

mod checkpoint;
mod network;
mod params;
mod scalar;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, ParamEntry, MANIFEST_FILE};
pub use network::{LossKind, Model, ModelConfig};
pub use params::{Param, ParamSet};
pub use scalar::{Dual, Real};

#[cfg(test)]
mod tests;
