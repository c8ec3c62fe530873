//! The dual-path backbone: channel partition, residual path, dense path,
//! per-stage projection heads and the three classifiers.

mod blocks;
pub mod checkpoint;
mod layers;
mod network;
mod partition;

pub use blocks::{DenseLayer, DenseStage, ResidualBlock};
pub use layers::Ctx;
pub use network::{
    Architecture, DensePathConfig, DualPathNetwork, ForwardOutputs, NetworkConfig, ParamGroups,
    ResidualPathConfig, STAGES,
};
pub use partition::ChannelPartition;
