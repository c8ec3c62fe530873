//! Confidence-driven gradient modulation and the optimizers that consume
//! the modulated gradients.
//!
//! Per batch, the true-class probabilities of each branch classifier are
//! summed into `S_res` and `S_dense`. Their ratios decide which branch is
//! dominant, and only the dominant branch has its classifier gradients
//! scaled down by `1 − tanh(α (R − 1))`.

mod modulation;
mod optim;

pub use modulation::{
    apply_modulation, batch_confidences, contribution_ratios, modulation_coefficient,
    modulation_coefficients, ModulationState, DEFAULT_EPSILON,
};
pub use optim::{AdamWState, MomentumState, Optimizer, OptimizerConfig};
