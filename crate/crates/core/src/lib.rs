//! Dual-path contrastive network for multimodal sensor activity recognition,
//! trained with confidence-driven gradient modulation.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense tensors, reverse-mode autodiff, finite-difference checks
//! - [`model`]: channel partitioning, residual and dense paths, projection heads, classifiers
//! - [`contrastive`]: multi-stage bidirectional contrastive loss and feature alignment
//! - [`cgm`]: confidence accounting, gradient modulation, momentum and AdamW updates
//! - [`data`]: CSV ingest, windowing, normalization, splits, synthetic generator
//! - [`train`]: loss composition, training loop, metrics, ablations

mod codec;
pub mod cgm;
pub mod contrastive;
pub mod data;
mod error;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
