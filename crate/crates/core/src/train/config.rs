use serde::{Deserialize, Serialize};

use crate::cgm::{OptimizerConfig, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::model::{ChannelPartition, DensePathConfig, NetworkConfig, ResidualPathConfig};

/// Independent on/off switches for the four method components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Switches {
    /// Dual-path feature extraction; off means one residual path over all channels.
    pub dpfe: bool,
    /// Multi-stage contrastive and alignment losses.
    pub cl: bool,
    /// Confidence-driven gradient modulation.
    pub cgm: bool,
    /// Train-time data augmentation.
    pub da: bool,
}

impl Default for Switches {
    fn default() -> Self {
        Self::all()
    }
}

impl Switches {
    pub fn all() -> Self {
        Self {
            dpfe: true,
            cl: true,
            cgm: true,
            da: true,
        }
    }

    pub fn none() -> Self {
        Self {
            dpfe: false,
            cl: false,
            cgm: false,
            da: false,
        }
    }

    /// Contrastive losses need both branches.
    pub fn contrastive_active(&self) -> bool {
        self.dpfe && self.cl
    }

    pub fn modulation_active(&self) -> bool {
        self.dpfe && self.cgm
    }
}

/// Which gradients the modulation coefficients scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationScope {
    /// Only the two branch classifiers.
    #[default]
    Classifiers,
    /// The branch classifiers and their backbones.
    ClassifiersAndBackbones,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    pub jitter_std: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scale_min: 0.9,
            scale_max: 1.1,
            jitter_std: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub align_weight: f64,
    pub temperature: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub optimizer: OptimizerConfig,
    pub switches: Switches,
    pub modulation_scope: ModulationScope,
    pub augment: AugmentConfig,
    pub seed: u64,
    pub residual: ResidualPathConfig,
    pub dense: DensePathConfig,
    pub d_proj: usize,
    /// Windows per forward pass during evaluation.
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            align_weight: 0.7,
            temperature: 0.5,
            alpha: 0.9,
            epsilon: DEFAULT_EPSILON,
            optimizer: OptimizerConfig::default(),
            switches: Switches::all(),
            modulation_scope: ModulationScope::default(),
            augment: AugmentConfig::default(),
            seed: 0,
            residual: ResidualPathConfig::default(),
            dense: DensePathConfig::default(),
            d_proj: 32,
            eval_batch_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            )));
        }
        if self.eval_batch_size == 0 {
            return Err(Error::Config("eval_batch_size must be positive".into()));
        }
        for (name, v) in [("align_weight", self.align_weight), ("alpha", self.alpha)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        for (name, v) in [("temperature", self.temperature), ("epsilon", self.epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        let a = &self.augment;
        if !(a.scale_min <= a.scale_max && a.scale_min.is_finite() && a.scale_max.is_finite()) {
            return Err(Error::Config(format!(
                "augment scale range [{}, {}] is invalid",
                a.scale_min, a.scale_max
            )));
        }
        if !(a.jitter_std >= 0.0 && a.jitter_std.is_finite()) {
            return Err(Error::Config(format!("augment jitter_std must be ≥ 0, got {}", a.jitter_std)));
        }
        self.optimizer.build()?;
        Ok(())
    }

    /// Network configuration for data with the given partition and classes.
    pub fn network(&self, partition: ChannelPartition, classes: usize) -> NetworkConfig {
        NetworkConfig {
            partition,
            residual: self.residual.clone(),
            dense: self.dense.clone(),
            d_proj: self.d_proj,
            classes,
            dual_path: self.switches.dpfe,
        }
    }
}
