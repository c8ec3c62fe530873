//! Config file layout and CLI override merging.
//!
//! A config file is TOML. Top-level keys are [`TrainConfig`] fields; a
//! `[data]` table describes how raw CSV input is windowed and split:
//!
//! ```toml
//! epochs = 100
//! batch_size = 16
//!
//! [optimizer]
//! kind = "adam_w"
//! learning_rate = 0.001
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//! weight_decay = 0.01
//!
//! [switches]
//! cgm = false
//!
//! [data]
//! class_names = ["sit", "walk", "run"]
//! window_len = 64
//! stride = 32
//! test_fraction = 0.2
//! ```
//!
//! Values given on the command line take precedence over the file.

use std::fs;
use std::path::Path;

use dcdp::cgm::OptimizerConfig;
use dcdp::data::{CsvSchema, SynthConfig};
use dcdp::train::TrainConfig;
use dcdp::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub class_names: Vec<String>,
    pub label_column: String,
    pub sample_rate_hz: f64,
    pub window_len: usize,
    pub stride: usize,
    pub test_fraction: f64,
    /// Explicit channel indices for the first branch; the rest go to the
    /// second. Without it accelerometer-named channels form the first set.
    pub first_channels: Option<Vec<usize>>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            class_names: Vec::new(),
            label_column: "label".into(),
            sample_rate_hz: 50.0,
            window_len: 64,
            stride: 32,
            test_fraction: 0.2,
            first_channels: None,
        }
    }
}

impl DataSection {
    pub fn schema(&self) -> Result<CsvSchema> {
        if self.class_names.is_empty() {
            return Err(Error::Config("CSV input needs data.class_names in the config file".into()));
        }
        let mut schema = CsvSchema::new(self.class_names.iter().cloned());
        schema.label_column = self.label_column.clone();
        schema.sample_rate_hz = self.sample_rate_hz;
        Ok(schema)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub data: DataSection,
    pub synth: SynthConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }
}

/// Training flags that override the config file when present.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Optimizer: `adamw` or `momentum`.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Momentum coefficient (momentum optimizer only).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub align_weight: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub d_proj: Option<usize>,
    /// Disable dual-path feature extraction (single residual path).
    #[arg(long)]
    pub no_dpfe: bool,
    /// Disable the contrastive and alignment losses.
    #[arg(long)]
    pub no_cl: bool,
    /// Disable confidence-driven gradient modulation.
    #[arg(long)]
    pub no_cgm: bool,
    /// Disable data augmentation.
    #[arg(long)]
    pub no_da: bool,
    /// Also modulate the branch backbones, not only the branch classifiers.
    #[arg(long)]
    pub modulate_backbones: bool,
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) -> Result<()> {
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.align_weight {
            cfg.align_weight = v;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.d_proj {
            cfg.d_proj = v;
        }
        match self.optimizer.as_deref() {
            None => {}
            Some("adamw") => {
                if !matches!(cfg.optimizer, OptimizerConfig::AdamW { .. }) {
                    cfg.optimizer = OptimizerConfig::default();
                }
            }
            Some("momentum") => {
                if !matches!(cfg.optimizer, OptimizerConfig::Momentum { .. }) {
                    cfg.optimizer = OptimizerConfig::Momentum {
                        learning_rate: 0.01,
                        beta: 0.9,
                    };
                }
            }
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown optimizer {other:?}; expected adamw or momentum"
                )))
            }
        }
        match &mut cfg.optimizer {
            OptimizerConfig::AdamW { learning_rate, .. } => {
                if let Some(v) = self.lr {
                    *learning_rate = v;
                }
                if self.beta.is_some() {
                    return Err(Error::Config("--beta applies to the momentum optimizer only".into()));
                }
            }
            OptimizerConfig::Momentum { learning_rate, beta } => {
                if let Some(v) = self.lr {
                    *learning_rate = v;
                }
                if let Some(v) = self.beta {
                    *beta = v;
                }
            }
        }
        let s = &mut cfg.switches;
        s.dpfe &= !self.no_dpfe;
        s.cl &= !self.no_cl;
        s.cgm &= !self.no_cgm;
        s.da &= !self.no_da;
        if self.modulate_backbones {
            cfg.modulation_scope = dcdp::train::ModulationScope::ClassifiersAndBackbones;
        }
        Ok(())
    }
}
