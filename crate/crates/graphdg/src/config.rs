//! Training configuration file (TOML).
//!
//! Every field is optional; omitted fields take the model and trainer
//! defaults (batch 32, learning rate 0.001, three message passes). Seeds
//! left out are taken from the `--seed` flag.
//!
//! ```toml
//! [model]
//! message_passes = 3
//! hidden = [50, 50]
//!
//! [training]
//! epochs = 20
//! max_batches_per_epoch = 40
//!
//! [split]
//! fractions = [0.8, 0.1, 0.1]
//! ```

use std::path::Path;

use graphdg_core::cvae::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub message_passes: Option<usize>,
    pub node_width: Option<usize>,
    pub edge_width: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub readout_hidden: Option<Vec<usize>>,
    pub variance_floor: Option<f64>,
    pub init_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub max_batches_per_epoch: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Train, validation and test fractions of the unique molecules.
    pub fractions: Option<[f64; 3]>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: ModelSection,
    pub training: TrainingSection,
    pub split: SplitSection,
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

/// Fully resolved settings for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub split_fractions: [f64; 3],
    pub split_seed: u64,
}

impl RunConfigFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(path, e.to_string()))
    }

    pub fn resolve(&self, seed: u64) -> ResolvedConfig {
        let md = ModelConfig::default();
        let m = &self.model;
        let model = ModelConfig {
            message_passes: m.message_passes.unwrap_or(md.message_passes),
            node_width: m.node_width.unwrap_or(md.node_width),
            edge_width: m.edge_width.unwrap_or(md.edge_width),
            hidden: m.hidden.clone().unwrap_or(md.hidden),
            readout_hidden: m.readout_hidden.clone().unwrap_or(md.readout_hidden),
            variance_floor: m.variance_floor.unwrap_or(md.variance_floor),
            init_seed: m.init_seed.unwrap_or(seed),
        };
        let td = TrainConfig::default();
        let t = &self.training;
        let training = TrainConfig {
            batch_size: t.batch_size.unwrap_or(td.batch_size),
            learning_rate: t.learning_rate.unwrap_or(td.learning_rate),
            epochs: t.epochs.unwrap_or(td.epochs),
            validation_fraction: td.validation_fraction,
            seed: t.seed.unwrap_or(seed),
            max_batches_per_epoch: t.max_batches_per_epoch,
        };
        ResolvedConfig {
            model,
            training,
            split_fractions: self.split.fractions.unwrap_or(DEFAULT_SPLIT),
            split_seed: self.split.seed.unwrap_or(seed),
        }
    }
}
