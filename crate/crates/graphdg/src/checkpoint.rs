//! Training checkpoints as JSON.
//!
//! A checkpoint holds the resolved configuration, the molecule split, the
//! current and best parameters, the Adam moments and the metric history.
//! Floats are stored in shortest round-trip form, so a resumed run continues
//! bit-identically.

use std::path::Path;

use graphdg_core::cvae::{Cvae, EpochMetrics, ModelConfig, TrainConfig, Trainer};
use graphdg_core::nnet::{AdamConfig, AdamState, Tensor};
use serde::{Deserialize, Serialize};

use crate::dataio::SplitManifest;
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorDoc {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TensorDoc {
    fn from(t: &Tensor) -> Self {
        Self { shape: t.shape().to_vec(), data: t.data().to_vec() }
    }

    fn to_tensor(&self) -> Result<Tensor> {
        Ok(Tensor::new(self.shape.clone(), self.data.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelDoc {
    message_passes: usize,
    node_width: usize,
    edge_width: usize,
    hidden: Vec<usize>,
    readout_hidden: Vec<usize>,
    variance_floor: f64,
    init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainDoc {
    batch_size: usize,
    learning_rate: f64,
    epochs: usize,
    validation_fraction: f64,
    seed: u64,
    max_batches_per_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamDoc {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    first: Vec<TensorDoc>,
    second: Vec<TensorDoc>,
}

/// One line of the metrics log, also kept in the checkpoint history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochDoc {
    pub epoch: usize,
    pub train_elbo: f64,
    pub validation_elbo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_train_elbo: Option<f64>,
    pub batches: usize,
}

impl EpochDoc {
    pub fn from_metrics(m: &EpochMetrics) -> Self {
        Self {
            epoch: m.epoch,
            train_elbo: m.train_elbo,
            validation_elbo: m.validation_elbo,
            fixed_train_elbo: m.fixed_train_elbo,
            batches: m.batches,
        }
    }

    fn to_metrics(&self) -> EpochMetrics {
        EpochMetrics {
            epoch: self.epoch,
            train_elbo: self.train_elbo,
            validation_elbo: self.validation_elbo,
            fixed_train_elbo: self.fixed_train_elbo,
            batches: self.batches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointDoc {
    schema: u32,
    model: ModelDoc,
    training: TrainDoc,
    split: SplitManifest,
    param_names: Vec<String>,
    params: Vec<TensorDoc>,
    adam: AdamDoc,
    epoch: usize,
    best_params: Vec<TensorDoc>,
    /// `None` before the first epoch.
    best_score: Option<f64>,
    best_epoch: Option<usize>,
    history: Vec<EpochDoc>,
}

/// Trainer state plus the split it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub trainer: Trainer,
    pub split: SplitManifest,
}

fn tensors(docs: &[TensorDoc]) -> Result<Vec<Tensor>> {
    docs.iter().map(TensorDoc::to_tensor).collect()
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let t = &self.trainer;
        let c = t.model.config();
        let doc = CheckpointDoc {
            schema: CHECKPOINT_SCHEMA,
            model: ModelDoc {
                message_passes: c.message_passes,
                node_width: c.node_width,
                edge_width: c.edge_width,
                hidden: c.hidden.clone(),
                readout_hidden: c.readout_hidden.clone(),
                variance_floor: c.variance_floor,
                init_seed: c.init_seed,
            },
            training: TrainDoc {
                batch_size: t.config.batch_size,
                learning_rate: t.config.learning_rate,
                epochs: t.config.epochs,
                validation_fraction: t.config.validation_fraction,
                seed: t.config.seed,
                max_batches_per_epoch: t.config.max_batches_per_epoch,
            },
            split: self.split.clone(),
            param_names: t.model.params().names().to_vec(),
            params: t.model.params().tensors().iter().map(TensorDoc::from).collect(),
            adam: AdamDoc {
                learning_rate: t.adam.config.learning_rate,
                beta1: t.adam.config.beta1,
                beta2: t.adam.config.beta2,
                epsilon: t.adam.config.epsilon,
                step: t.adam.step,
                first: t.adam.first.iter().map(TensorDoc::from).collect(),
                second: t.adam.second.iter().map(TensorDoc::from).collect(),
            },
            epoch: t.epoch,
            best_params: t.best_params.iter().map(TensorDoc::from).collect(),
            best_score: t.best_score.is_finite().then_some(t.best_score),
            best_epoch: t.best_epoch,
            history: t.history.iter().map(EpochDoc::from_metrics).collect(),
        };
        serde_json::to_string(&doc).expect("checkpoints always serialize")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let doc: CheckpointDoc = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if doc.schema != CHECKPOINT_SCHEMA {
            return Err(format!("unsupported checkpoint schema {}", doc.schema));
        }
        Self::from_doc(doc).map_err(|e| e.to_string())
    }

    fn from_doc(doc: CheckpointDoc) -> Result<Self> {
        let m = doc.model;
        let config = ModelConfig {
            message_passes: m.message_passes,
            node_width: m.node_width,
            edge_width: m.edge_width,
            hidden: m.hidden,
            readout_hidden: m.readout_hidden,
            variance_floor: m.variance_floor,
            init_seed: m.init_seed,
        };
        let mut model = Cvae::new(config)?;
        if doc.param_names.len() != doc.params.len() {
            return Err(Error::Domain("checkpoint parameter names and tensors differ in count".into()));
        }
        let named: Vec<(String, Tensor)> =
            doc.param_names.iter().cloned().zip(tensors(&doc.params)?).collect();
        model.params_mut().assign(&named)?;
        let t = doc.training;
        let config = TrainConfig {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            validation_fraction: t.validation_fraction,
            seed: t.seed,
            max_batches_per_epoch: t.max_batches_per_epoch,
        };
        let a = doc.adam;
        let adam = AdamState {
            config: AdamConfig { learning_rate: a.learning_rate, beta1: a.beta1, beta2: a.beta2, epsilon: a.epsilon },
            step: a.step,
            first: tensors(&a.first)?,
            second: tensors(&a.second)?,
        };
        let n = model.params().len();
        if adam.first.len() != n || adam.second.len() != n || doc.best_params.len() != n {
            return Err(Error::Domain("checkpoint optimizer state does not match the model".into()));
        }
        let trainer = Trainer {
            config,
            model,
            adam,
            epoch: doc.epoch,
            best_params: tensors(&doc.best_params)?,
            best_score: doc.best_score.unwrap_or(f64::NEG_INFINITY),
            best_epoch: doc.best_epoch,
            history: doc.history.iter().map(EpochDoc::to_metrics).collect(),
        };
        Ok(Self { trainer, split: doc.split })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::config(path, e))
    }

    /// Writes to a sibling temporary file and renames it into place, so an
    /// interrupted write never leaves a truncated checkpoint.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, self.to_json()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}
