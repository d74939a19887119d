use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{Cvae, CvaeError, GraphTensors};
use crate::molgraph::{DistanceSet, ExtendedGraph};
use crate::nnet::{AdamConfig, AdamState, Tensor};
use crate::Executor;

// RNG stream ids below are offsets; per-epoch streams start at EPOCH_STREAM.
const SPLIT_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 2;
const EPOCH_STREAM: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Fraction of graphs (not samples) held out for model selection.
    pub validation_fraction: f64,
    pub seed: u64,
    /// Caps mini-batches per epoch; `None` makes every epoch a full pass.
    pub max_batches_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 0.001,
            epochs: 10,
            validation_fraction: 0.1,
            seed: 0,
            max_batches_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CvaeError> {
        if self.batch_size == 0 {
            return Err(CvaeError::Config("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CvaeError::Config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(CvaeError::Config("validation_fraction must be in [0, 1)"));
        }
        if self.max_batches_per_epoch == Some(0) {
            return Err(CvaeError::Config("max_batches_per_epoch must be at least 1"));
        }
        Ok(())
    }
}

/// One conformation's distances for graph `graph` of a [`TrainingSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub graph: usize,
    pub distances: DistanceSet,
}

/// Graphs with their conformation samples, validated for alignment.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    graphs: Vec<ExtendedGraph>,
    tensors: Vec<GraphTensors>,
    samples: Vec<Sample>,
    validation: Option<Vec<bool>>,
}

impl TrainingSet {
    pub fn new(graphs: Vec<ExtendedGraph>, samples: Vec<Sample>) -> Result<Self, CvaeError> {
        if samples.is_empty() {
            return Err(CvaeError::EmptyDataset);
        }
        for s in &samples {
            let eg = graphs
                .get(s.graph)
                .ok_or(CvaeError::Misaligned { what: "graph index", expected: graphs.len(), got: s.graph })?;
            s.distances.check_against(eg)?;
        }
        let tensors = graphs.iter().map(GraphTensors::new).collect();
        Ok(Self { graphs, tensors, samples, validation: None })
    }

    /// Fixes which graphs are held out for validation instead of drawing
    /// them from the training seed.
    pub fn with_validation_graphs(mut self, mask: Vec<bool>) -> Result<Self, CvaeError> {
        if mask.len() != self.graphs.len() {
            return Err(CvaeError::Misaligned { what: "validation mask", expected: self.graphs.len(), got: mask.len() });
        }
        self.validation = Some(mask);
        Ok(self)
    }

    pub fn graphs(&self) -> &[ExtendedGraph] {
        &self.graphs
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }
}

/// Validation mask over graph indices.
///
/// Holds out `round(fraction * n)` graphs, at least one when `fraction > 0`
/// and `n >= 2`, and always leaves at least one graph for training.
pub fn split_validation_graphs(n_graphs: usize, fraction: f64, seed: u64) -> Vec<bool> {
    let mut mask = alloc::vec![false; n_graphs];
    if n_graphs < 2 || fraction <= 0.0 {
        return mask;
    }
    let want = libm::round(fraction * n_graphs as f64) as usize;
    let n_val = want.clamp(1, n_graphs - 1);
    let mut order: Vec<usize> = (0..n_graphs).collect();
    order.shuffle(&mut crate::rng_stream(seed, SPLIT_STREAM));
    for &g in &order[..n_val] {
        mask[g] = true;
    }
    mask
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean single-sample ELBO over the mini-batches of the epoch.
    pub train_elbo: f64,
    /// Mean ELBO over validation samples with fixed noise, after the epoch.
    pub validation_elbo: Option<f64>,
    /// Without validation graphs: mean ELBO over all training samples with
    /// fixed noise, after the epoch. Unlike `train_elbo` it is comparable
    /// across epochs.
    pub fixed_train_elbo: Option<f64>,
    pub batches: usize,
}

impl EpochMetrics {
    /// Score used for model selection.
    pub fn selection_score(&self) -> f64 {
        self.validation_elbo.or(self.fixed_train_elbo).unwrap_or(self.train_elbo)
    }
}

/// Resumable optimizer state. Everything needed to continue training
/// bit-identically lives here.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Cvae,
    pub adam: AdamState,
    /// Number of completed epochs.
    pub epoch: usize,
    pub best_params: Vec<Tensor>,
    pub best_score: f64,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochMetrics>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model with the best-scoring parameters.
    pub model: Cvae,
    pub best_epoch: Option<usize>,
    pub best_score: f64,
    pub history: Vec<EpochMetrics>,
    pub trainer: Trainer,
}

impl Trainer {
    pub fn new(model: Cvae, config: TrainConfig) -> Result<Self, CvaeError> {
        config.validate()?;
        let adam_config = AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() };
        let adam = AdamState::new(adam_config, model.params().tensors());
        let best_params = model.params().tensors().to_vec();
        Ok(Self {
            config,
            model,
            adam,
            epoch: 0,
            best_params,
            best_score: f64::NEG_INFINITY,
            best_epoch: None,
            history: Vec::new(),
        })
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// Model carrying the best parameters seen so far.
    pub fn best_model(&self) -> Cvae {
        let mut m = self.model.clone();
        m.params_mut().tensors_mut().clone_from_slice(&self.best_params);
        m
    }

    fn partition(&self, data: &TrainingSet) -> (Vec<usize>, Vec<usize>) {
        let mask = match &data.validation {
            Some(m) => m.clone(),
            None => split_validation_graphs(data.graphs.len(), self.config.validation_fraction, self.config.seed),
        };
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (i, s) in data.samples.iter().enumerate() {
            if mask[s.graph] {
                val.push(i);
            } else {
                train.push(i);
            }
        }
        (train, val)
    }

    fn noise_for(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng_stream(seed, 0);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn validation_elbo(&self, data: &TrainingSet, val: &[usize], exec: &impl Executor) -> Result<f64, CvaeError> {
        let model = &self.model;
        let base: u64 = crate::rng_stream(self.config.seed, VALIDATION_STREAM).random();
        let values = exec.map(val.len(), |k| {
            let s = &data.samples[val[k]];
            let g = &data.tensors[s.graph];
            let noise = Self::noise_for(g.n_nodes(), base ^ val[k] as u64);
            model.elbo_value(g, s.distances.values(), &noise)
        });
        let mut total = 0.0;
        for v in values {
            total += v?;
        }
        Ok(total / val.len() as f64)
    }

    /// Runs one epoch of mini-batch Adam and updates the best-parameter
    /// snapshot.
    pub fn run_epoch(&mut self, data: &TrainingSet, exec: &impl Executor) -> Result<EpochMetrics, CvaeError> {
        let (mut train, val) = self.partition(data);
        if train.is_empty() {
            return Err(CvaeError::EmptyDataset);
        }
        let mut rng = crate::rng_stream(self.config.seed, EPOCH_STREAM + self.epoch as u64);
        train.shuffle(&mut rng);

        let mut batches = 0usize;
        let mut elbo_sum = 0.0;
        let mut seen = 0usize;
        for batch in train.chunks(self.config.batch_size) {
            if self.config.max_batches_per_epoch.is_some_and(|m| batches >= m) {
                break;
            }
            let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
            let model = &self.model;
            let results = exec.map(batch.len(), |k| {
                let s = &data.samples[batch[k]];
                let g = &data.tensors[s.graph];
                model.elbo_with_noise(g, s.distances.values(), &Self::noise_for(g.n_nodes(), seeds[k]))
            });
            let mut grads: Vec<Tensor> =
                self.model.params().tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
            for r in results {
                let r = r?;
                elbo_sum += r.elbo;
                for (acc, g) in grads.iter_mut().zip(&r.grads) {
                    acc.add_assign(g);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x *= inv);
            }
            self.adam.step_store(self.model.params_mut(), &grads)?;
            seen += batch.len();
            batches += 1;
        }

        let (validation_elbo, fixed_train_elbo) = if val.is_empty() {
            train.sort_unstable();
            (None, Some(self.validation_elbo(data, &train, exec)?))
        } else {
            (Some(self.validation_elbo(data, &val, exec)?), None)
        };
        let metrics = EpochMetrics {
            epoch: self.epoch,
            train_elbo: elbo_sum / seen as f64,
            validation_elbo,
            fixed_train_elbo,
            batches,
        };
        let score = metrics.selection_score();
        if score > self.best_score || self.best_epoch.is_none() {
            self.best_score = score;
            self.best_epoch = Some(self.epoch);
            self.best_params = self.model.params().tensors().to_vec();
        }
        self.epoch += 1;
        self.history.push(metrics.clone());
        Ok(metrics)
    }

    /// Runs the remaining epochs.
    pub fn run(mut self, data: &TrainingSet, exec: &impl Executor) -> Result<TrainOutcome, CvaeError> {
        while !self.is_finished() {
            self.run_epoch(data, exec)?;
        }
        Ok(TrainOutcome {
            model: self.best_model(),
            best_epoch: self.best_epoch,
            best_score: self.best_score,
            history: self.history.clone(),
            trainer: self,
        })
    }
}

/// Trains `model` from scratch and returns the best-validation parameters.
pub fn train(
    model: Cvae,
    data: &TrainingSet,
    config: TrainConfig,
    exec: &impl Executor,
) -> Result<TrainOutcome, CvaeError> {
    Trainer::new(model, config)?.run(data, exec)
}
