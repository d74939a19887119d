//! Conditional VAE over edge distances of an extended graph.
//!
//! The encoder `q(z | d, G)` and decoder `p(d | z, G)` are both
//! message-passing networks over the extended graph. The latent code has one
//! scalar per atom, and the prior is a factorized standard normal.
//!
//! One message pass updates every edge from its own state and the states of
//! its two endpoints, then every node from its own state and the sum of its
//! updated incident edges:
//!
//! ```text
//! e_k <- (M_e([e_k, v_r, v_s]) + M_e([e_k, v_s, v_r])) / 2
//! v_i <- M_v([v_i, mean_{k ∋ i} e_k])
//! ```
//!
//! Averaging both endpoint orderings makes the edge update independent of how
//! an undirected edge is stored. Averaging (rather than summing) incident
//! edges keeps activations at unit scale through the passes; with sums they
//! grow roughly by the node degree per pass and the variance heads overflow.

mod model;
mod train;

pub use model::{Cvae, ElboEval, GraphTensors, ModelConfig};
pub use train::{
    split_validation_graphs, train, EpochMetrics, Sample, TrainConfig, TrainOutcome, Trainer, TrainingSet,
};

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::molgraph::MolGraphError;
use crate::nnet::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CvaeError {
    #[error(transparent)]
    Graph(#[from] MolGraphError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{what} has length {got}, expected {expected}")]
    Misaligned { what: &'static str, expected: usize, got: usize },
    #[error("non-finite {term} term ({value})")]
    NumericalFailure { term: &'static str, value: f64 },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

/// Per-node Gaussian posterior `N(mean_i, variance_i)` over the latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGaussians {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl NodeGaussians {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Closed-form `KL(q || N(0, I))`.
    pub fn kl_to_standard_normal(&self) -> f64 {
        self.mean.iter().zip(&self.variance).map(|(&m, &v)| kl_standard_normal(m, v)).sum()
    }
}

/// `KL(N(mean, variance) || N(0, 1))`.
pub fn kl_standard_normal(mean: f64, variance: f64) -> f64 {
    0.5 * (variance + mean * mean - 1.0 - crate::math::ln(variance))
}

/// Latent code, one scalar per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Draws `z ~ N(0, I)` for `n` atoms.
    pub fn from_prior(n: usize, rng: &mut crate::Rng) -> Self {
        Self((0..n).map(|_| rng.sample(StandardNormal)).collect())
    }
}

/// `z_i = mean_i + sqrt(variance_i) * eps_i`, `eps_i ~ N(0, 1)`.
pub fn reparameterize(ng: &NodeGaussians, rng: &mut crate::Rng) -> LatentCode {
    LatentCode(
        ng.mean
            .iter()
            .zip(&ng.variance)
            .map(|(&m, &v)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + crate::math::sqrt(v) * eps
            })
            .collect(),
    )
}

/// Per-edge Gaussian over distances, aligned with the extended graph's edges.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEdgeDist {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GaussianEdgeDist {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn std_dev(&self, k: usize) -> f64 {
        crate::math::sqrt(self.variance[k])
    }

    /// Builds a distribution with the given means and a shared variance.
    pub fn point(mean: Vec<f64>, variance: f64) -> Self {
        let n = mean.len();
        Self { mean, variance: alloc::vec![variance; n] }
    }
}

/// Decodes `n` latent codes drawn from the standard-normal prior.
pub fn sample_prior(
    model: &Cvae,
    eg: &crate::molgraph::ExtendedGraph,
    n: usize,
    rng: &mut crate::Rng,
) -> Result<Vec<GaussianEdgeDist>, CvaeError> {
    let tensors = GraphTensors::new(eg);
    (0..n)
        .map(|_| {
            let z = LatentCode::from_prior(eg.n_nodes(), rng);
            model.decode_tensors(&tensors, &z)
        })
        .collect()
}
