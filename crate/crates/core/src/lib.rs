//! Core algorithms for graph-conditioned molecular conformation generation.
//!
//! The crate is `no_std` and only needs an allocator. It contains:
//!
//! * [`molgraph`]: molecular graphs, extended graphs with angle and dihedral
//!   edges, node/edge featurization and distance extraction.
//! * [`nnet`]: a small reverse-mode autodiff tape with dense layers and Adam.
//! * [`cvae`]: the message-passing conditional VAE over edge distances.
//! * [`edg`]: Euclidean distance geometry (bounds, smoothing, metrization,
//!   spectral embedding, refinement).
//! * [`evalmmd`]: maximum mean discrepancy evaluation and method rankings.
//! * [`boltzmann`]: a harmonic surrogate energy, a Metropolis reference
//!   sampler and the self-normalized importance-sampling estimator.
//!
//! File formats, the CLI and thread pools live in the companion `graphdg`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod boltzmann;
pub mod cvae;
pub mod edg;
pub mod evalmmd;
pub mod exec;
pub mod molgraph;
pub mod nnet;

pub(crate) mod math;

pub use exec::{Executor, Sequential};

/// Deterministic RNG used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a seed and a stream id.
///
/// Distinct streams of one seed are independent, which lets callers derive
/// per-task generators (per molecule, per epoch) from a single root seed.
pub fn rng_stream(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
