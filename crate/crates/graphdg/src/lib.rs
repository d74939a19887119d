//! File formats, checkpoints, reports and the `graphdg` command-line
//! pipeline on top of [`graphdg_core`].
//!
//! The pipeline runs in five stages, each available as a function in
//! [`pipeline`] and as a subcommand of the binary:
//!
//! 1. `make-data`: synthetic benchmark from a TOML spec ([`dataio`]).
//! 2. `train`: CVAE training with resumable JSON checkpoints.
//! 3. `generate`: conformations by prior sampling and distance geometry.
//! 4. `evaluate`: MMD protocol against held-out reference conformations.
//! 5. `estimate`: importance-sampling estimates under an energy model.

pub mod checkpoint;
pub mod config;
pub mod dataio;
pub mod energy;
pub mod error;
pub mod exec;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
pub use exec::Rayon;
