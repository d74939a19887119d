//! Execution strategy for embarrassingly parallel work.
//!
//! Algorithms in this crate that fan out over independent items (per-sample
//! gradients, per-conformation embeddings) take an [`Executor`]. Results are
//! always returned in index order and every reduction over them happens
//! sequentially in that order, so output does not depend on how many threads
//! the executor uses.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
