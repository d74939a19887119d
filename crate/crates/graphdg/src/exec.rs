use graphdg_core::Executor;
use rayon::prelude::*;

/// Executor backed by a dedicated rayon pool with a fixed thread count.
///
/// Results come back in index order, so everything built on the core
/// executor contract is independent of the thread count.
pub struct Rayon {
    pool: rayon::ThreadPool,
}

impl Rayon {
    /// `threads == 0` lets rayon pick the number of logical CPUs.
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Rayon {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
