//! Worker pool for replicas and spectral-grid chunks.

use djs_core::solver::GridExecutor;
use rayon::prelude::*;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "DJS_THREADS";

/// Worker count: `DJS_THREADS` if set to a positive integer, otherwise the
/// available parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// A rayon pool of a fixed size.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .expect("thread pool");
        Self { pool }
    }

    /// Pool sized by [`worker_count`].
    pub fn from_env() -> Self {
        Self::new(worker_count())
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `f(0), ..., f(n - 1)` in order, evaluated concurrently.
    pub fn map<T: Send, E: Send>(&self, n: usize, f: impl Fn(usize) -> Result<T, E> + Sync) -> Result<Vec<T>, E> {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}

impl GridExecutor for Pool {
    fn map_chunks(
        &self,
        n_chunks: usize,
        job: &(dyn Fn(usize) -> djs_core::Result<Vec<f64>> + Sync),
    ) -> djs_core::Result<Vec<Vec<f64>>> {
        self.map(n_chunks, job)
    }
}
