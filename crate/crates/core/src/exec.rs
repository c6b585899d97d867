//! Execution strategy for data-parallel loops.
//!
//! Every batch workload in the crate (path simulation, Monte Carlo trials,
//! rolling windows, multi-start optimisation) is written as an indexed map
//! over independent work items followed by an in-order reduction. Results are
//! therefore bit-identical between [`Execution::Sequential`] and
//! [`Execution::Parallel`]: each item owns its RNG stream, and the reduction
//! always runs sequentially over the collected items.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, and
    /// silently falls back to sequential execution otherwise.
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    pub(crate) fn map<T, F>(self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..count).into_par_iter().map(f).collect()
            }
            _ => (0..count).map(f).collect(),
        }
    }
}

/// Deterministic RNG for work item `stream` of a computation seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
