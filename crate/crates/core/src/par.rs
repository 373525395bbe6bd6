//! Replicate-level parallelism.
//!
//! Seed sweeps, permutation tests and benchmark grids are embarrassingly
//! parallel over replicates. Every replicate derives its own seed from its
//! index, and results are collected in index order, so the parallel and
//! sequential paths produce identical output.

/// How to run a batch of independent replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Maps `f` over `0..n`, preserving index order.
    ///
    /// Without the `parallel` feature this always runs sequentially.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }
}

/// Child seed for replicate `index` of a sweep rooted at `seed`.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}
