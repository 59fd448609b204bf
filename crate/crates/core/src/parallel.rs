//! Data-parallel execution of independent Monte Carlo trials.
//!
//! Batch operations (multi-seed spectra, stability trials, recurrence
//! checks) are embarrassingly parallel: each seed is simulated on its own
//! and results are collected *in seed order* before any floating-point
//! aggregation, so parallel and sequential execution produce bit-identical
//! output.
//!
//! With the `parallel` feature (default) [`map_seeds`] fans trials out over
//! rayon's thread pool; without it the crate falls back to the sequential
//! loop.  [`map_seeds_sequential`] is always available so benchmarks can
//! compare the two lanes directly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over seeds, in parallel when the `parallel` feature is enabled.
///
/// Results come back ordered by seed position regardless of scheduling.
pub fn map_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        seeds.par_iter().map(|&s| f(s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_seeds_sequential(seeds, f)
    }
}

/// Sequential reference lane with the same contract as [`map_seeds`].
pub fn map_seeds_sequential<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    seeds.iter().map(|&s| f(s)).collect()
}

/// Convenience: the contiguous seed block `base, base+1, ..., base+count-1`.
pub fn seed_block(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}
