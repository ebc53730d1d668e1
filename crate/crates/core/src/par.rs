//! Replicate-level data parallelism.
//!
//! With the `parallel` feature (default) replicates are distributed over the
//! rayon pool; without it they run in order on the calling thread. Results
//! are always returned in replicate order, so every reduction over them is
//! independent of scheduling.

/// Runs `f(r)` for `r in 0..n` and collects the results in order.
pub fn map_replicates<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_replicates_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_replicates_seq(n, f)
    }
}

/// Fallible variant of [`map_replicates`]; returns the error of the lowest
/// failing replicate.
pub fn try_map_replicates<T, E, F>(n: u64, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    map_replicates(n, f).into_iter().collect()
}

/// Sequential path, always available.
pub fn map_replicates_seq<T, F>(n: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_replicates_par<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}
