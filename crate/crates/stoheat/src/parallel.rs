//! Deterministic work distribution and reductions.
//!
//! Monte Carlo results must be bit-identical for a given seed no matter
//! how many workers run, so parallelism only ever distributes *path
//! indices*; every per-path result lands in its slot of an ordered
//! buffer and all floating point reductions walk a fixed binary tree.
//! With the `parallel` feature (default) paths run on a rayon pool;
//! without it the same code runs sequentially.

/// Applies `f` to `0..count`, returning results in index order.
///
/// Runs on the global rayon pool when the `parallel` feature is active,
/// sequentially otherwise. `f` must be a pure function of its index (all
/// randomness in this crate is counter-based, so it is).
pub fn map_paths<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Sequential twin of [`map_paths`], available regardless of features.
/// Used by benchmarks to compare scheduling overhead against the pool.
pub fn map_paths_seq<T, F>(count: usize, mut f: F) -> Vec<T>
where
    F: FnMut(usize) -> T,
{
    (0..count).map(&mut f).collect()
}

/// Runs `f` on a rayon pool with exactly `workers` threads (feature
/// `parallel`), or calls it directly when compiled without the feature
/// or when `workers` is 0 (meaning "library default").
pub fn with_worker_pool<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return f();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool construction");
        pool.install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

// Below this length a left-to-right sweep is exact enough and faster
// than further recursion.
const PAIRWISE_LEAF: usize = 16;

/// Sums a slice over a fixed balanced binary tree.
///
/// The association pattern depends only on the slice length, never on
/// scheduling, so repeated runs agree bitwise; the tree also keeps the
/// rounding error at `O(log n)` depth instead of `O(n)`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// [`pairwise_sum`] for iterators with a known exact length.
pub fn pairwise_sum_iter<I>(xs: I) -> f64
where
    I: Iterator<Item = f64> + ExactSizeIterator,
{
    // Small inputs are the common case in per-mode loops; avoid the
    // buffer for those.
    let n = xs.len();
    if n <= PAIRWISE_LEAF {
        return xs.sum();
    }
    let buf: Vec<f64> = xs.collect();
    pairwise_sum(&buf)
}

/// Sample mean and standard error of the mean, both reduced pairwise.
///
/// Returns `(mean, stderr)`; `stderr` is 0 for fewer than two samples.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = pairwise_sum_iter(xs.iter().map(|x| {
        let d = x - mean;
        d * d
    }));
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
