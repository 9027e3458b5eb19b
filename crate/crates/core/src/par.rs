//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these run on the rayon global pool;
//! without it they fall back to plain sequential iteration. Every reduction
//! here is order independent (exact minima with index tie-breaking, ordered
//! collection), so results are bit-identical across both builds and any
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(i)` for `i in 0..n`, returning the results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps a slice in parallel, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Minimum of `f(i)` over `0..n` together with its index.
///
/// Ties resolve to the lowest index and NaN values are ignored, which makes
/// the reduction associative and therefore schedule independent.
pub fn argmin_range<F>(n: usize, f: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let pick = |a: Option<(usize, f64)>, b: Option<(usize, f64)>| match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                Some(b)
            } else {
                Some(a)
            }
        }
    };
    let lift = |i: usize| {
        let v = f(i);
        (!v.is_nan()).then_some((i, v))
    };
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(lift).reduce(|| None, pick)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(lift).fold(None, pick)
    }
}

/// Maximum of `f(i)` over `0..n` with lowest-index tie-breaking.
pub fn argmax_range<F>(n: usize, f: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    argmin_range(n, |i| -f(i)).map(|(i, v)| (i, -v))
}

/// Runs `op` with the data-parallel helpers restricted to `threads` workers.
///
/// Used by the benchmarks to compare the single-threaded and multi-threaded
/// paths inside one build. In sequential builds `threads` is ignored.
pub fn with_threads<R: Send>(threads: usize, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        op()
    }
}

/// Number of workers available to the helpers.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
