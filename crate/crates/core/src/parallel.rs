//! Thread-count control for the data-parallel kernels.
//!
//! With the `parallel` feature the row kernels and seed sweeps run on
//! rayon. Every row is reduced in a fixed order, so results do not depend
//! on the number of threads. Without the feature everything runs
//! sequentially.

/// Environment variable capping internal parallelism.
pub const THREADS_ENV: &str = "HGRL_THREADS";

/// Thread count requested through `HGRL_THREADS`, defaulting to 1.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Run `f` with at most `threads` workers available to the kernels.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(err) => {
            log::warn!("could not build thread pool ({err}); running on the global pool");
            f()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

/// Map `f` over `items`, in parallel when available. Output order matches input order.
pub fn map_ordered<I, O, F>(items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
