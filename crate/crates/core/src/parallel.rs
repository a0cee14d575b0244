//! Thin wrappers that keep parallelism deterministic.
//!
//! Work is always expressed as an indexed map over a pre-built cell list;
//! results come back in input order and are reduced sequentially by the
//! caller. Combined with per-cell RNG streams this makes every artifact
//! byte-identical for any thread count.

use rayon::prelude::*;

/// Maps `f` over `items` in parallel, preserving input order exactly.
pub fn ordered_map<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(items: &[T], f: F) -> Vec<U> {
    items.par_iter().map(f).collect()
}

/// Runs `f` inside a dedicated pool of `threads` workers (0 = rayon default).
/// Using a scoped pool instead of the global one lets a CLI `--threads` flag
/// apply per invocation.
pub fn install<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("failed to build thread pool");
    pool.install(f)
}
