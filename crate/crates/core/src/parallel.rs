//! Optional row/pixel parallelism. Sequential unless a thread count is set.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

static THREADS: AtomicUsize = AtomicUsize::new(0);

/// Enables parallel per-pixel loops on `n` rayon threads; 0 restores
/// sequential execution. Results are identical in both modes.
pub fn set_threads(n: usize) {
    if n > 0 {
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    THREADS.store(n, Ordering::Relaxed);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

/// `(0..n).map(f)` collected in index order.
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if threads() > 0 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}
