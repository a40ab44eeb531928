//! Execution helpers: data-parallel map/for-each with a sequential fallback.
//!
//! With the `parallel` feature (on by default) these run on rayon; without
//! it they compile to plain loops. [`force_sequential`] disables rayon at
//! runtime so benchmarks can compare both paths in one binary.
//!
//! Every helper preserves output order and keeps floating-point reduction
//! order fixed, so parallel and sequential execution produce bit-identical
//! results.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Runtime override: when `true`, all helpers run sequentially even if the
/// `parallel` feature is compiled in.
pub fn force_sequential(force: bool) {
    FORCE_SEQUENTIAL.store(force, Ordering::SeqCst);
}

/// Whether the helpers will actually dispatch to rayon.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Order-preserving map over `0..n`.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel_enabled() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Splits `data` into contiguous chunks of `chunk_len` and applies `f` to
/// each with its chunk index. Chunks are disjoint, so this is deterministic
/// regardless of scheduling.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk_len > 0);
    #[cfg(feature = "parallel")]
    {
        if parallel_enabled() {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    for (i, c) in data.chunks_mut(chunk_len).enumerate() {
        f(i, c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v = map_indexed(100, |i| i * 2);
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_override_matches_parallel() {
        let a = map_indexed(1000, |i| (i as f64).sin());
        force_sequential(true);
        let b = map_indexed(1000, |i| (i as f64).sin());
        force_sequential(false);
        assert_eq!(a, b);
    }
}
