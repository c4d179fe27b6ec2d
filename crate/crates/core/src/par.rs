//! Data-parallel helpers with a deterministic sequential fallback.
//!
//! With the `parallel` feature the helpers fan out over rayon's pool;
//! without it (or inside [`sequential`]) they run on the calling thread.
//! Either way the output order and every floating-point reduction are
//! fixed by the input index, so results are bit-identical across
//! thread counts.

use std::cell::Cell;
use std::ops::Add;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every helper in this module forced onto the calling thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    struct Reset(bool);
    impl Drop for Reset {
        fn drop(&mut self) {
            FORCE_SEQUENTIAL.with(|c| c.set(self.0));
        }
    }
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let _reset = Reset(prev);
    f()
}

/// Whether helpers called from this thread will fan out.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

const LEAF: usize = 32;

/// Pairwise tree reduction over `values` in index order.
///
/// The tree shape depends only on `values.len()`, so the result does not
/// depend on how (or whether) the terms were computed in parallel.
pub fn tree_sum<T>(values: &[T], zero: T) -> T
where
    T: Copy + Add<Output = T>,
{
    if values.len() <= LEAF {
        return values.iter().fold(zero, |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    tree_sum(&values[..mid], zero) + tree_sum(&values[mid..], zero)
}
