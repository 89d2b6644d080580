//! Ordered map over a batch of independent inputs.
//!
//! Sweep points, weight grids, and test instance batches are evaluated
//! through [`map_ordered`], which runs on rayon when the `parallel` feature
//! is enabled and falls back to a plain iterator otherwise. Output order
//! always matches input order, so both paths produce identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    map_ordered_seq(items, f)
}

/// Sequential twin of [`map_ordered`], always available. Benches compare
/// the two; tests use it to pin down that parallel evaluation does not
/// change results.
pub fn map_ordered_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
