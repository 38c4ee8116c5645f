//! Batch execution helpers.
//!
//! Every batch entry point in the crate (curve sweeps, β batches, controller
//! comparisons, series tables) funnels through [`map_indexed`] so the choice
//! between rayon and a plain loop lives in one place. Without the `parallel`
//! feature, [`Mode::Parallel`] silently degrades to the sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

impl Default for Mode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Mode::Parallel
        } else {
            Mode::Sequential
        }
    }
}

/// Evaluates `f(0..n)` and collects results in index order.
pub fn map_indexed<R, F>(n: usize, mode: Mode, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Maps over a slice, preserving order.
pub fn map_slice<T, R, F>(items: &[T], mode: Mode, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_indexed(items.len(), mode, |i| f(&items[i]))
}
