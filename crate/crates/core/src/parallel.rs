//! Data-parallel map with a sequential fallback.
//!
//! Work is cut into fixed-size chunks independent of the thread count, and
//! per-chunk results come back in chunk order, so any reduction the caller does
//! over them is the same with or without rayon.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when the `parallel` feature is off.
    #[default]
    Parallel,
}

/// Maps `f` over `items` in chunks of `chunk` and returns results in chunk order.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_chunks(chunk).enumerate().map(|(i, c)| f(i * chunk, c)).collect()
        }
        _ => items.chunks(chunk).enumerate().map(|(i, c)| f(i * chunk, c)).collect(),
    }
}

/// Element-wise map preserving order.
pub fn map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
