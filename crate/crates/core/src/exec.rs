//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] fans work
//! out over rayon's pool; without it every call runs on the current thread.
//! Results are identical either way: work is split into fixed units whose
//! outputs are combined in a fixed order.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Execution, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}

/// Sums `f(i)` over `range`.
pub fn sum<F>(exec: Execution, range: Range<u64>, f: F) -> u64
where
    F: Fn(u64) -> u64 + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            range.into_par_iter().map(f).sum()
        }
        _ => range.map(f).sum(),
    }
}

/// Concatenates `f(i)` over `range` in index order.
pub fn flat_map<R, F>(exec: Execution, range: Range<u64>, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> Vec<R> + Sync + Send,
{
    map(exec, range.collect(), f).into_iter().flatten().collect()
}
