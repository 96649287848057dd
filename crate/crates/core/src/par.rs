//! Index-parallel maps with a sequential fallback.
//!
//! Every parallel loop in the solvers is a map over disjoint indices whose
//! results are collected in index order, so both modes produce identical
//! output. Without the `parallel` feature, [`Execution::Parallel`] runs
//! sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly across threads.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Index of the first element of `0..n` satisfying `pred`, scanning in order.
pub fn find_first<F>(exec: Execution, n: usize, pred: F) -> Option<usize>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().find_first(|&i| pred(i));
        }
    }
    let _ = exec;
    (0..n).find(|&i| pred(i))
}
