//! Execution strategy for the data-parallel loops (chain validation, scenario sweeps,
//! batch audits). With the `parallel` feature the default is rayon; without it every
//! loop runs on the calling thread.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Exec::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
        }
    }

    /// Maps `f` over an index range, preserving order.
    pub fn map_range<R, F>(self, range: Range<u64>, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(u64) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => range.map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => range.into_par_iter().map(f).collect(),
        }
    }

    /// Lowest index in `0..len` for which `f` returns `Some`, with that value.
    pub fn find_first<R, F>(self, len: usize, f: F) -> Option<(usize, R)>
    where
        R: Send,
        F: Fn(usize) -> Option<R> + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..len).find_map(|i| f(i).map(|r| (i, r))),
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..len).into_par_iter().filter_map(|i| f(i).map(|r| (i, r))).find_first(|_| true),
        }
    }
}
