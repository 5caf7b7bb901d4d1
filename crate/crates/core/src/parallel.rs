//! Execution strategy for data-parallel loops.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] fans
//! work out over the rayon pool. Without it every strategy runs sequentially.
//! Results are always returned in input order, so outputs never depend on the
//! strategy.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Concurrency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Downgrades to sequential when parallelism is compiled out.
    pub fn effective(self) -> Execution {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }

    /// Parallel only if the scorer may be called concurrently.
    pub fn for_scorer(self, concurrency: Concurrency) -> Execution {
        match concurrency {
            Concurrency::Concurrent => self.effective(),
            Concurrency::Serial => Execution::Sequential,
        }
    }

    pub fn is_parallel(self) -> bool {
        self.effective() == Execution::Parallel
    }
}

/// Fallible ordered map.
pub fn try_map<T, R, F>(exec: Execution, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Fallible ordered map over fixed-size chunks, flattened.
pub fn try_map_chunks<T, R, F>(exec: Execution, items: &[T], chunk: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> Result<Vec<R>> + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        let parts: Vec<Vec<R>> = items.par_chunks(chunk).map(f).collect::<Result<_>>()?;
        return Ok(parts.into_iter().flatten().collect());
    }
    let _ = exec;
    let mut out = Vec::with_capacity(items.len());
    for part in items.chunks(chunk) {
        out.extend(f(part)?);
    }
    Ok(out)
}
