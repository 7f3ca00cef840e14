//! Execution strategy for the data-parallel inner loops.
//!
//! With the `parallel` feature (on by default) [`Exec::Par`] dispatches to
//! rayon. Without it every call runs sequentially. Results are always
//! collected in index order, so both strategies produce bit-identical
//! outputs; reductions over the mapped values are done by the caller in a
//! fixed order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a data-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Seq,
    /// Falls back to [`Exec::Seq`] when built without the `parallel` feature.
    Par,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Par
        } else {
            Exec::Seq
        }
    }
}

impl Exec {
    /// True when this strategy will actually use worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Par
    }

    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Par {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps `f` over a slice, returning results in slice order.
    pub fn map<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Par {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Runs `f` on each `chunk`-sized mutable piece of `data`, passing the chunk index.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        if chunk == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        if self == Exec::Par {
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}
