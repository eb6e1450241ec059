//! Execution strategy for the data-parallel inner loops.
//!
//! Every parallel stage partitions its work into fixed-size blocks whose
//! boundaries do not depend on the thread count, and partial results are
//! combined in block order. Sequential and parallel runs are therefore
//! bitwise identical.

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

/// Rows per block for row-partitioned stages.
pub const ROW_BLOCK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled; otherwise
    /// identical to `Sequential`.
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

impl Execution {
    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Map `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Apply `f` to consecutive row blocks of `data` (block index, block view).
    pub fn map_row_blocks<R, F>(self, data: ArrayView2<'_, f64>, f: F) -> Vec<R>
    where
        R: Send,
        F: for<'b> Fn(usize, ArrayView2<'b, f64>) -> R + Sync + Send,
    {
        let blocks: Vec<(usize, ArrayView2<'_, f64>)> = data
            .axis_chunks_iter(Axis(0), ROW_BLOCK)
            .enumerate()
            .collect();
        self.map(&blocks, |(i, b)| f(*i, b.view()))
    }

    /// Fill consecutive row blocks of `out` in place (block index, block view).
    pub fn for_each_row_block_mut<F>(self, out: &mut Array2<f64>, f: F)
    where
        F: for<'b> Fn(usize, ArrayViewMut2<'b, f64>) + Sync + Send,
    {
        let blocks: Vec<(usize, ArrayViewMut2<'_, f64>)> = out
            .axis_chunks_iter_mut(Axis(0), ROW_BLOCK)
            .enumerate()
            .collect();
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                blocks.into_par_iter().for_each(|(i, b)| f(i, b));
            }
            _ => blocks.into_iter().for_each(|(i, b)| f(i, b)),
        }
    }
}
