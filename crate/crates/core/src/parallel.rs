//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper partitions work into fixed, index-ordered units (rows, lags,
//! chunks) and merges results in that order, so outputs are bit-identical
//! whether the `parallel` feature is enabled or not, and independent of the
//! rayon thread count.

/// Map `0..n` to a vector, preserving index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Fill disjoint rows of a row-major buffer. `f(y, row)` writes row `y`.
#[cfg(feature = "parallel")]
pub(crate) fn fill_rows<F>(values: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| f(y, row));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn fill_rows<F>(values: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    for (y, row) in values.chunks_mut(width).enumerate() {
        f(y, row);
    }
}

/// Per-row partial results summed in row order (deterministic reduction).
pub(crate) fn sum_rows<F>(height: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indexed(height, f).into_iter().sum()
}
