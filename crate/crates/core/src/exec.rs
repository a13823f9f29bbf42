//! Execution policy for path-level and node-level loops.
//!
//! `Exec::Parallel` uses rayon when the `parallel` feature is enabled and
//! silently runs sequentially otherwise. Reductions go through
//! [`Exec::map_blocks`], which fixes the block partition and combines the
//! partials in index order, so the two policies produce identical bits.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed reduction block size (paths or grid rows per partial sum).
pub const BLOCK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Calls `f(chunk_index, chunk)` on consecutive `chunk_len` chunks of `data`.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        assert!(chunk_len > 0);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
    }

    /// `f(i)` for `i in 0..n`, collected in index order.
    pub fn map<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Applies `f` to the fixed blocks `[0, BLOCK), [BLOCK, 2 BLOCK), ...` of
    /// `0..n` and returns the partial results in block order.
    pub fn map_blocks<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(Range<usize>) -> R + Sync + Send,
    {
        let nblocks = n.div_ceil(BLOCK);
        self.map(nblocks, |b| f(b * BLOCK..((b + 1) * BLOCK).min(n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocked_sum_matches_across_policies() {
        let v: Vec<f64> = (0..10_000).map(|i| (i as f64).sin() * 1e-3).collect();
        let sum = |e: Exec| -> f64 { e.map_blocks(v.len(), |r| v[r].iter().sum::<f64>()).into_iter().sum() };
        assert_eq!(sum(Exec::Sequential).to_bits(), sum(Exec::Parallel).to_bits());
    }

    #[test]
    fn chunk_indices_are_ordered() {
        let mut v = vec![0usize; 103];
        Exec::Parallel.for_each_chunk_mut(&mut v, 10, |i, c| c.iter_mut().for_each(|x| *x = i));
        assert_eq!(v[0], 0);
        assert_eq!(v[102], 10);
    }
}
