//! Execution policy for site loops and grid sweeps.
//!
//! Every parallel path writes into pre-sized output buffers or collects in
//! input order, and every reduction is done sequentially in index order, so
//! results do not depend on the thread count or on how work is partitioned.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sites handled per rayon task in lattice kernels. Windows smaller than
/// this run on the calling thread.
pub const SITE_CHUNK: usize = 2048;

/// How data-parallel loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon work-stealing. Falls back to sequential when the crate is built
    /// without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    /// True when this policy actually dispatches to rayon.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Fills `out[i] = f(i)` for every index.
    pub fn fill_indexed<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && out.len() > SITE_CHUNK {
            out.par_chunks_mut(SITE_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    let base = c * SITE_CHUNK;
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        *slot = f(base + j);
                    }
                });
            return;
        }
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }

    /// Applies `f(i, &mut out[i])` to every element.
    pub fn update_indexed<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && out.len() > SITE_CHUNK {
            out.par_chunks_mut(SITE_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    let base = c * SITE_CHUNK;
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        f(base + j, slot);
                    }
                });
            return;
        }
        for (i, slot) in out.iter_mut().enumerate() {
            f(i, slot);
        }
    }

    /// Maps grid cells, returning results in input order.
    pub fn map<I, T, F>(self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

/// Sums in index order. Kept separate from any parallel path so the
/// reduction order is fixed.
pub fn ordered_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    terms.into_iter().fold(0.0, |acc, x| acc + x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_matches_across_policies() {
        let n = 3 * SITE_CHUNK + 17;
        let mut a = vec![0.0f64; n];
        let mut b = vec![0.0f64; n];
        Execution::Sequential.fill_indexed(&mut a, |i| (i as f64).sin());
        Execution::Parallel.fill_indexed(&mut b, |i| (i as f64).sin());
        assert_eq!(a, b);
    }

    #[test]
    fn map_preserves_order() {
        let items: Vec<u32> = (0..100).collect();
        let out = Execution::Parallel.map(&items, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
