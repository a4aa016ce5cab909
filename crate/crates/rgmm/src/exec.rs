//! Index-ordered execution of independent work items.
//!
//! With the `parallel` feature (default) the work is distributed over the
//! rayon thread pool; results are always collected in index order, so callers
//! that seed one RNG stream per index produce identical output either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Runs `f` for every index in `0..n` and collects the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential counterpart of [`map_indexed`], kept available regardless of
/// features so benchmarks can compare both paths.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let par = map_indexed(100, |i| i * i);
        let seq = map_indexed_seq(100, |i| i * i);
        assert_eq!(par, seq);
    }

    #[test]
    fn empty_range() {
        let out: Vec<usize> = map_indexed(0, |i| i);
        assert!(out.is_empty());
    }
}
