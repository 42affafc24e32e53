//! Data-parallel helpers over index ranges.
//!
//! With the `parallel` feature (default) these run on the rayon global pool;
//! without it they fall back to plain sequential iterators. Both paths visit
//! the same indices and reduce with the same associative operations, so
//! results are bitwise identical either way.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Ranges shorter than this are always evaluated sequentially.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_LEN: usize = 4096;

pub fn map_collect<T, F>(range: Range<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if range.len() >= MIN_PARALLEL_LEN {
            return range.into_par_iter().map(f).collect();
        }
    }
    range.map(f).collect()
}

/// Map a slice of inputs, preserving order.
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if items.len() > 1 {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Minimum of `f` over the range (NaN-free inputs assumed). `f64::INFINITY` for
/// an empty range.
pub fn min_f64<F>(range: Range<usize>, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if range.len() >= MIN_PARALLEL_LEN {
            return range.into_par_iter().map(f).reduce(|| f64::INFINITY, f64::min);
        }
    }
    range.map(f).fold(f64::INFINITY, f64::min)
}

/// Maximum of `f` over the range; `f64::NEG_INFINITY` for an empty range.
pub fn max_f64<F>(range: Range<usize>, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if range.len() >= MIN_PARALLEL_LEN {
            return range
                .into_par_iter()
                .map(f)
                .reduce(|| f64::NEG_INFINITY, f64::max);
        }
    }
    range.map(f).fold(f64::NEG_INFINITY, f64::max)
}

/// Configure the global pool from `RIS_SIM_THREADS`, if set. Safe to call more
/// than once; later calls are ignored.
pub fn init_from_env() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(v) = std::env::var("RIS_SIM_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n > 0 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reductions_match_sequential() {
        let f = |i: usize| ((i as f64) * 0.37).sin();
        let seq_min = (0..10_000).map(f).fold(f64::INFINITY, f64::min);
        let seq_max = (0..10_000).map(f).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(min_f64(0..10_000, f), seq_min);
        assert_eq!(max_f64(0..10_000, f), seq_max);
        assert_eq!(map_collect(0..10_000, f), (0..10_000).map(f).collect::<Vec<_>>());
        assert_eq!(min_f64(0..0, f), f64::INFINITY);
    }
}
