//! Deterministic reductions.
//!
//! Every grid sum in the crate goes through [`pairwise`] (a fixed binary
//! tree over an index range) and [`rows`] (one pairwise sum per grid row,
//! then a pairwise sum over the row partials). The tree depends only on the
//! range lengths, so results are bit-identical for any thread count.

use std::ops::Add;

use num_traits::Zero;
use rayon::prelude::*;

const LEAF: usize = 16;

/// Anything that can be summed by the reductions (real or complex scalars).
pub trait Summand: Copy + Send + Zero + Add<Output = Self> {}

impl<S: Copy + Send + Zero + Add<Output = S>> Summand for S {}

/// Pairwise sum of `f(i)` for `i` in `lo..hi`.
pub fn pairwise<T: Summand>(lo: usize, hi: usize, f: &impl Fn(usize) -> T) -> T {
    let n = hi - lo;
    if n <= LEAF {
        let mut acc = T::zero();
        for i in lo..hi {
            acc = acc + f(i);
        }
        acc
    } else {
        let mid = lo + n / 2;
        pairwise(lo, mid, f) + pairwise(mid, hi, f)
    }
}

/// Pairwise sum of a slice.
pub fn pairwise_slice<T: Summand>(xs: &[T]) -> T {
    pairwise(0, xs.len(), &|i| xs[i])
}

/// `Σ_{r in rows} Σ_{c in cols} f(r, c)`; rows may be evaluated in parallel.
pub fn rows<T: Summand>(
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    f: impl Fn(usize, usize) -> T + Sync,
) -> T {
    let partials: Vec<T> = rows.into_par_iter().map(|r| pairwise(cols.start, cols.end, &|c| f(r, c))).collect();
    pairwise_slice(&partials)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_integer_sum() {
        let s: f64 = pairwise(0, 1000, &|i| i as f64);
        assert_eq!(s, 499_500.0);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let f = |r: usize, c: usize| ((r * 7919 + c * 104_729) as f64).sin() * 1e-3 + 1.0 / (1.0 + c as f64);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| rows(0..301, 0..257, f));
        let b = four.install(|| rows(0..301, 0..257, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
