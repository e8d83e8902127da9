//! Fixed-order reductions.
//!
//! Statistics that must be reproducible bit-for-bit go through
//! [`pairwise_sum`], whose association order depends only on the slice length.

const LEAF: usize = 8;

/// Pairwise (tree) summation: the slice is split at `len / 2` recursively and
/// leaves of at most eight elements are summed left to right.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i` in `0..n`, with the same association order
/// as [`pairwise_sum`] over the materialized values.
pub fn pairwise_sum_by<F: Fn(usize) -> f64 + Copy>(start: usize, n: usize, f: F) -> f64 {
    if n <= LEAF {
        let mut acc = 0.0;
        for i in start..start + n {
            acc += f(i);
        }
        return acc;
    }
    let mid = n / 2;
    pairwise_sum_by(start, mid, f) + pairwise_sum_by(start + mid, n - mid, f)
}

/// Mean and population variance with pairwise reductions.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(values) / n as f64;
    let var = pairwise_sum_by(0, n, |i| {
        let d = values[i] - mean;
        d * d
    }) / n as f64;
    (mean, var)
}

/// Mean and population variance of a value multiset: the values are sorted
/// first so any rearrangement of the same values yields identical bits.
pub fn multiset_mean_variance(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    mean_variance(&sorted)
}
