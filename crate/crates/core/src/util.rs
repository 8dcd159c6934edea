//! Small numeric helpers shared across modules.

use num_complex::Complex64;

/// Pairwise (cascade) summation of complex values: deterministic for a fixed
/// input order and much better conditioned than a running sum.
pub fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    match values.len() {
        0 => Complex64::default(),
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Pairwise summation of reals.
pub fn pairwise_sum_f64(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum_f64(&values[..mid]) + pairwise_sum_f64(&values[mid..])
        }
    }
}

/// Index of `i` with its bits reversed within a word of `bits` bits.
/// Used as a deterministic spatial scrambling for apportionment tie-breaks.
pub fn bit_reverse(i: usize, bits: u32) -> usize {
    let mut out = 0usize;
    for b in 0..bits {
        if i & (1 << b) != 0 {
            out |= 1 << (bits - 1 - b);
        }
    }
    out
}

/// Deterministic permutation of `0..n` spreading neighbors far apart:
/// bit-reversal over the next power of two, skipping out-of-range values.
pub fn scrambled_order(n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let bits = usize::BITS - (n - 1).leading_zeros().max(0);
    let bits = bits.max(1);
    let mut order = Vec::with_capacity(n);
    for i in 0..(1usize << bits) {
        let r = bit_reverse(i, bits);
        if r < n {
            order.push(r);
        }
    }
    order
}
