//! Halton low-discrepancy points.

use crate::space::Genome;

/// Radical inverse of `index` in `base`: the base-`base` digits of `index`
/// mirrored about the radix point.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut scale = inv_base;
    let mut acc = 0.0;
    while index > 0 {
        acc += (index % base) as f64 * scale;
        index /= base;
        scale *= inv_base;
    }
    acc
}

/// The first `n` primes.
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| !candidate.is_multiple_of(p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Halton point number `index` (1-based) in `dim` dimensions, using the first
/// `dim` primes as bases.
pub fn point(index: u64, dim: usize) -> Genome {
    Genome::from_unit(first_primes(dim).into_iter().map(|b| radical_inverse(index, b)).collect())
}
