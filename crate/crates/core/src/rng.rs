//! Random streams and seed splitting.
//!
//! Every stochastic component draws from [`SimRng`] (xoshiro256++). Streams
//! are derived from one 64-bit master seed with [`derive_seed`], so a replica
//! ensemble is reproducible regardless of how replicas are scheduled.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`:
/// `splitmix64(master + (index + 1) * 0x9E3779B97F4A7C15)` (wrapping).
///
/// For a fixed master the map `index -> seed` is injective: the golden gamma
/// is odd, so the pre-images are distinct mod 2^64, and the finalizer is a
/// bijection.
#[inline]
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Uniform on `[0, 1)` with 53 random bits: `(x >> 11) * 2^-53`.
#[inline]
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Exponential waiting time by inverse CDF: `-ln(1 - u) / rate` with `u` from
/// [`unit_f64`]. `1 - u` lies in `(0, 1]`, so the result is finite.
#[inline]
pub fn exp_waiting<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -(1.0 - unit_f64(rng)).ln() / rate
}

/// Uniform index in `0..n` by 128-bit multiply with rejection (Lemire).
#[inline]
pub fn uniform_index<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    debug_assert!(n > 0);
    let threshold = n.wrapping_neg() % n;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: HashSet<u64> = (0..100_000).map(|r| derive_seed(42, r)).collect();
        assert_eq!(seeds.len(), 100_000);
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = rng_from_seed(7);
        let mut b = rng_from_seed(7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn exponential_mean_matches_rate() {
        let mut rng = rng_from_seed(3);
        let n = 200_000;
        let rate = 2.5;
        let mean: f64 = (0..n).map(|_| exp_waiting(&mut rng, rate)).sum::<f64>() / n as f64;
        // sd of the mean is 1 / (rate sqrt(n))
        assert!((mean - 1.0 / rate).abs() < 5.0 / (rate * (n as f64).sqrt()));
    }

    #[test]
    fn uniform_index_covers_range() {
        let mut rng = rng_from_seed(11);
        let mut counts = [0usize; 7];
        for _ in 0..70_000 {
            counts[uniform_index(&mut rng, 7) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 500.0);
        }
    }
}
