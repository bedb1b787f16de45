//! Deterministic PRNG: xoshiro256++ seeded through SplitMix64.
//!
//! The generator is fixed across platforms; the platform default RNG is
//! never used. Identical seeds produce identical streams, which makes
//! initialization, dropout masks, batch shuffles, and loss-weight draws
//! fully reproducible.

use crate::error::{Error, Result};

/// xoshiro256++ state. Construct with [`RngState::seed`]; derive
/// independent streams for parallel consumers with [`RngState::split`].
#[derive(Debug, Clone, PartialEq)]
pub struct RngState {
    s: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    /// Expands a 64-bit seed into the full 256-bit state via SplitMix64.
    pub fn seed(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        RngState { s }
    }

    /// xoshiro256++ next().
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Derives an independently seeded stream and advances this one.
    pub fn split(&mut self) -> RngState {
        RngState::seed(self.next_u64())
    }

    /// Uniform draw in `[lo, hi)`. Requires `lo < hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Domain(format!(
                "uniform range requires lo < hi, got [{lo}, {hi})"
            )));
        }
        // 53 high bits -> [0, 1) on a 2^-53 grid.
        let u = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let v = lo + u * (hi - lo);
        // Rounding can land exactly on hi for extreme ranges; clamp below it.
        if v >= hi {
            Ok(prev_toward_lo(hi))
        } else {
            Ok(v)
        }
    }

    /// Standard normal via Box-Muller (two uniforms per draw).
    pub fn normal(&mut self) -> f64 {
        loop {
            let u1 = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let u2 = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u1 > 0.0 {
                let r = (-2.0 * u1.ln()).sqrt();
                return r * (2.0 * std::f64::consts::PI * u2).cos();
            }
        }
    }

    /// Uniform index in `[0, n)` via widening multiply.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Largest f64 strictly below `x` (for positive finite `x`), used to keep
/// uniform draws inside a half-open interval.
fn prev_toward_lo(x: f64) -> f64 {
    if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngState::seed(7);
        let mut b = RngState::seed(7);
        for _ in 0..100 {
            assert_eq!(
                a.uniform(0.0, 1.0).unwrap(),
                b.uniform(0.0, 1.0).unwrap()
            );
        }
    }

    #[test]
    fn uniform_stays_in_range() {
        let mut rng = RngState::seed(3);
        for _ in 0..10_000 {
            let v = rng.uniform(0.0, 1.0).unwrap();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn uniform_rejects_bad_range() {
        let mut rng = RngState::seed(3);
        assert!(rng.uniform(1.0, 1.0).is_err());
        assert!(rng.uniform(2.0, 1.0).is_err());
    }

    #[test]
    fn uniform_mean_matches_moments() {
        let mut rng = RngState::seed(12345);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| rng.uniform(0.0, 1.0).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn split_streams_differ() {
        let mut a = RngState::seed(9);
        let mut b = a.split();
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngState::seed(77);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = RngState::seed(5);
        let mut xs: Vec<usize> = (0..100).collect();
        rng.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }
}
