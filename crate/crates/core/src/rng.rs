//! Deterministic random streams.
//!
//! Every stream is ChaCha8 keyed by a 64-bit seed and addressed by a 64-bit
//! stream id, so independent work items (one image, one clustering restart)
//! draw from their own stream regardless of scheduling order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Prng {
    inner: ChaCha8Rng,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Derives a seed for a named sub-task from a parent seed.
    pub fn derive_seed(seed: u64, tag: u64) -> u64 {
        Self::with_stream(seed, tag ^ 0x9E37_79B9_7F4A_7C15).next_u64()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen output of stream 0 for seed 0. Changing the generator breaks
    // every committed experiment, so this must never be edited casually.
    const GOLDEN_SEED0: [u64; 16] = include!("../tests/data/prng_seed0.txt");

    #[test]
    fn seed_zero_matches_golden() {
        let mut rng = Prng::new(0);
        let got: Vec<u64> = (0..16).map(|_| rng.next_u64()).collect();
        assert_eq!(got, GOLDEN_SEED0);
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: Vec<u64> = {
            let mut r = Prng::with_stream(7, 1);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Prng::with_stream(7, 2);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let a2: Vec<u64> = {
            let mut r = Prng::with_stream(7, 1);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn uniform_is_in_unit_interval() {
        let mut r = Prng::new(3);
        for _ in 0..1000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
