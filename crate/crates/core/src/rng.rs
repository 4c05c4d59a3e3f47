//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed and positioned
//! on one of its 2^64 independent 64-bit stream ids. Draws on one stream id
//! never overlap another, so replication `r` of an experiment reads the same
//! numbers whether 1 or 1000 replications are scheduled.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LsosError, Result};

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer, used to derive child keys.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives an independent stream for a named purpose (noise, starting
    /// point, batch order, ...). The child depends only on `(seed, stream_id,
    /// tag)`, never on how many numbers the parent has produced.
    pub fn fork(&self, tag: u64) -> RngStream {
        RngStream::new(mix64(self.seed ^ mix64(tag.wrapping_add(1))), self.stream_id)
    }

    /// One draw from N(mean, stddev).
    pub fn gaussian(&mut self, mean: f64, stddev: f64) -> Result<f64> {
        if !(stddev >= 0.0) || !stddev.is_finite() {
            return Err(LsosError::invalid(
                "stddev",
                format!("must be finite and non-negative, got {stddev}"),
            ));
        }
        if stddev == 0.0 {
            return Ok(mean);
        }
        Ok(mean + stddev * self.standard_normal())
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `k` distinct indices drawn uniformly from `0..n`, in random order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k.min(n)).into_vec()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Convenience constructor mirroring the stream contract.
pub fn new_rng_stream(seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(seed, stream_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_draws(rng: &mut RngStream, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.standard_normal()).collect()
    }

    #[test]
    fn same_key_same_draws() {
        let a = first_draws(&mut RngStream::new(42, 0), 100);
        let b = first_draws(&mut RngStream::new(42, 0), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_stream_ids_differ() {
        let a = RngStream::new(42, 0).standard_normal();
        let b = RngStream::new(42, 1).standard_normal();
        assert_ne!(a, b);
    }

    #[test]
    fn stream_unaffected_by_other_streams() {
        let reference = first_draws(&mut RngStream::new(42, 7), 50);
        let mut others: Vec<_> = (0..7).map(|s| RngStream::new(42, s)).collect();
        for o in &mut others {
            first_draws(o, 1000);
        }
        let again = first_draws(&mut RngStream::new(42, 7), 50);
        assert_eq!(reference, again);
    }

    #[test]
    fn fork_ignores_parent_position() {
        let parent = RngStream::new(3, 9);
        let mut advanced = parent.clone();
        first_draws(&mut advanced, 10);
        let a = first_draws(&mut parent.fork(5), 10);
        let b = first_draws(&mut advanced.fork(5), 10);
        assert_eq!(a, b);
        assert_ne!(a, first_draws(&mut parent.fork(6), 10));
    }

    #[test]
    fn degenerate_gaussian_returns_mean() {
        let mut rng = RngStream::new(1, 1);
        assert_eq!(rng.gaussian(3.0, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn negative_stddev_rejected() {
        let mut rng = RngStream::new(1, 1);
        assert!(matches!(
            rng.gaussian(0.0, -1.0),
            Err(LsosError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = RngStream::new(2024, 0);
        let k = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..k {
            sum += rng.gaussian(0.0, 1.0).unwrap();
        }
        assert!((sum / k as f64).abs() < 0.005);

        let sigma = 0.1;
        let draws: Vec<f64> = (0..k).map(|_| rng.gaussian(0.0, sigma).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / k as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        assert!((var / 0.01 - 1.0).abs() < 0.03, "variance {var}");
    }
}
