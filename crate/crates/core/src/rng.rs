//! Seeded random streams.
//!
//! A stream is a ChaCha8 generator keyed by `(seed, stream id)`. Helper
//! methods count how many values of each kind were drawn so tests can
//! check the single-`Λ` contract.

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Draw counters, updated by the [`RngStream`] helpers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DrawCounts {
    pub lambda: u64,
    pub uniform: u64,
    pub normal: u64,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
    counts: DrawCounts,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream {
            seed,
            stream,
            inner,
            counts: DrawCounts::default(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    pub fn counts(&self) -> DrawCounts {
        self.counts
    }

    /// The iteration's coupling variate, uniform on the open interval (0, 1).
    pub fn draw_lambda(&mut self) -> f64 {
        self.counts.lambda += 1;
        Open01.sample(&mut self.inner)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.counts.uniform += 1;
        self.inner.random::<f64>()
    }

    /// Uniform on [lo, hi). Returns `lo` exactly when `lo == hi`, but still
    /// consumes a draw so the stream layout does not depend on the range.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.uniform();
        lo + (hi - lo) * u
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index(0)");
        self.counts.uniform += 1;
        self.inner.random_range(0..n)
    }

    /// +1 or -1 with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.uniform() < 0.5 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        self.counts.normal += 1;
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.normal()).collect()
    }
}
