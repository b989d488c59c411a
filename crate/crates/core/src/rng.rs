//! Seeded, platform-independent random streams.
//!
//! Every stochastic step (initialization, dropout, noise, shuffling,
//! mutation) draws from a [`RngState`] derived from a base seed and a
//! stream id, so the same seed and call sequence give the same draws
//! everywhere.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const ALGORITHM: &str = "chacha8";

/// Stream ids separating independent consumers of one seed.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const MUTATE: u64 = 3;
    pub const ATTRIBUTES: u64 = 4;
    pub const SYNTH: u64 = 5;
    pub const DROPOUT: u64 = 6;
    pub const NOISE: u64 = 7;
}

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` of `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    /// Sub-stream keyed by an arbitrary path of indices, e.g. (epoch, sample).
    pub fn derive(seed: u64, stream: u64, path: &[u64]) -> Self {
        // splitmix64 fold of the path into the seed
        let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
        for &p in path {
            s = splitmix(s.wrapping_add(p.wrapping_mul(0xBF58_476D_1CE4_E5B9)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        ALGORITHM
    }

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
