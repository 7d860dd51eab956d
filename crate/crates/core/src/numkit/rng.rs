//! Seeded random streams.
//!
//! A stream is ChaCha20 keyed by a 64-bit seed. Named substreams select a
//! different ChaCha stream id for the same key, so components drawing from
//! `"sim-noise"` and `"init"` never overlap and can be reseeded independently.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Identifier recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha20";

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
}

/// FNV-1a, used only to turn substream names into stream ids.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    /// Independent stream derived from this one's seed and `name`.
    pub fn substream(&self, name: &str) -> Self {
        let mut key = self.stream.to_le_bytes().to_vec();
        key.extend_from_slice(name.as_bytes());
        Self::with_stream(self.seed, fnv1a(&key))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal_with(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.normal()
    }

    /// Uniform index in 0..n.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
