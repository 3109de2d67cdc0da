//! Seedable, stream-splittable random number generation.
//!
//! Every stochastic routine in this crate draws from an [`RngStream`]:
//! a ChaCha12 generator addressed by `(seed, stream_id)`. Identical
//! addresses reproduce identical variate sequences; distinct stream ids
//! give independent streams, so replicates and chains can run
//! concurrently without sharing state.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

const MANTISSA_SCALE: f64 = 1.0 / (1u64 << 53) as f64;

/// A deterministic random stream addressed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream derived from this stream's seed and a new id.
    pub fn substream(&self, stream_id: u64) -> Self {
        RngStream::new(self.seed, stream_id)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * MANTISSA_SCALE
    }

    /// Uniform draw on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Position of the generator in its stream, for checkpointing.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Restore a position previously obtained from [`word_pos`](Self::word_pos).
    pub fn set_word_pos(&mut self, pos: u128) {
        self.rng.set_word_pos(pos);
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Mixes study coordinates into a 64-bit row seed (splitmix64 finalizer).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}
