//! Counter-based random streams.
//!
//! Every random quantity in the lab is addressed by a key derived from a
//! master seed and a tuple of integer coordinates (trial index, matrix entry,
//! sub-stream). The stream for a key is SplitMix64 started at that key, so a
//! draw depends only on its address and never on scheduling order.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hash a parent seed with one coordinate.
#[inline]
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(mix64(parent ^ GOLDEN).wrapping_add(index.wrapping_mul(GOLDEN) ^ 0x2545_F491_4F6C_DD1D))
}

/// Key for matrix entry `(i, j)` with `i <= j`.
#[inline]
pub fn entry_key(seed: u64, i: usize, j: usize) -> u64 {
    derive_seed(derive_seed(seed, i as u64), j as u64)
}

/// Seed of trial `index` under `master`.
#[inline]
pub fn trial_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, index)
}

/// An infinite stream addressed by a key.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn for_entry(seed: u64, i: usize, j: usize) -> Self {
        Self::new(entry_key(seed, i, j))
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
