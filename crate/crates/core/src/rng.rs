//! Deterministic, splittable random streams.
//!
//! A [`SeededRng`] is a ChaCha8 keystream. The 256-bit key is expanded from
//! the 64-bit seed with four SplitMix64 steps and the ChaCha stream id is set
//! to the caller's stream number, so `(seed, stream)` pairs address
//! non-overlapping sequences. Floats are built from the top 53 bits of each
//! 64-bit word; standard normals use inversion with Wichura's AS241
//! (`PPND16`) rational approximation. Nothing here depends on the platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::special::normal_quantile;

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reproducible random stream addressed by `(seed, stream)`.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent child stream of the same seed. The child's stream id is a
    /// SplitMix64 hash of `(stream, sub)`; it does not consume draws from `self`.
    pub fn derive(&self, sub: u64) -> SeededRng {
        let mut state = self.stream ^ sub.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        SeededRng::new(self.seed, splitmix64(&mut state))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_NEG_53
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * TWO_POW_NEG_53
    }

    /// Uniform on `[lo, hi]`; returns `lo` when the range is degenerate.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw by inversion.
    pub fn standard_normal(&mut self) -> f64 {
        normal_quantile(self.uniform_open())
    }

    /// Uniform index in `0..n` by rejection on the top bits.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
