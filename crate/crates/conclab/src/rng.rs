//! Seeded random streams.
//!
//! Every stochastic routine in this crate derives its generator from a user
//! seed plus a path of indices (trial number, grid position, ...). Parallel
//! loops hand each work item its own substream, so results do not depend on
//! scheduling or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; good avalanche for seed derivation.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic substream for `(seed, path)`.
///
/// Distinct paths yield independent-looking streams; identical inputs yield
/// identical streams on every platform.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0x6a09e667f3bcc908;
    let mut key = [0u8; 32];
    let mut words = [0u64; 4];
    words[0] = splitmix64(&mut state);
    for &idx in path {
        state ^= idx.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(1);
        words[1] = words[1].wrapping_add(splitmix64(&mut state));
    }
    words[2] = splitmix64(&mut state);
    words[3] = splitmix64(&mut state);
    for (chunk, word) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Kahan-compensated accumulator for order-stable means.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}
