//! Splittable, counter-based randomness.
//!
//! A [`RngKey`] is a 256-bit state plus the label path that produced it.
//! Children are derived by keying ChaCha12 with the parent state and selecting
//! the ChaCha stream by label, so derivation is a pure function of
//! `(state, label)` and never depends on evaluation order or thread count.
//! Sample streams are ChaCha8 keyed by the state.
//!
//! All integer-to-float conversions are exact; transcendental functions come
//! from the platform libm, so samples that pass through `ln`/`exp` may differ in
//! the last ulp across platforms. Within one platform outputs are bit-identical.

use rand::{RngCore, SeedableRng};
use rand_chacha::{ChaCha12Rng, ChaCha8Rng};

use crate::error::Result;
use crate::sample;

/// Random stream produced by a key.
pub type KeyStream = ChaCha8Rng;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RngKey {
    state: [u8; 32],
    path: Vec<u64>,
}

impl std::fmt::Debug for RngKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RngKey({}, path={:?})", hex::encode(&self.state[..8]), self.path)
    }
}

impl RngKey {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut state = [0u8; 32];
        rng.fill_bytes(&mut state);
        RngKey {
            state,
            path: Vec::new(),
        }
    }

    pub fn child(&self, label: u64) -> Self {
        let mut rng = ChaCha12Rng::from_seed(self.state);
        rng.set_stream(label);
        let mut state = [0u8; 32];
        rng.fill_bytes(&mut state);
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(label);
        RngKey { state, path }
    }

    /// Child keyed by a textual label (hashed with FNV-1a).
    pub fn child_named(&self, name: &str) -> Self {
        self.child(label_of(name))
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    pub fn stream(&self) -> KeyStream {
        ChaCha8Rng::from_seed(self.state)
    }

    /// First 64 bits of the state, for seeding compact per-step generators.
    pub fn seed_u64(&self) -> u64 {
        u64::from_le_bytes(self.state[..8].try_into().unwrap())
    }

    /// `exp(u)` with `u ~ Uniform(ln lo, ln hi)`.
    pub fn log_uniform(&self, lo: f64, hi: f64) -> Result<f64> {
        sample::log_uniform(&mut self.stream(), lo, hi)
    }
}

/// 64-bit FNV-1a hash of a label.
pub fn label_of(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
