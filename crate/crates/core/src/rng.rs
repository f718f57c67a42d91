//! Counter-addressed Gaussian noise streams.
//!
//! Every walker owns a ChaCha8 stream selected by `(seed, walker)`; each time
//! step consumes exactly [`WORDS_PER_STEP`] 32-bit words, so the draw for any
//! `(seed, walker, step)` triple can be produced directly by seeking, and a
//! sequential reader sees the same values.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Four `u64` per step: two Box-Muller pairs, the last normal is discarded.
pub const WORDS_PER_STEP: u128 = 8;

const TWO_PI: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    /// Stream positioned at step 0.
    pub fn new(seed: u64, walker: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(walker);
        NoiseStream { rng }
    }

    /// Stream positioned so that the next draw is the one for `step`.
    pub fn at(seed: u64, walker: u64, step: u64) -> Self {
        let mut s = Self::new(seed, walker);
        s.seek(step);
        s
    }

    pub fn seek(&mut self, step: u64) {
        self.rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    }

    /// Index of the step whose draw comes next.
    pub fn position(&self) -> u64 {
        (self.rng.get_word_pos() / WORDS_PER_STEP) as u64
    }

    /// One real 3-vector ξ ~ N(0, 𝟙₃).
    #[inline]
    pub fn next_normals(&mut self) -> [f64; 3] {
        let (a, b) = box_muller(self.rng.next_u64(), self.rng.next_u64());
        let (c, _) = box_muller(self.rng.next_u64(), self.rng.next_u64());
        [a, b, c]
    }
}

/// Uniform on (0, 1].
#[inline]
fn open_unit(x: u64) -> f64 {
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn box_muller(x: u64, y: u64) -> (f64, f64) {
    let r = (-2.0 * open_unit(x).ln()).sqrt();
    let (s, c) = (TWO_PI * open_unit(y)).sin_cos();
    (r * c, r * s)
}
