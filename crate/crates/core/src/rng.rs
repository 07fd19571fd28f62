//! Counter-based Brownian increments.
//!
//! An increment is addressed by `(seed, stream, step)`: the ChaCha8 key comes
//! from the seed, the stream selects an independent ChaCha stream and the
//! step fixes the word position. Any worker can regenerate any increment
//! without shared state.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A reproducible realization of the forward Brownian path `W`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NoisePath {
    pub seed: u64,
    pub stream: u64,
}

impl NoisePath {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Increments of a `d`-dimensional Brownian motion on a grid of width
    /// `dt`, starting at step index `first_step`.
    pub fn increments(&self, d: usize, dt: f64, first_step: u64) -> IncrementStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        let words = words_per_step(d);
        rng.set_word_pos(u128::from(first_step) * words as u128);
        IncrementStream {
            rng,
            d,
            scale: dt.sqrt(),
            buf: vec![0.0; 2 * d.div_ceil(2)],
        }
    }

    /// A single increment, for random access.
    pub fn increment(&self, d: usize, dt: f64, step: u64) -> Vec<f64> {
        let mut s = self.increments(d, dt, step);
        s.next_increment().to_vec()
    }
}

/// Each pair of normals consumes two `u64`, i.e. four 32-bit words.
fn words_per_step(d: usize) -> usize {
    4 * d.div_ceil(2)
}

pub struct IncrementStream {
    rng: ChaCha8Rng,
    d: usize,
    scale: f64,
    buf: Vec<f64>,
}

impl IncrementStream {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// The next `N(0, dt)^d` draw. Consumes a fixed number of words per call.
    pub fn next_increment(&mut self) -> &[f64] {
        for pair in self.buf.chunks_exact_mut(2) {
            let (a, b) = box_muller(self.rng.next_u64(), self.rng.next_u64());
            pair[0] = a * self.scale;
            pair[1] = b * self.scale;
        }
        &self.buf[..self.d]
    }
}

fn unit_open(x: u64) -> f64 {
    // (0, 1]: avoids ln(0)
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn box_muller(a: u64, b: u64) -> (f64, f64) {
    let r = (-2.0 * unit_open(a).ln()).sqrt();
    let theta = std::f64::consts::TAU * unit_open(b);
    (r * theta.cos(), r * theta.sin())
}

/// Derives a child stream id from a parent and a tag path, so nested phases
/// of a computation draw from disjoint streams.
pub fn derive_stream(parent: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(parent ^ 0x5851_f42d_4c95_7f2d);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

/// Uniform draw in `[0, 1)` addressed by `(seed, key)`; used for resampling
/// offsets and bootstrap choices.
pub fn uniform_at(seed: u64, key: u64) -> f64 {
    (splitmix64(seed ^ splitmix64(key)) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
