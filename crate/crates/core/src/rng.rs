//! Counter-based splittable random stream.
//!
//! Streams are identified by (seed, derivation path). Deriving a child never
//! advances the parent, so the draw order of sibling subsystems cannot leak
//! into each other. That property is what makes paired-seed comparisons and
//! parallel sampling reproducible: every episode, chain, or sweep derives its
//! own stream from a stable label and consumes it privately.

use crate::math::Vector;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer. Full-avalanche mix of one 64-bit word.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Deterministic random stream. Cloning forks the current position; use
/// `child`/`child_index` to derive independent streams instead.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            key: mix64(seed ^ GOLDEN),
            counter: 0,
        }
    }

    /// Derives an independent stream for `label`. Does not consume from or
    /// advance `self`, so derivation order is irrelevant.
    pub fn child(&self, label: &str) -> Self {
        RngStream {
            key: mix64(self.key ^ fnv1a(label.as_bytes())),
            counter: 0,
        }
    }

    /// Indexed variant of `child` for per-episode / per-chain streams.
    pub fn child_index(&self, index: u64) -> Self {
        RngStream {
            key: mix64(self.key ^ mix64(index ^ 0xA076_1D64_78BD_642F)),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller. Uses two uniforms per draw; the sine
    /// branch is discarded so the stream state stays a pure counter.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps ln away from 0
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_scaled(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.normal()
    }

    /// Uniform draw from the closed ball of given radius. Direction comes
    /// from a normalized Gaussian, radius from the d-th-root transform.
    pub fn uniform_in_ball(&mut self, d: usize, radius: f64) -> Vector {
        let dir: Vec<f64> = (0..d).map(|_| self.normal()).collect();
        let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Vector::zeros(d);
        }
        let r = radius * self.next_f64().powf(1.0 / d as f64);
        Vector::from_raw(dir.into_iter().map(|x| x / n * r).collect())
    }

    /// Uniform draw from the box [-half_width, half_width]^d.
    pub fn uniform_in_box(&mut self, d: usize, half_width: f64) -> Vector {
        Vector::from_raw(
            (0..d)
                .map(|_| self.uniform(-half_width, half_width))
                .collect(),
        )
    }
}
