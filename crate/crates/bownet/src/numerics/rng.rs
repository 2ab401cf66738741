//! Seedable, splittable randomness on top of the ChaCha8 stream cipher.
//!
//! The raw stream comes from `rand_chacha` (a counter-based generator whose
//! output is fixed by specification, so seeds mean the same thing on every
//! platform and in every release). All derived draws — floats, ranges,
//! normals, shuffles — are implemented here so their exact consumption of the
//! stream is frozen in this crate.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream.
///
/// `split(tag)` derives a child stream from the parent's *seed*, not its
/// position, so children are independent of how much the parent has drawn
/// and of each other (distinct tags). Each stream has a single owner.
#[derive(Debug, Clone)]
pub struct Rng {
    key: u64,
    stream: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng {
            key: seed,
            stream: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Child stream for `tag`. Use a distinct tag per child; the same
    /// (seed, tag) pair always yields the same stream.
    pub fn split(&self, tag: u64) -> Rng {
        Rng::new(splitmix64(self.key ^ splitmix64(tag)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.stream.next_u64()
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, 1) with 24 random bits.
    pub fn uniform_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    pub fn range_f32(&mut self, lo: f32, hi: f32) -> f32 {
        lo + self.uniform_f32() * (hi - lo)
    }

    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.uniform_f64() * (hi - lo)
    }

    /// Uniform integer in [0, n). Rejection sampling, so unbiased.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f32) -> bool {
        self.uniform_f32() < p
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no caching).
    pub fn normal_f32(&mut self) -> f32 {
        let u1 = 1.0 - self.uniform_f64(); // (0, 1], keeps ln finite
        let u2 = self.uniform_f64();
        ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// `k` distinct indices from [0, n), in shuffled order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "sample_indices: k={k} > n={n}");
        // Partial Fisher-Yates over the full index range.
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
