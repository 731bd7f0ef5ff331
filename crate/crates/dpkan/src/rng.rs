//! Deterministic, seedable randomness with named streams.
//!
//! A single root seed fans out into independent streams ("noise",
//! "shuffle", "init", ...). The same seed and the same call sequence
//! produce bitwise-identical output on every platform: stream derivation
//! uses splitmix64 over the stream name and sampling uses ChaCha20, both
//! of which are fully specified transforms.

use crate::error::{Error, Result};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone, Copy)]
pub struct RngState {
    root_seed: u64,
}

impl RngState {
    pub fn new(root_seed: u64) -> Self {
        Self { root_seed }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    /// Derive an independent stream. Distinct names never share state.
    pub fn stream(&self, name: &str) -> Stream {
        let mut x = self.root_seed ^ 0x9E37_79B9_7F4A_7C15;
        for &b in name.as_bytes() {
            x = splitmix64(x ^ u64::from(b));
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            x = splitmix64(x);
            chunk.copy_from_slice(&x.to_le_bytes());
        }
        Stream {
            rng: ChaCha20Rng::from_seed(seed),
            spare: None,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl Stream {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1): 53 random mantissa bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in {0, .., n-1} by rejection (unbiased).
    pub fn below(&mut self, n: usize) -> usize {
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// One draw from N(0, std^2) via the Box-Muller transform. The spare
    /// value of each pair is cached, so draws come in deterministic pairs.
    pub fn gaussian(&mut self, std: f64) -> f64 {
        self.standard_normal() * std
    }

    fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1]: avoids ln(0).
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `n` i.i.d. draws from N(0, std^2); std = 0 returns all zeros.
    pub fn gaussian_vec(&mut self, n: usize, std: f64) -> Vec<f64> {
        (0..n).map(|_| self.gaussian(std)).collect()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// N(0, std^2) sampling with argument checking, as a standalone operation.
pub fn gaussian_sample(stream: &mut Stream, n: usize, std: f64) -> Result<Vec<f64>> {
    if !(std >= 0.0) {
        return Err(Error::Argument(format!("std must be >= 0, got {std}")));
    }
    Ok(stream.gaussian_vec(n, std))
}
