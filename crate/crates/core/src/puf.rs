//! Arbiter PUF and TRNG models, the two primitives behind the key generator.
//!
//! The PUF follows the additive linear-delay model: the arbiter output is the
//! sign of `Σ w_j·Φ_j + ε`, where `Φ_j = ∏_{k=j}^{n-1} (1 - 2·c_k)` for the
//! challenge bits `c` and the last feature is the constant 1. The per-device
//! delay weights `w` are standard-normal draws from a generator seeded with
//! `device_seed`, which stands in for manufacturing variation.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::rngs::OsRng;
use rand::{Rng, RngCore, SeedableRng, TryRngCore};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

pub const DEFAULT_STAGES: usize = 64;
pub const MAX_STAGES: usize = 64;

/// Odd multiplier used to derive per-bit challenges from one base challenge.
const EXPAND_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;
const NOISE_STREAM_TWEAK: u64 = 0xA076_1D64_78BD_642F;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PufError {
    #[error("invalid PUF parameter: {0}")]
    InvalidParameter(String),
    #[error("challenge has {got} bits, device expects {expected}")]
    InvalidChallenge { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("entropy source unavailable: {0}")]
pub struct EntropyUnavailable(pub String);

/// A challenge of `width` bits, bit `k` of `bits` being stage `k`'s select
/// input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Challenge {
    bits: u64,
    width: usize,
}

impl Challenge {
    pub fn new(bits: u64, width: usize) -> Result<Self, PufError> {
        if width == 0 || width > MAX_STAGES {
            return Err(PufError::InvalidParameter(format!(
                "challenge width {width} not in 1..={MAX_STAGES}"
            )));
        }
        Ok(Self {
            bits: truncate(bits, width),
            width,
        })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Per-bit challenge `i` derived from a base challenge:
    /// `base XOR ((i+1)·0x9E3779B97F4A7C15 mod 2^64)`, truncated to the width.
    pub fn expand(&self, index: u64) -> Self {
        let offset = index.wrapping_add(1).wrapping_mul(EXPAND_MULTIPLIER);
        Self {
            bits: truncate(self.bits ^ offset, self.width),
            width: self.width,
        }
    }
}

fn truncate(bits: u64, width: usize) -> u64 {
    if width >= 64 {
        bits
    } else {
        bits & ((1u64 << width) - 1)
    }
}

/// Simulated arbiter PUF instance.
#[derive(Debug)]
pub struct PufDevice {
    device_seed: u64,
    weights: Vec<f64>,
    noise: Option<Normal<f64>>,
    noise_sigma: f64,
    // Noise draws are keyed on a call counter so the device itself stays
    // immutable and runs remain reproducible.
    calls: AtomicU64,
}

impl Clone for PufDevice {
    fn clone(&self) -> Self {
        Self {
            device_seed: self.device_seed,
            weights: self.weights.clone(),
            noise: self.noise,
            noise_sigma: self.noise_sigma,
            calls: AtomicU64::new(self.calls.load(Ordering::Relaxed)),
        }
    }
}

impl PufDevice {
    pub fn new(device_seed: u64, n_stages: usize, noise_sigma: f64) -> Result<Self, PufError> {
        if n_stages == 0 || n_stages > MAX_STAGES {
            return Err(PufError::InvalidParameter(format!(
                "n_stages = {n_stages}, must be in 1..={MAX_STAGES}"
            )));
        }
        if !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(PufError::InvalidParameter(format!(
                "noise_sigma = {noise_sigma}, must be finite and >= 0"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(device_seed);
        let weights = (0..=n_stages)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let noise = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).unwrap());
        Ok(Self {
            device_seed,
            weights,
            noise,
            noise_sigma,
            calls: AtomicU64::new(0),
        })
    }

    pub fn n_stages(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn device_seed(&self) -> u64 {
        self.device_seed
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn challenge(&self, bits: u64) -> Challenge {
        Challenge {
            bits: truncate(bits, self.n_stages()),
            width: self.n_stages(),
        }
    }

    /// Noise-free delay difference `Σ w_j·Φ_j`.
    pub fn delay_difference(&self, c: &Challenge) -> Result<f64, PufError> {
        let n = self.n_stages();
        if c.width != n {
            return Err(PufError::InvalidChallenge {
                expected: n,
                got: c.width,
            });
        }
        // Φ_n = 1; walking j downwards multiplies in (1 - 2·c_j).
        let mut phi = 1.0;
        let mut delta = self.weights[n];
        for j in (0..n).rev() {
            if (c.bits >> j) & 1 == 1 {
                phi = -phi;
            }
            delta += self.weights[j] * phi;
        }
        Ok(delta)
    }

    pub fn respond_bit(&self, c: &Challenge) -> Result<bool, PufError> {
        let mut delta = self.delay_difference(c)?;
        if let Some(noise) = &self.noise {
            let call = self.calls.fetch_add(1, Ordering::Relaxed);
            let mut rng = ChaCha20Rng::seed_from_u64(self.device_seed ^ NOISE_STREAM_TWEAK);
            rng.set_stream(call);
            delta += noise.sample(&mut rng);
        }
        Ok(delta > 0.0)
    }

    /// `n_bits` response bits for the challenges expanded from `base`, packed
    /// LSB-first.
    pub fn respond_bits(&self, base: &Challenge, n_bits: usize) -> Result<Vec<u8>, PufError> {
        let mut out = vec![0u8; n_bits.div_ceil(8)];
        for i in 0..n_bits {
            if self.respond_bit(&base.expand(i as u64))? {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        Ok(out)
    }
}

/// Entropy source behind the key generator.
pub enum Trng {
    /// Platform entropy.
    Os,
    /// Reproducible stream for tests and CI.
    Deterministic(Box<ChaCha20Rng>),
}

impl std::fmt::Debug for Trng {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Trng::Os => f.write_str("Trng::Os"),
            Trng::Deterministic(_) => f.write_str("Trng::Deterministic"),
        }
    }
}

impl Trng {
    pub fn os() -> Self {
        Trng::Os
    }

    pub fn deterministic(seed: u64) -> Self {
        Trng::Deterministic(Box::new(ChaCha20Rng::seed_from_u64(seed)))
    }

    pub fn fill(&mut self, buf: &mut [u8]) -> Result<(), EntropyUnavailable> {
        match self {
            Trng::Os => OsRng
                .try_fill_bytes(buf)
                .map_err(|e| EntropyUnavailable(e.to_string())),
            Trng::Deterministic(rng) => {
                rng.fill_bytes(buf);
                Ok(())
            }
        }
    }

    pub fn next_bytes(&mut self, n: usize) -> Result<Vec<u8>, EntropyUnavailable> {
        let mut buf = vec![0u8; n];
        self.fill(&mut buf)?;
        Ok(buf)
    }

    pub fn next_u64(&mut self) -> Result<u64, EntropyUnavailable> {
        let mut buf = [0u8; 8];
        self.fill(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    }
}

/// Random challenge source for statistics campaigns.
pub fn random_challenge<R: Rng>(rng: &mut R, width: usize) -> Challenge {
    Challenge {
        bits: truncate(rng.random(), width),
        width,
    }
}
