//! Stochastic primitives shared by network generation and the diffusion engine.
//!
//! Every run owns exactly one [`RandomSource`]. The generator is pinned to
//! ChaCha8 (via `rand_chacha`), whose output stream is specified independently
//! of platform and word size, so a seed reproduces the same draws everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("weighted choice over an empty list")]
    EmptyWeights,
    #[error("weight {value} at index {index} is negative or not finite")]
    InvalidWeight { index: usize, value: f64 },
}

/// Outcome of [`RandomSource::weighted_choice`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Index(usize),
    /// Every weight was zero; nothing can be selected.
    AllZero,
}

/// Seeded ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.rng.random_range(0..n)
    }

    /// Draw from the density `2(1 - x)` on `[0, 1]` by inverse transform.
    pub fn sample_unit_linear(&mut self) -> f64 {
        unit_linear_from_uniform(self.uniform())
    }

    pub fn bernoulli(&mut self, p: f64) -> Result<bool, SamplingError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SamplingError::InvalidProbability(p));
        }
        Ok(self.uniform() < p)
    }

    /// Pick index `i` with probability `w[i] / sum(w)`.
    ///
    /// Entries that refer to the same underlying item simply add up, which is
    /// how duplicated feed entries get amplified. A list of all-zero weights
    /// yields [`Choice::AllZero`] without consuming a draw.
    pub fn weighted_choice(&mut self, weights: &[f64]) -> Result<Choice, SamplingError> {
        if weights.is_empty() {
            return Err(SamplingError::EmptyWeights);
        }
        let mut total = 0.0;
        let mut last_positive = None;
        for (index, &value) in weights.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(SamplingError::InvalidWeight { index, value });
            }
            if value > 0.0 {
                last_positive = Some(index);
            }
            total += value;
        }
        let Some(last_positive) = last_positive else {
            return Ok(Choice::AllZero);
        };
        let target = self.uniform() * total;
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if target < acc && w > 0.0 {
                return Ok(Choice::Index(i));
            }
        }
        // Rounding in the running sum can leave target == acc at the end.
        Ok(Choice::Index(last_positive))
    }
}

/// Inverse of the CDF `C(x) = 2x - x^2`.
pub fn unit_linear_from_uniform(u: f64) -> f64 {
    1.0 - (1.0 - u).sqrt()
}

/// CDF of the `2(1 - x)` density.
pub fn unit_linear_cdf(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    2.0 * x - x * x
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold a list of words into one well-mixed 64-bit seed.
pub fn mix_seed(words: &[u64]) -> u64 {
    words.iter().fold(GOLDEN_GAMMA, |acc, &w| {
        splitmix64(acc.wrapping_add(GOLDEN_GAMMA) ^ splitmix64(w))
    })
}

/// Seed for one network of a sweep.
pub fn network_seed(master: u64, network_index: usize) -> u64 {
    mix_seed(&[master, 0x006e_6574_776f_726b, network_index as u64])
}

/// Seed for one run; depends on the cell so that no two runs share a stream.
pub fn run_seed(master: u64, network_index: usize, run_index: usize, f: f64, ell: f64) -> u64 {
    mix_seed(&[
        master,
        0x0072_756e,
        network_index as u64,
        run_index as u64,
        f.to_bits(),
        ell.to_bits(),
    ])
}
