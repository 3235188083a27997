//! Seeded Poisson demand generation.
//!
//! Randomness comes from SplitMix64 so that trajectories are reproducible
//! bit-for-bit on any platform and from any language that implements the same
//! three-line generator. Poisson draws use inverse-transform sampling: one
//! uniform per draw (per chunk of mean, see [`POISSON_CHUNK`]).

use ndarray::Array2;
use thiserror::Error;

use crate::domain::{rate_matrix, DemandTrajectory, ScenarioConfig};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_RUN: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_PRIORITY: u64 = 0xBF58_476D_1CE4_E5B9;

/// Largest mean accepted by [`sample_poisson`].
pub const MAX_POISSON_MEAN: f64 = 1e6;

/// Means above this are sampled as a sum of independent Poisson draws whose
/// means are at most this value, so that `exp(-mean)` never underflows.
pub const POISSON_CHUNK: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ArrivalError {
    #[error("mean_overflow: Poisson mean {0} exceeds {MAX_POISSON_MEAN}")]
    MeanOverflow(f64),
    #[error("invalid Poisson mean {0}")]
    InvalidMean(f64),
}

/// SplitMix64 generator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SplitMix64 {
    pub state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) from the top 53 bits of the next output.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Seed for the stream of (`run`, `priority`): the first SplitMix64 output for
/// state `base ^ run*C1 ^ priority*C2`. `priority` is 0-based.
pub fn mix_seed(base: u64, run: u64, priority: u64) -> u64 {
    let x = base ^ run.wrapping_mul(MIX_RUN) ^ priority.wrapping_mul(MIX_PRIORITY);
    SplitMix64::new(x).next_u64()
}

/// Inverse CDF of Poisson(`mean`) at `u`: the first `k` with `CDF(k) > u`.
pub fn poisson_inverse_cdf(u: f64, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k: u64 = 0;
    while cdf <= u {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        // Past the mode with vanishing mass: rounding has stalled the CDF below u.
        if p == 0.0 && k as f64 > mean {
            break;
        }
    }
    k
}

/// Draws one Poisson(`mean`) variate.
pub fn sample_poisson(rng: &mut SplitMix64, mean: f64) -> Result<u64, ArrivalError> {
    if mean.is_nan() || mean < 0.0 {
        return Err(ArrivalError::InvalidMean(mean));
    }
    if mean > MAX_POISSON_MEAN {
        return Err(ArrivalError::MeanOverflow(mean));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let chunks = (mean / POISSON_CHUNK).ceil().max(1.0) as u64;
    let part = mean / chunks as f64;
    let mut total = 0;
    for _ in 0..chunks {
        total += poisson_inverse_cdf(rng.next_unit(), part);
    }
    Ok(total)
}

/// Realized and expected demand for one Monte-Carlo run.
///
/// Each priority has its own stream seeded with
/// `mix_seed(base_seed, run_index, p)`, so adding priorities or runs never
/// perturbs existing streams.
pub fn generate_demands(
    config: &ScenarioConfig,
    run_index: u64,
) -> Result<DemandTrajectory, ArrivalError> {
    let expected = rate_matrix(config);
    let mut realized = Array2::zeros(expected.raw_dim());
    for p in 0..config.num_priorities {
        let mut rng = SplitMix64::new(mix_seed(config.base_seed, run_index, p as u64));
        for t in 0..config.horizon {
            realized[[t, p]] = sample_poisson(&mut rng, expected[[t, p]])? as f64;
        }
    }
    Ok(DemandTrajectory { realized, expected })
}
