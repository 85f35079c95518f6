//! Reproducible random streams and sample statistics.
//!
//! Every sample draws from its own ChaCha stream, keyed by the master seed
//! and a stream index, so results do not depend on how samples are split
//! across workers. Per-sample spreads are integers and are summed exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Monte Carlo estimate of an expected spread.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadEstimate {
    pub mean: f64,
    pub samples: u64,
    /// 95% normal-approximation half-width, 1.96 · sd / √samples.
    pub half_width: f64,
}

impl SpreadEstimate {
    /// Builds an estimate from exact integer sums of the per-sample values.
    pub(crate) fn from_sums(sum: i128, sum_sq: i128, samples: u64) -> Self {
        let n = samples as i128;
        let mean = sum as f64 / samples as f64;
        let half_width = if samples > 1 {
            // n·Σx² − (Σx)² is exact in integers, so the variance never goes negative.
            let num = n * sum_sq - sum * sum;
            let var = num as f64 / (n * (n - 1)) as f64;
            1.96 * var.sqrt() / (samples as f64).sqrt()
        } else {
            0.0
        };
        SpreadEstimate {
            mean,
            samples,
            half_width,
        }
    }
}

/// The stream for sample `stream` under `master`.
pub fn sample_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Derives an independent master seed for a labelled sub-computation.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master ^ splitmix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `f(i)` for every sample index and returns exact (Σ, Σ²).
pub(crate) fn sum_samples<F>(samples: u64, f: F) -> (i128, i128)
where
    F: Fn(u64) -> i64 + Sync,
{
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let x = f(i) as i128;
            (x, x * x)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Runs `f(i, &mut acc)` over all samples, accumulating per-candidate
/// integer vectors of length `width`. Summation is exact.
pub(crate) fn sum_sample_vectors<F>(samples: u64, width: usize, f: F) -> Vec<i64>
where
    F: Fn(u64, &mut [i64]) + Sync,
{
    (0..samples)
        .into_par_iter()
        .fold(
            || vec![0i64; width],
            |mut acc, i| {
                f(i, &mut acc);
                acc
            },
        )
        .reduce(
            || vec![0i64; width],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}
