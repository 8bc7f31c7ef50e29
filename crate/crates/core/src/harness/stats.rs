//! Stratified bootstrap over per-task outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_N_BOOT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    /// Mean of the bootstrap replicate means.
    pub success_rate: f64,
    /// Standard deviation of the replicate means.
    pub std_err: f64,
    /// Plain macro-average of the observed outcomes, without resampling.
    pub empirical_mean: f64,
    pub n_boot: usize,
    pub n_strata: usize,
    pub n_records: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("no strata to aggregate")]
    NoStrata,
    #[error("stratum {0} has no records")]
    EmptyStratum(usize),
    #[error("n_boot must be at least 1")]
    NoReplicates,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Resample each stratum with replacement (same size), average within it,
/// then average the stratum means with equal weight; repeat `n_boot` times.
pub fn stratified_bootstrap(strata: &[Vec<f64>], n_boot: usize, rng_seed: u64) -> Result<Stats, StatsError> {
    if strata.is_empty() {
        return Err(StatsError::NoStrata);
    }
    if let Some(i) = strata.iter().position(Vec::is_empty) {
        return Err(StatsError::EmptyStratum(i));
    }
    if n_boot == 0 {
        return Err(StatsError::NoReplicates);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let replicates: Vec<f64> = (0..n_boot)
        .map(|_| {
            let means: Vec<f64> = strata
                .iter()
                .map(|s| {
                    let total: f64 = (0..s.len()).map(|_| s[rng.gen_range(0..s.len())]).sum();
                    total / s.len() as f64
                })
                .collect();
            mean(&means)
        })
        .collect();
    let success_rate = mean(&replicates);
    let std_err = if replicates.iter().all(|r| *r == replicates[0]) {
        0.0
    } else {
        let var = replicates.iter().map(|r| (r - success_rate).powi(2)).sum::<f64>() / n_boot as f64;
        var.sqrt()
    };
    let empirical_mean = mean(&strata.iter().map(|s| mean(s)).collect::<Vec<_>>());
    Ok(Stats {
        success_rate,
        std_err,
        empirical_mean,
        n_boot,
        n_strata: strata.len(),
        n_records: strata.iter().map(Vec::len).sum(),
    })
}
