//! Finite-N experiments on the spiked tensor model.
//!
//! Every experiment is a flat list of independent tasks seeded by
//! `rng::derive(master, [point, trial])`; results are collected in task
//! order, so tables do not depend on the thread count.

mod detection;
mod experiments;
mod free_energy;
mod gibbs;
mod mle;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::ModelParams;

pub use detection::{detection_test, DetectionSpec};
pub use experiments::{correlation_experiment, excluded_near_threshold, ml_value_experiment, SweepSpec, THRESHOLD_WINDOW};
pub use free_energy::{
    free_energy_disorder_mean, free_energy_estimate, variance_decay_probe, DisorderMean, FreeEnergyEstimate,
    FreeEnergySpec, MAX_FREE_ENERGY_DIM, MIN_EFFECTIVE_SAMPLES,
};
pub use gibbs::{gibbs_overlap_probe, GibbsEstimate, McmcConfig};
pub use mle::{brute_force_max, mle_optimize, Basin, BasinResult, InitMode, Method, MleResult, OptimizerConfig};

/// Run `f(i)` for `i in 0..tasks` on a pool of `threads` workers (`None`
/// for the rayon default) and return the results in index order.
pub fn run_indexed<T, F>(threads: Option<usize>, tasks: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..tasks).into_par_iter().map(&f).collect())
}

/// Independent trials of one model point. Trial `i` uses
/// `rng::derive(master_seed, [i])`.
#[derive(Debug, Clone, Serialize)]
pub struct TrialBatch<T> {
    pub params: ModelParams,
    pub trials: usize,
    pub master_seed: u64,
    pub results: Vec<T>,
}

impl<T: Send> TrialBatch<T> {
    pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
        rng::derive(master_seed, &[trial as u64])
    }

    /// `f` receives the params with the trial's seed filled in.
    pub fn run<F>(params: ModelParams, trials: usize, master_seed: u64, threads: Option<usize>, f: F) -> Result<Self>
    where
        F: Fn(ModelParams) -> Result<T> + Sync + Send,
    {
        let results =
            run_indexed(threads, trials, |i| f(params.with_seed(Self::trial_seed(master_seed, i))))?;
        Ok(Self { params, trials, master_seed, results })
    }
}

pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
