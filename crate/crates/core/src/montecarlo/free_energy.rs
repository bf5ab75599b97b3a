//! Free energy `F_N(λ) = (1/N) log ∫ exp(λ H(x)) dx` of the pure spherical
//! model by plain Monte Carlo over the uniform measure.
//!
//! `H` is a centered Gaussian field, so the sign in the exponent does not
//! change the law of `F_N`; the positive sign is used throughout.

use serde::Serialize;
use serde_json::json;

use super::{mean_and_stderr, run_indexed};
use crate::error::{Error, Result};
use crate::rng::{self, label};
use crate::table::{Cell, Column, CurveTable, Metadata};
use crate::tensor::{sample_noise, sample_sphere_with, ModelParams, SymmetricTensor};

pub const MAX_FREE_ENERGY_DIM: usize = 12;
pub const MIN_EFFECTIVE_SAMPLES: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeEnergyEstimate {
    pub value: f64,
    pub stderr: f64,
    pub effective_samples: f64,
}

/// Log-mean-exp of `λ H(xᵢ)` over `samples` uniform points, divided by N.
/// The standard error is the delta-method error of the mean weight.
pub fn free_energy_estimate(w: &SymmetricTensor, lambda: f64, samples: usize, seed: u64) -> Result<FreeEnergyEstimate> {
    let n = w.dim();
    if n > MAX_FREE_ENERGY_DIM {
        return Err(Error::Unsupported(format!(
            "free energy by plain Monte Carlo is limited to N <= {MAX_FREE_ENERGY_DIM}, got {n}"
        )));
    }
    if samples < 2 {
        return Err(Error::InvalidInput("at least two samples are needed".into()));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be finite, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(FreeEnergyEstimate { value: 0.0, stderr: 0.0, effective_samples: samples as f64 });
    }
    let root_n = (n as f64).sqrt();
    let mut g = rng::substream(seed, &[label::SPHERE_SAMPLES]);
    let mut exponents = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = sample_sphere_with(n, &mut g)?;
        exponents.push(lambda * root_n * w.contract_full(x.as_slice()));
    }
    let top = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = exponents.iter().map(|a| (a - top).exp()).collect();
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|v| v * v).sum();
    let ess = sum * sum / sum_sq;
    if ess < MIN_EFFECTIVE_SAMPLES {
        return Err(Error::HeavyTail { ess, min: MIN_EFFECTIVE_SAMPLES });
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = weights.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(FreeEnergyEstimate {
        value: (top + mean.ln()) / n as f64,
        stderr: (var / m).sqrt() / (mean * n as f64),
        effective_samples: ess,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeEnergySpec {
    pub k: usize,
    pub n: usize,
    pub lambda: f64,
    /// Independent noise tensors.
    pub replicas: usize,
    /// Sphere samples per replica.
    pub samples: usize,
    pub seed: u64,
    pub symmetrize: bool,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl FreeEnergySpec {
    pub fn new(k: usize, n: usize, lambda: f64, replicas: usize, samples: usize, seed: u64) -> Self {
        Self { k, n, lambda, replicas, samples, seed, symmetrize: true, threads: None }
    }
}

/// Disorder average of `F_N` over `replicas` noise draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisorderMean {
    pub mean: f64,
    /// Standard error of the mean across replicas (includes Monte Carlo error).
    pub stderr: f64,
    pub variance: f64,
    /// Mean squared per-replica Monte Carlo error.
    pub mc_variance: f64,
    pub min_effective_samples: f64,
    pub values: Vec<f64>,
}

pub fn free_energy_disorder_mean(spec: &FreeEnergySpec) -> Result<DisorderMean> {
    if spec.replicas < 2 {
        return Err(Error::InvalidInput("at least two replicas are needed".into()));
    }
    let estimates = run_indexed(spec.threads, spec.replicas, |r| {
        let seed = rng::derive(spec.seed, &[spec.n as u64, r as u64]);
        let params = ModelParams::new(spec.n, spec.k, 0.0, seed)?.with_symmetrize(spec.symmetrize);
        let w = sample_noise(&params)?;
        free_energy_estimate(&w, spec.lambda, spec.samples, seed)
    })?;
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let (mean, stderr) = mean_and_stderr(&values);
    let variance = stderr * stderr * values.len() as f64;
    Ok(DisorderMean {
        mean,
        stderr,
        variance,
        mc_variance: estimates.iter().map(|e| e.stderr * e.stderr).sum::<f64>() / estimates.len() as f64,
        min_effective_samples: estimates.iter().map(|e| e.effective_samples).fold(f64::INFINITY, f64::min),
        values,
    })
}

/// `Var(F_N)` across noise replicas for each N, with a least-squares fit of
/// `log Var` against `log N` in a final `fit` row.
pub fn variance_decay_probe(
    k: usize,
    lambda: f64,
    ns: &[usize],
    replicas: usize,
    samples: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<CurveTable> {
    let metadata = Metadata::new(
        "free-energy",
        Some(seed),
        json!({ "k": k, "lambda": lambda, "ns": ns, "replicas": replicas, "samples": samples }),
    );
    let mut table = CurveTable::new(
        metadata,
        vec![
            Column::text("row"),
            Column::int("k"),
            Column::int("n"),
            Column::real("lambda"),
            Column::int("replicas"),
            Column::int("samples"),
            Column::real("mean_f"),
            Column::real("mean_f_stderr"),
            Column::real("var_f"),
            Column::real("var_f_stderr"),
            Column::real("mc_var"),
            Column::real("annealed"),
            Column::real("slope"),
        ],
    )?;
    let mut fit = Vec::new();
    for &n in ns {
        let spec = FreeEnergySpec { threads, ..FreeEnergySpec::new(k, n, lambda, replicas, samples, seed) };
        let d = free_energy_disorder_mean(&spec)?;
        let var_se = d.variance * (2.0 / (replicas as f64 - 1.0)).sqrt();
        table.push_row(vec![
            "n".into(),
            k.into(),
            n.into(),
            lambda.into(),
            replicas.into(),
            samples.into(),
            d.mean.into(),
            d.stderr.into(),
            d.variance.into(),
            var_se.into(),
            d.mc_variance.into(),
            (lambda * lambda / 2.0).into(),
            Cell::Missing,
        ])?;
        if d.variance > 0.0 {
            fit.push(((n as f64).ln(), d.variance.ln()));
        }
    }
    let slope = if fit.len() >= 2 {
        let m = fit.len() as f64;
        let mx = fit.iter().map(|p| p.0).sum::<f64>() / m;
        let my = fit.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = fit.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = fit.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Cell::Real(sxy / sxx)
    } else {
        Cell::Missing
    };
    if !ns.is_empty() {
        table.push_row(vec![
            "fit".into(),
            k.into(),
            Cell::Missing,
            lambda.into(),
            replicas.into(),
            samples.into(),
            Cell::Missing,
            Cell::Missing,
            Cell::Missing,
            Cell::Missing,
            Cell::Missing,
            Cell::Missing,
            slope,
        ])?;
    }
    Ok(table)
}
