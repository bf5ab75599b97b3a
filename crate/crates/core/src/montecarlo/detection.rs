//! Testing `λ = 0` against `λ > 0` with the maximum-likelihood value as
//! statistic and a threshold calibrated on simulated nulls.

use serde::Serialize;
use serde_json::json;

use super::mle::{mle_optimize, OptimizerConfig};
use super::{mean_and_stderr, run_indexed};
use crate::error::{Error, Result};
use crate::rng::{self, label};
use crate::scalar::{ml_limit_given, threshold_report};
use crate::table::{Column, CurveTable, Metadata};
use crate::tensor::{generate_observation, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSpec {
    pub k: usize,
    pub n: usize,
    /// Alternatives; `0` entries are extra null checks.
    pub lambdas: Vec<f64>,
    /// Fresh draws per alternative and for the false-positive rate.
    pub trials: usize,
    pub null_calibration_runs: usize,
    pub alpha: f64,
    pub seed: u64,
    pub symmetrize: bool,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl DetectionSpec {
    pub fn new(k: usize, n: usize, lambdas: Vec<f64>, trials: usize, alpha: f64, seed: u64) -> Self {
        Self { k, n, lambdas, trials, null_calibration_runs: 200, alpha, seed, symmetrize: true, threads: None }
    }
}

/// Order statistic `T_(j)` with `j = ⌈(1 − α)(M + 1)⌉`, clamped to `M`.
fn calibrated_threshold(mut stats: Vec<f64>, alpha: f64) -> f64 {
    stats.sort_by(f64::total_cmp);
    let m = stats.len();
    let j = (((1.0 - alpha) * (m as f64 + 1.0)).ceil() as usize).clamp(1, m);
    stats[j - 1]
}

/// One `null` row with the false-positive rate on fresh nulls and one
/// `alternative` row per `λ` with the empirical power.
pub fn detection_test(spec: &DetectionSpec, config: &OptimizerConfig) -> Result<CurveTable> {
    config.validate()?;
    if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", spec.alpha)));
    }
    if spec.null_calibration_runs == 0 {
        return Err(Error::InvalidInput("null calibration needs at least one run".into()));
    }
    ModelParams::new(spec.n, spec.k, 0.0, 0)?;
    let report = threshold_report(spec.k)?;

    let statistic = |lambda: f64, path: &[u64]| -> Result<f64> {
        let seed = rng::derive(spec.seed, path);
        let params = ModelParams::new(spec.n, spec.k, lambda, seed)?.with_symmetrize(spec.symmetrize);
        let obs = generate_observation(&params, None)?;
        let r = mle_optimize(&obs.data, &OptimizerConfig { seed, ..*config }, Some(&obs.signal))?;
        Ok(r.objective)
    };

    let calibration = run_indexed(spec.threads, spec.null_calibration_runs, |i| {
        statistic(0.0, &[label::NULL_CALIBRATION, i as u64])
    })?;
    let threshold = calibrated_threshold(calibration, spec.alpha);

    let arms: Vec<(&str, f64, u64)> = std::iter::once(("null", 0.0, label::NULL_FRESH))
        .chain(spec.lambdas.iter().map(|&l| ("alternative", l, label::ALTERNATIVE)))
        .collect();
    let trials = spec.trials;
    let stats = run_indexed(spec.threads, arms.len() * trials, |task| {
        let (_, lambda, tag) = arms[task / trials];
        statistic(lambda, &[tag, (task / trials) as u64, (task % trials) as u64])
    })?;

    let mut table = CurveTable::new(
        Metadata::new("detect", Some(spec.seed), json!({ "spec": spec, "optimizer": config })),
        vec![
            Column::text("row"),
            Column::int("k"),
            Column::int("n"),
            Column::real("lambda"),
            Column::int("trials"),
            Column::int("rejections"),
            Column::real("rate"),
            Column::real("rate_stderr"),
            Column::real("null_stderr"),
            Column::real("alpha"),
            Column::real("threshold"),
            Column::real("mean_statistic"),
            Column::real("theory_ml_limit"),
        ],
    )?;
    let null_se = (spec.alpha * (1.0 - spec.alpha) / trials as f64).sqrt();
    for (a, (row, lambda, _)) in arms.iter().enumerate() {
        let chunk = &stats[a * trials..(a + 1) * trials];
        let rejections = chunk.iter().filter(|t| **t > threshold).count();
        let rate = rejections as f64 / trials as f64;
        table.push_row(vec![
            (*row).into(),
            spec.k.into(),
            spec.n.into(),
            (*lambda).into(),
            trials.into(),
            rejections.into(),
            rate.into(),
            (rate * (1.0 - rate) / trials as f64).sqrt().into(),
            null_se.into(),
            spec.alpha.into(),
            threshold.into(),
            mean_and_stderr(chunk).0.into(),
            ml_limit_given(*lambda, spec.k, &report)?.into(),
        ])?;
    }
    Ok(table)
}
