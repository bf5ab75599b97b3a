//! Overlap and maximum-likelihood sweeps over `(k, N, λ)` grids.

use serde::Serialize;
use serde_json::json;

use super::mle::{mle_optimize, Basin, MleResult, OptimizerConfig};
use super::{mean_and_stderr, run_indexed};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{ml_limit_given, q_star_given, threshold_report, ThresholdReport};
use crate::table::{Cell, Column, CurveTable, Metadata};
use crate::tensor::{generate_observation, ModelParams, Observation, SymmetricTensor};

/// Half-width of the λ window around λ_c left out of sweeps.
pub const THRESHOLD_WINDOW: f64 = 0.02;

const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub ks: Vec<usize>,
    pub ns: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub symmetrize: bool,
    /// Read `lambdas` as multiples of `λ_c(k)`.
    pub lambda_relative: bool,
    /// Drop the noise tensor, leaving `Y = λ√N X⊗k`.
    pub noiseless: bool,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl SweepSpec {
    pub fn new(ks: Vec<usize>, ns: Vec<usize>, lambdas: Vec<f64>, trials: usize, seed: u64) -> Self {
        Self { ks, ns, lambdas, trials, seed, symmetrize: true, lambda_relative: false, noiseless: false, threads: None }
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }
}

pub fn excluded_near_threshold(lambda: f64, report: &ThresholdReport) -> bool {
    (lambda - report.lambda_c_bisect).abs() <= THRESHOLD_WINDOW
}

#[derive(Debug, Clone, Copy)]
struct Point {
    index: usize,
    k: usize,
    n: usize,
    lambda: f64,
}

struct Plan {
    points: Vec<Point>,
    reports: Vec<(usize, ThresholdReport)>,
    skipped: Vec<(usize, f64)>,
}

impl Plan {
    fn report(&self, k: usize) -> &ThresholdReport {
        &self.reports.iter().find(|(kk, _)| *kk == k).expect("report for every k").1
    }
}

fn plan(spec: &SweepSpec) -> Result<Plan> {
    let mut reports = Vec::new();
    for &k in &spec.ks {
        if !reports.iter().any(|(kk, _)| *kk == k) {
            reports.push((k, threshold_report(k)?));
        }
    }
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &k in &spec.ks {
        let report = &reports.iter().find(|(kk, _)| *kk == k).unwrap().1;
        for &n in &spec.ns {
            ModelParams::new(n, k, 0.0, 0)?;
            for &value in &spec.lambdas {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {value}")));
                }
                let lambda = if spec.lambda_relative { value * report.lambda_c_bisect } else { value };
                if excluded_near_threshold(lambda, report) {
                    if !skipped.contains(&(k, lambda)) {
                        skipped.push((k, lambda));
                    }
                    continue;
                }
                points.push(Point { index: points.len(), k, n, lambda });
            }
        }
    }
    Ok(Plan { points, reports, skipped })
}

struct TrialOutcome {
    observation: Observation,
    result: MleResult,
}

fn run_trials(spec: &SweepSpec, config: &OptimizerConfig, plan: &Plan) -> Result<Vec<TrialOutcome>> {
    let trials = spec.trials;
    run_indexed(spec.threads, plan.points.len() * trials, |task| {
        let point = plan.points[task / trials];
        let trial = task % trials;
        let seed = rng::derive(spec.seed, &[point.index as u64, trial as u64]);
        let params = ModelParams::new(point.n, point.k, point.lambda, seed)?.with_symmetrize(spec.symmetrize);
        let mut observation = generate_observation(&params, None)?;
        if spec.noiseless {
            let scale = point.lambda * (point.n as f64).sqrt();
            observation.noise = SymmetricTensor::zeros(point.k, point.n)?;
            observation.data = SymmetricTensor::rank_one(observation.signal.as_slice(), point.k, scale)?;
        }
        let cfg = OptimizerConfig { seed, ..*config };
        let result = mle_optimize(&observation.data, &cfg, Some(&observation.signal))?;
        let direct = observation.data.contract_full(result.estimate.as_slice()) / (point.n as f64).sqrt();
        if (direct - result.objective).abs() > CONSISTENCY_TOL * direct.abs().max(1.0) {
            return Err(Error::Consistency(format!(
                "objective {} does not match recomputed value {direct}",
                result.objective
            )));
        }
        Ok(TrialOutcome { observation, result })
    })
}

fn metadata(command: &str, spec: &SweepSpec, config: &OptimizerConfig, plan: &Plan) -> Metadata {
    let skipped: Vec<_> = plan.skipped.iter().map(|(k, l)| json!({ "k": k, "lambda": l })).collect();
    Metadata::new(
        command,
        Some(spec.seed),
        json!({ "sweep": spec, "optimizer": config, "excluded_near_lambda_c": skipped }),
    )
}

fn random_basin_overlap(r: &MleResult) -> Option<f64> {
    r.basins.iter().find(|b| b.basin == Basin::RandomInit).and_then(|b| b.overlap)
}

/// Overlap `|⟨x̂, X⟩|` of the maximum-likelihood estimate, one row per
/// trial plus a summary row per point with the limit `√q_*(λ)`.
///
/// `random_init_overlap` is the best random-start result alone: it measures
/// what the optimizer reaches without the planted start and is reported,
/// not compared with the limit.
pub fn correlation_experiment(spec: &SweepSpec, config: &OptimizerConfig) -> Result<CurveTable> {
    config.validate()?;
    let plan = plan(spec)?;
    let outcomes = run_trials(spec, config, &plan)?;
    let mut table = CurveTable::new(
        metadata("correlation", spec, config, &plan),
        vec![
            Column::text("row"),
            Column::int("k"),
            Column::int("n"),
            Column::real("lambda"),
            Column::int("trial"),
            Column::real("overlap"),
            Column::real("overlap_stderr"),
            Column::real("objective"),
            Column::bool("converged"),
            Column::text("basin"),
            Column::real("random_init_overlap"),
            Column::real("theory_sqrt_q_star"),
        ],
    )?;
    for (p, point) in plan.points.iter().enumerate() {
        let theory = q_star_given(point.lambda, point.k, plan.report(point.k).lambda_c_bisect)?.sqrt();
        let chunk = &outcomes[p * spec.trials..(p + 1) * spec.trials];
        for (trial, o) in chunk.iter().enumerate() {
            let r = &o.result;
            table.push_row(vec![
                "trial".into(),
                point.k.into(),
                point.n.into(),
                point.lambda.into(),
                trial.into(),
                r.overlap.into(),
                Cell::Missing,
                r.objective.into(),
                r.converged.into(),
                r.basin.as_str().into(),
                random_basin_overlap(r).into(),
                theory.into(),
            ])?;
        }
        if chunk.is_empty() {
            continue;
        }
        let overlaps: Vec<f64> = chunk.iter().filter_map(|o| o.result.overlap).collect();
        let objectives: Vec<f64> = chunk.iter().map(|o| o.result.objective).collect();
        let randoms: Vec<f64> = chunk.iter().filter_map(|o| random_basin_overlap(&o.result)).collect();
        let (mean, se) = mean_and_stderr(&overlaps);
        table.push_row(vec![
            "summary".into(),
            point.k.into(),
            point.n.into(),
            point.lambda.into(),
            Cell::Missing,
            mean.into(),
            se.into(),
            mean_and_stderr(&objectives).0.into(),
            chunk.iter().all(|o| o.result.converged).into(),
            Cell::Missing,
            if randoms.is_empty() { Cell::Missing } else { mean_and_stderr(&randoms).0.into() },
            theory.into(),
        ])?;
    }
    Ok(table)
}

/// `(1/√N) max ⟨x⊗k, Y⟩` against its limit. Each trial row splits the
/// objective into `λ⟨x̂, X⟩^k` and `⟨W, x̂⊗k⟩/√N`.
pub fn ml_value_experiment(spec: &SweepSpec, config: &OptimizerConfig) -> Result<CurveTable> {
    config.validate()?;
    let plan = plan(spec)?;
    let outcomes = run_trials(spec, config, &plan)?;
    let mut table = CurveTable::new(
        metadata("mlvalue", spec, config, &plan),
        vec![
            Column::text("row"),
            Column::int("k"),
            Column::int("n"),
            Column::real("lambda"),
            Column::int("trial"),
            Column::real("objective"),
            Column::real("objective_stderr"),
            Column::real("signal_part"),
            Column::real("noise_part"),
            Column::real("decomposition_gap"),
            Column::real("overlap"),
            Column::bool("converged"),
            Column::text("basin"),
            Column::real("theory_ml_limit"),
        ],
    )?;
    for (p, point) in plan.points.iter().enumerate() {
        let theory = ml_limit_given(point.lambda, point.k, plan.report(point.k))?;
        let chunk = &outcomes[p * spec.trials..(p + 1) * spec.trials];
        let root_n = (point.n as f64).sqrt();
        for (trial, o) in chunk.iter().enumerate() {
            let r = &o.result;
            let x = r.estimate.as_slice();
            let signal_part = point.lambda * o.observation.signal.dot(&r.estimate).powi(point.k as i32);
            let noise_part = o.observation.noise.contract_full(x) / root_n;
            table.push_row(vec![
                "trial".into(),
                point.k.into(),
                point.n.into(),
                point.lambda.into(),
                trial.into(),
                r.objective.into(),
                Cell::Missing,
                signal_part.into(),
                noise_part.into(),
                (r.objective - signal_part - noise_part).into(),
                r.overlap.into(),
                r.converged.into(),
                r.basin.as_str().into(),
                theory.into(),
            ])?;
        }
        if chunk.is_empty() {
            continue;
        }
        let objectives: Vec<f64> = chunk.iter().map(|o| o.result.objective).collect();
        let overlaps: Vec<f64> = chunk.iter().filter_map(|o| o.result.overlap).collect();
        let (mean, se) = mean_and_stderr(&objectives);
        table.push_row(vec![
            "summary".into(),
            point.k.into(),
            point.n.into(),
            point.lambda.into(),
            Cell::Missing,
            mean.into(),
            se.into(),
            Cell::Missing,
            Cell::Missing,
            Cell::Missing,
            mean_and_stderr(&overlaps).0.into(),
            chunk.iter().all(|o| o.result.converged).into(),
            Cell::Missing,
            theory.into(),
        ])?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::lambda_c;

    fn summary(table: &CurveTable, column: &str) -> Vec<f64> {
        let row = table.column_index("row").unwrap();
        let c = table.column_index(column).unwrap();
        table.rows().iter().filter(|r| r[row].as_str() == Some("summary")).map(|r| r[c].as_f64().unwrap()).collect()
    }

    #[test]
    fn window_around_threshold_is_skipped() {
        let lc = lambda_c(3).unwrap();
        let spec = SweepSpec::new(vec![3], vec![6], vec![0.5, lc + 0.01, lc - 0.019, 2.5], 1, 0);
        let t = correlation_experiment(&spec, &OptimizerConfig { restarts: 2, ..Default::default() }).unwrap();
        assert_eq!(summary(&t, "overlap").len(), 2);
        assert_eq!(t.metadata.config["excluded_near_lambda_c"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn relative_lambdas_scale_by_threshold() {
        let mut spec = SweepSpec::new(vec![3, 4], vec![5], vec![0.5, 1.0, 2.0], 1, 0);
        spec.lambda_relative = true;
        let t = correlation_experiment(&spec, &OptimizerConfig { restarts: 1, ..Default::default() }).unwrap();
        let lambdas = summary(&t, "lambda");
        assert_eq!(lambdas.len(), 4);
        assert!((lambdas[1] - 2.0 * lambda_c(3).unwrap()).abs() < 1e-12);
        assert!((lambdas[3] - 2.0 * lambda_c(4).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn below_threshold_overlap_is_small() {
        let lc = lambda_c(3).unwrap();
        let spec = SweepSpec::new(vec![3], vec![40], vec![0.5 * lc], 50, 3);
        let cfg = OptimizerConfig { restarts: 5, ..Default::default() };
        let t = correlation_experiment(&spec, &cfg).unwrap();
        let mean = summary(&t, "overlap")[0];
        assert!(mean < 0.35, "mean overlap {mean}");
        assert!(summary(&t, "theory_sqrt_q_star")[0] == 0.0);
    }

    #[test]
    fn overlap_jumps_across_threshold() {
        let lc = lambda_c(3).unwrap();
        let lambdas: Vec<f64> = (0..9).map(|i| lc * (0.6 + 0.1 * i as f64)).collect();
        let spec = SweepSpec::new(vec![3], vec![30], lambdas, 10, 5);
        let t = correlation_experiment(&spec, &OptimizerConfig { restarts: 4, ..Default::default() }).unwrap();
        let theory = summary(&t, "theory_sqrt_q_star");
        let jump = theory.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(jump > 0.3, "theory jump {jump}");
        let coarse = SweepSpec::new(vec![3], vec![40], vec![0.8 * lc, 1.2 * lc], 20, 5);
        let t = correlation_experiment(&coarse, &OptimizerConfig { restarts: 4, ..Default::default() }).unwrap();
        let mc = summary(&t, "overlap");
        assert!(mc[1] - mc[0] > 0.3, "empirical overlaps {mc:?}");
    }

    #[test]
    fn decomposition_is_exact() {
        let spec = SweepSpec::new(vec![3, 4], vec![7], vec![0.0, 1.0, 3.0], 3, 8);
        let t = ml_value_experiment(&spec, &OptimizerConfig { restarts: 3, ..Default::default() }).unwrap();
        let row = t.column_index("row").unwrap();
        let gap = t.column_index("decomposition_gap").unwrap();
        for r in t.rows().iter().filter(|r| r[row].as_str() == Some("trial")) {
            assert!(r[gap].as_f64().unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_overlap_is_one() {
        let mut spec = SweepSpec::new(vec![3, 4], vec![8], vec![0.3, 1.0, 4.0], 3, 2);
        spec.noiseless = true;
        let cfg = OptimizerConfig { restarts: 3, init_mode: crate::montecarlo::InitMode::Random, ..Default::default() };
        let t = correlation_experiment(&spec, &cfg).unwrap();
        for o in summary(&t, "overlap") {
            assert!((o - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_trials_give_empty_table() {
        let spec = SweepSpec::new(vec![3], vec![5], vec![1.0], 0, 0);
        let t = ml_value_experiment(&spec, &OptimizerConfig::default()).unwrap();
        assert!(t.is_empty());
        assert!(t.to_csv_string().unwrap().contains("theory_ml_limit"));
    }

    #[test]
    fn tables_do_not_depend_on_threads() {
        let spec = SweepSpec::new(vec![3], vec![6], vec![0.4, 2.0], 6, 21);
        let cfg = OptimizerConfig { restarts: 3, ..Default::default() };
        let a = correlation_experiment(&spec.clone().with_threads(Some(1)), &cfg).unwrap();
        let b = correlation_experiment(&spec.with_threads(Some(4)), &cfg).unwrap();
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
    }
}
