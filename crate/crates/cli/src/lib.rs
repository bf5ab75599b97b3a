//! Subcommands of the `spiked` binary. Each one builds a [`CurveTable`];
//! [`execute`] writes it as CSV to stdout or `--out`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use spiked_core::landscape::{e_lambda, SolverChoice, SolverConfig};
use spiked_core::montecarlo::{
    correlation_experiment, detection_test, gibbs_overlap_probe, ml_value_experiment, run_indexed,
    variance_decay_probe, DetectionSpec, InitMode, McmcConfig, Method, OptimizerConfig, SweepSpec,
};
use spiked_core::replica::quadratic_bound_scan;
use spiked_core::scalar::{lambda_c, threshold_report};
use spiked_core::tensor::sample_noise;
use spiked_core::{rng, Cell, Column, CurveTable, Metadata, ModelParams};

#[derive(Debug)]
pub enum CliError {
    /// Bad flag values; exit code 2.
    Usage(String),
    /// Failure while computing or writing; exit code 1.
    Runtime(spiked_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<spiked_core::Error> for CliError {
    fn from(e: spiked_core::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Parser)]
#[command(name = "spiked", version, about = "Thresholds, landscapes and Monte Carlo experiments for the spiked tensor model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Threshold table: lambda_s, z_k, GS_k and both routes to lambda_c.
    Thresholds(ThresholdsArgs),
    /// Constrained maximum likelihood E_lambda(m) over an m-grid.
    Landscape(LandscapeArgs),
    /// Overlap of the maximum-likelihood estimate against sqrt(q_*).
    Correlation(SweepArgs),
    /// Normalized maximum-likelihood value against its limit.
    Mlvalue(SweepArgs),
    /// Calibrated detection test with the maximum-likelihood statistic.
    Detect(DetectArgs),
    /// Free energy and its variance across noise draws for several N.
    FreeEnergy(FreeEnergyArgs),
    /// Two-replica overlap under the Gibbs measure.
    Overlap(OverlapArgs),
    /// Quadratic bound on the two-replica functional.
    ReplicaScan(ReplicaScanArgs),
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; output does not depend on this.
    #[arg(long)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Record the wall-clock time in the metadata (makes output non-reproducible).
    #[arg(long)]
    #[serde(skip)]
    pub timestamp: bool,
}

/// `--lambda a,b,c` or `--lambda-min/--lambda-max/--lambda-steps`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct LambdaGrid {
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["lambda_min", "lambda_max"])]
    pub lambda: Option<Vec<f64>>,
    #[arg(long, requires = "lambda_max")]
    pub lambda_min: Option<f64>,
    #[arg(long, requires = "lambda_min")]
    pub lambda_max: Option<f64>,
    #[arg(long, default_value_t = 11)]
    pub lambda_steps: usize,
    /// Read lambda values as multiples of lambda_c(k).
    #[arg(long)]
    pub relative: bool,
}

impl LambdaGrid {
    fn values(&self, default: &[f64]) -> CliResult<Vec<f64>> {
        let values = match (&self.lambda, self.lambda_min, self.lambda_max) {
            (Some(v), _, _) => v.clone(),
            (None, Some(lo), Some(hi)) => linspace(lo, hi, self.lambda_steps)?,
            _ => default.to_vec(),
        };
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return usage(format!("lambda values must be finite and >= 0, got {bad}"));
        }
        Ok(values)
    }

    fn resolve(&self, default: &[f64], k: usize) -> CliResult<Vec<f64>> {
        let values = self.values(default)?;
        if !self.relative {
            return Ok(values);
        }
        let lc = lambda_c(k)?;
        Ok(values.into_iter().map(|v| v * lc).collect())
    }
}

fn linspace(lo: f64, hi: f64, steps: usize) -> CliResult<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return usage(format!("need finite --lambda-min <= --lambda-max, got {lo} and {hi}"));
    }
    match steps {
        0 => usage("--lambda-steps must be positive"),
        1 => Ok(vec![lo]),
        _ => Ok((0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitArg {
    Random,
    Planted,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Power,
    Riemannian,
}

/// Flags of the sphere optimizer.
#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizerArgs {
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Both)]
    pub init: InitArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Power)]
    pub method: MethodArg,
}

impl OptimizerArgs {
    fn config(&self) -> CliResult<OptimizerConfig> {
        let config = OptimizerConfig {
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            init_mode: match self.init {
                InitArg::Random => InitMode::Random,
                InitArg::Planted => InitMode::Planted,
                InitArg::Both => InitMode::Both,
            },
            method: match self.method {
                MethodArg::Power => Method::PowerIteration,
                MethodArg::Riemannian => Method::RiemannianAscent,
            },
            seed: 0,
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThresholdsArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 4, 5, 6, 7, 8])]
    pub k: Vec<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverArg {
    Both,
    Grid,
    Parametric,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LandscapeArgs {
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[command(flatten)]
    pub lambdas: LambdaGrid,
    #[arg(long, default_value_t = 0.0)]
    pub m_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub m_max: f64,
    #[arg(long, default_value_t = 51)]
    pub m_steps: usize,
    #[arg(long, default_value_t = 512)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Nelder-Mead starts of the parametric solver.
    #[arg(long, default_value_t = 32)]
    pub starts: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::Both)]
    pub solver: SolverArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [3usize])]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [40usize])]
    pub n: Vec<usize>,
    #[command(flatten)]
    pub lambdas: LambdaGrid,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Use the raw Gaussian noise tensor without symmetrizing it.
    #[arg(long)]
    pub no_symmetrize: bool,
    /// k in {3,4,5,6} and lambda/lambda_c in {0.5, 0.6, ..., 2.0}.
    #[arg(long)]
    pub figure_preset: bool,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectArgs {
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    #[command(flatten)]
    pub lambdas: LambdaGrid,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Null draws used to calibrate the threshold.
    #[arg(long, default_value_t = 200)]
    pub null_runs: usize,
    #[arg(long)]
    pub no_symmetrize: bool,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FreeEnergyArgs {
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 6, 8, 10])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 0.3)]
    pub lambda: f64,
    /// Noise draws per N.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Sphere samples per noise draw.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OverlapArgs {
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [6usize, 8, 10])]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.3])]
    pub lambda: Vec<f64>,
    /// Noise draws per (N, lambda).
    #[arg(long, default_value_t = 4)]
    pub trials: usize,
    #[arg(long, default_value_t = 5_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 50_000)]
    pub steps: usize,
    /// Exponent p of |R12|^p; defaults to k.
    #[arg(long)]
    pub power: Option<u32>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplicaScanArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 6])]
    pub k: Vec<usize>,
    #[command(flatten)]
    pub lambdas: LambdaGrid,
    /// Points of the u-grid.
    #[arg(long, default_value_t = 100)]
    pub grid_size: usize,
    #[command(flatten)]
    pub common: Common,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Thresholds(a) => &a.common,
            Command::Landscape(a) => &a.common,
            Command::Correlation(a) | Command::Mlvalue(a) => &a.common,
            Command::Detect(a) => &a.common,
            Command::FreeEnergy(a) => &a.common,
            Command::Overlap(a) => &a.common,
            Command::ReplicaScan(a) => &a.common,
        }
    }
}

fn metadata(command: &str, common: &Common, args: &impl Serialize) -> Metadata {
    let config = serde_json::to_value(args).unwrap_or(serde_json::Value::Null);
    let meta = Metadata::new(command, Some(common.seed), config);
    if common.timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        meta.with_timestamp(format!("unix:{secs}"))
    } else {
        meta
    }
}

fn check_k(k: usize) -> CliResult<()> {
    if k < 3 {
        return usage(format!("--k must be at least 3, got {k}"));
    }
    Ok(())
}

/// Build the table for `command` without writing it.
pub fn build_table(command: &Command) -> CliResult<CurveTable> {
    match command {
        Command::Thresholds(a) => cmd_thresholds(a),
        Command::Landscape(a) => cmd_landscape(a),
        Command::Correlation(a) => cmd_correlation(a),
        Command::Mlvalue(a) => cmd_mlvalue(a),
        Command::Detect(a) => cmd_detect(a),
        Command::FreeEnergy(a) => cmd_free_energy(a),
        Command::Overlap(a) => cmd_overlap(a),
        Command::ReplicaScan(a) => cmd_replica_scan(a),
    }
}

/// Build the table and write it to `--out` or stdout.
pub fn execute(cli: &Cli) -> CliResult<()> {
    let table = build_table(&cli.command)?;
    match &cli.command.common().out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            table.write_to(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            table.write_to(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn cmd_thresholds(args: &ThresholdsArgs) -> CliResult<CurveTable> {
    let mut table = CurveTable::new(
        metadata("thresholds", &args.common, args),
        vec![
            Column::int("k"),
            Column::real("lambda_s"),
            Column::real("z_k"),
            Column::real("gs_k"),
            Column::real("lambda_c_bisect"),
            Column::real("lambda_c_closed"),
            Column::real("lambda_c_gap"),
            Column::real("q_s_at_lambda_c"),
            Column::text("error"),
        ],
    )?;
    for &k in &args.k {
        match threshold_report(k) {
            Ok(r) => table.push_row(vec![
                k.into(),
                r.lambda_s.into(),
                r.z_k.into(),
                r.gs_k.into(),
                r.lambda_c_bisect.into(),
                r.lambda_c_closed.into(),
                (r.lambda_c_bisect - r.lambda_c_closed).abs().into(),
                r.q_s_at_lambda_c.into(),
                Cell::Missing,
            ])?,
            Err(e) => {
                let mut row = vec![Cell::from(k)];
                row.extend(std::iter::repeat_n(Cell::Missing, 7));
                row.push(e.to_string().into());
                table.push_row(row)?;
            }
        }
    }
    Ok(table)
}

pub fn cmd_landscape(args: &LandscapeArgs) -> CliResult<CurveTable> {
    check_k(args.k)?;
    if !(args.m_min >= -1.0 && args.m_max <= 1.0 && args.m_min <= args.m_max) {
        return usage("need -1 <= --m-min <= --m-max <= 1");
    }
    let lambdas = args.lambdas.resolve(&[1.0, 1.299, 1.35, 1.405, 1.5], args.k)?;
    let ms = match args.m_steps {
        0 => return usage("--m-steps must be positive"),
        1 => vec![args.m_min],
        s => (0..s).map(|i| args.m_min + (args.m_max - args.m_min) * i as f64 / (s - 1) as f64).collect(),
    };
    let config = SolverConfig {
        grid_size: args.grid_size,
        max_iters: args.max_iters,
        grid_tol: args.tol,
        starts: args.starts,
        seed: args.common.seed,
        solvers: match args.solver {
            SolverArg::Both => SolverChoice::Both,
            SolverArg::Grid => SolverChoice::Grid,
            SolverArg::Parametric => SolverChoice::Parametric,
        },
        ..SolverConfig::default()
    };
    // The ground-state part of E does not depend on lambda: solve once per m.
    let k = args.k;
    let points = run_indexed(args.common.threads, ms.len(), |i| Ok(e_lambda(ms[i], 0.0, k, &config)))?;
    let mut table = CurveTable::new(
        metadata("landscape", &args.common, args),
        vec![
            Column::int("k"),
            Column::real("lambda"),
            Column::real("m"),
            Column::real("e"),
            Column::text("branch"),
            Column::text("warning"),
            Column::text("error"),
        ],
    )?;
    for &lambda in &lambdas {
        for (m, point) in ms.iter().zip(&points) {
            let row = match point {
                Ok(p) => vec![
                    k.into(),
                    lambda.into(),
                    (*m).into(),
                    (lambda * m.powi(k as i32) + p.value).into(),
                    p.branch.as_str().into(),
                    p.warning.clone().into(),
                    Cell::Missing,
                ],
                Err(e) => vec![
                    k.into(),
                    lambda.into(),
                    (*m).into(),
                    Cell::Missing,
                    Cell::Missing,
                    Cell::Missing,
                    e.to_string().into(),
                ],
            };
            table.push_row(row)?;
        }
    }
    Ok(table)
}

fn sweep_spec(args: &SweepArgs) -> CliResult<SweepSpec> {
    let (ks, lambdas, relative) = if args.figure_preset {
        let grid: Vec<f64> = (5..=20).map(|i| i as f64 / 10.0).collect();
        (vec![3, 4, 5, 6], args.lambdas.values(&grid)?, true)
    } else {
        let default: Vec<f64> = (0..=12).map(|i| i as f64 * 0.25).collect();
        (args.k.clone(), args.lambdas.values(&default)?, args.lambdas.relative)
    };
    for &k in &ks {
        check_k(k)?;
    }
    if let Some(n) = args.n.iter().find(|n| **n < 2) {
        return usage(format!("--n must be at least 2, got {n}"));
    }
    Ok(SweepSpec {
        symmetrize: !args.no_symmetrize,
        lambda_relative: relative,
        ..SweepSpec::new(ks, args.n.clone(), lambdas, args.trials, args.common.seed).with_threads(args.common.threads)
    })
}

pub fn cmd_correlation(args: &SweepArgs) -> CliResult<CurveTable> {
    let mut table = correlation_experiment(&sweep_spec(args)?, &args.optimizer.config()?)?;
    table.metadata = metadata_with_core("correlation", &args.common, args, &table.metadata);
    Ok(table)
}

pub fn cmd_mlvalue(args: &SweepArgs) -> CliResult<CurveTable> {
    let mut table = ml_value_experiment(&sweep_spec(args)?, &args.optimizer.config()?)?;
    table.metadata = metadata_with_core("mlvalue", &args.common, args, &table.metadata);
    Ok(table)
}

/// CLI flags plus whatever the library recorded (e.g. excluded points).
fn metadata_with_core(command: &str, common: &Common, args: &impl Serialize, core: &Metadata) -> Metadata {
    let mut meta = metadata(command, common, args);
    meta.config = json!({ "flags": meta.config, "run": core.config });
    meta
}

pub fn cmd_detect(args: &DetectArgs) -> CliResult<CurveTable> {
    check_k(args.k)?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return usage(format!("--alpha must lie in (0, 1), got {}", args.alpha));
    }
    if args.null_runs == 0 {
        return usage("--null-runs must be positive");
    }
    if args.n < 2 {
        return usage(format!("--n must be at least 2, got {}", args.n));
    }
    let lc = lambda_c(args.k)?;
    let lambdas = args.lambdas.resolve(&[2.0 * lc], args.k)?;
    let spec = DetectionSpec {
        null_calibration_runs: args.null_runs,
        symmetrize: !args.no_symmetrize,
        threads: args.common.threads,
        ..DetectionSpec::new(args.k, args.n, lambdas, args.trials, args.alpha, args.common.seed)
    };
    let mut table = detection_test(&spec, &args.optimizer.config()?)?;
    table.metadata = metadata_with_core("detect", &args.common, args, &table.metadata);
    Ok(table)
}

pub fn cmd_free_energy(args: &FreeEnergyArgs) -> CliResult<CurveTable> {
    if args.k < 2 {
        return usage(format!("--k must be at least 2, got {}", args.k));
    }
    if args.trials < 2 {
        return usage("--trials must be at least 2 to estimate a variance");
    }
    let mut table =
        variance_decay_probe(args.k, args.lambda, &args.n, args.trials, args.samples, args.common.seed, args.common.threads)?;
    table.metadata = metadata_with_core("free-energy", &args.common, args, &table.metadata);
    Ok(table)
}

/// `E R^p` for `R` the first coordinate of a uniform point on the sphere,
/// `p` even: `∏_{j<p/2} (2j+1)/(N+2j)`.
fn uniform_even_moment(n: usize, p: u32) -> Option<f64> {
    (p % 2 == 0).then(|| (0..p / 2).map(|j| (2 * j + 1) as f64 / (n as f64 + 2.0 * j as f64)).product())
}

pub fn cmd_overlap(args: &OverlapArgs) -> CliResult<CurveTable> {
    if args.k < 2 {
        return usage(format!("--k must be at least 2, got {}", args.k));
    }
    let power = args.power.unwrap_or(args.k as u32);
    struct Task {
        n: usize,
        lambda: f64,
        trial: usize,
        point: usize,
    }
    let mut tasks = Vec::new();
    let mut point = 0usize;
    for &n in &args.n {
        for &lambda in &args.lambda {
            for trial in 0..args.trials {
                tasks.push(Task { n, lambda, trial, point });
            }
            point += 1;
        }
    }
    let seed = args.common.seed;
    let results = run_indexed(args.common.threads, tasks.len(), |i| {
        let t = &tasks[i];
        let trial_seed = rng::derive(seed, &[t.point as u64, t.trial as u64]);
        let w = sample_noise(&ModelParams::new(t.n, args.k, 0.0, trial_seed)?)?;
        let config = McmcConfig {
            burn_in: args.burn_in,
            steps: args.steps,
            power: Some(power),
            ..McmcConfig::seeded(trial_seed)
        };
        gibbs_overlap_probe(&w, t.lambda, &config)
    })?;
    let mut table = CurveTable::new(
        metadata("overlap", &args.common, args),
        vec![
            Column::text("row"),
            Column::int("k"),
            Column::int("n"),
            Column::real("lambda"),
            Column::int("trial"),
            Column::int("power"),
            Column::real("mean_abs_overlap_power"),
            Column::real("stderr"),
            Column::real("acceptance"),
            Column::real("uniform_moment"),
        ],
    )?;
    let mut start = 0;
    while start < tasks.len() {
        let end = start + args.trials;
        let (n, lambda) = (tasks[start].n, tasks[start].lambda);
        let uniform: Cell = uniform_even_moment(n, power).into();
        for (t, r) in tasks[start..end].iter().zip(&results[start..end]) {
            table.push_row(vec![
                "trial".into(),
                args.k.into(),
                n.into(),
                lambda.into(),
                t.trial.into(),
                (power as i64).into(),
                r.mean.into(),
                r.stderr.into(),
                (0.5 * (r.acceptance[0] + r.acceptance[1])).into(),
                uniform.clone(),
            ])?;
        }
        let means: Vec<f64> = results[start..end].iter().map(|r| r.mean).collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        // Disorder spread plus the within-chain error.
        let se = if means.len() > 1 {
            (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (means.len() as f64 - 1.0) / means.len() as f64).sqrt()
        } else {
            results[start].stderr
        };
        table.push_row(vec![
            "summary".into(),
            args.k.into(),
            n.into(),
            lambda.into(),
            Cell::Missing,
            (power as i64).into(),
            m.into(),
            se.into(),
            Cell::Missing,
            uniform,
        ])?;
        start = end;
    }
    Ok(table)
}

pub fn cmd_replica_scan(args: &ReplicaScanArgs) -> CliResult<CurveTable> {
    for &k in &args.k {
        check_k(k)?;
    }
    if args.grid_size == 0 {
        return usage("--grid-size must be positive");
    }
    let mut lambdas = args.lambdas.clone();
    let default = if lambdas.lambda.is_none() && lambdas.lambda_min.is_none() {
        lambdas.relative = true;
        vec![0.3, 0.6, 0.9]
    } else {
        Vec::new()
    };
    let mut jobs = Vec::new();
    for &k in &args.k {
        for lambda in lambdas.resolve(&default, k)? {
            jobs.push((k, lambda));
        }
    }
    let scans = run_indexed(args.common.threads, jobs.len(), |i| Ok(quadratic_bound_scan(jobs[i].1, jobs[i].0, args.grid_size)))?;
    let mut table = CurveTable::new(
        metadata("replica-scan", &args.common, args),
        vec![
            Column::text("row"),
            Column::int("k"),
            Column::real("lambda"),
            Column::real("u"),
            Column::real("inf_p"),
            Column::real("argmin_m"),
            Column::real("argmin_multiplier"),
            Column::real("bound"),
            Column::real("c_fit"),
            Column::bool("holds"),
            Column::bool("extrapolated"),
            Column::text("error"),
        ],
    )?;
    for ((k, lambda), scan) in jobs.iter().zip(scans) {
        match scan {
            Ok(s) => {
                for p in &s.points {
                    table.push_row(vec![
                        "point".into(),
                        (*k).into(),
                        (*lambda).into(),
                        p.u.into(),
                        p.inf_value.into(),
                        p.argmin_m.into(),
                        p.argmin_multiplier.into(),
                        p.bound.into(),
                        Cell::Missing,
                        Cell::Missing,
                        Cell::Missing,
                        Cell::Missing,
                    ])?;
                }
                table.push_row(vec![
                    "fit".into(),
                    (*k).into(),
                    (*lambda).into(),
                    Cell::Missing,
                    Cell::Missing,
                    Cell::Missing,
                    Cell::Missing,
                    Cell::Missing,
                    s.c_fit.into(),
                    s.holds.into(),
                    s.extrapolated.into(),
                    Cell::Missing,
                ])?;
            }
            Err(e) => {
                let mut row = vec![Cell::from("fit"), (*k).into(), (*lambda).into()];
                row.extend(std::iter::repeat_n(Cell::Missing, 8));
                row.push(e.to_string().into());
                table.push_row(row)?;
            }
        }
    }
    Ok(table)
}
