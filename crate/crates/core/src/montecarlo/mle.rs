//! Maximum likelihood on the sphere: restarted tensor power iteration or
//! Riemannian gradient ascent, and a grid oracle for `N ≤ 3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, label};
use crate::tensor::{dot, project_tangent, sample_sphere_with, SphereVector, SymmetricTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Random,
    Planted,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PowerIteration,
    RiemannianAscent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basin {
    RandomInit,
    PlantedInit,
}

impl Basin {
    pub fn as_str(self) -> &'static str {
        match self {
            Basin::RandomInit => "random_init",
            Basin::PlantedInit => "planted_init",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Random restarts; `Both` adds the planted start on top.
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once `1 − |⟨x_t, x_{t+1}⟩| < tol`.
    pub tol: f64,
    pub init_mode: InitMode,
    pub method: Method,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 1000,
            tol: 1e-12,
            init_mode: InitMode::Both,
            method: Method::PowerIteration,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Best point found from one kind of start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinResult {
    pub basin: Basin,
    pub objective: f64,
    pub overlap: Option<f64>,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleResult {
    pub estimate: SphereVector,
    /// `⟨x̂⊗k, Y⟩ / √N`.
    pub objective: f64,
    /// `|⟨x̂, X⟩|` when the truth is known.
    pub overlap: Option<f64>,
    pub iters: usize,
    pub converged: bool,
    pub basin: Basin,
    /// Best result per start kind, random first.
    pub basins: Vec<BasinResult>,
}

struct Ascent {
    x: Vec<f64>,
    value: f64,
    iters: usize,
    converged: bool,
}

fn value_of(y: &SymmetricTensor, x: &[f64]) -> f64 {
    y.contract_full(x)
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = dot(&v, &v).sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|a| *a /= n);
    Some(v)
}

/// Shifted power iteration `x ← ±normalize(Y[x^{k−1}] + αx)`. The shift
/// starts at zero and doubles whenever a step would lower the objective, so
/// the objective is non-decreasing along the run.
fn power_iteration(y: &SymmetricTensor, start: Vec<f64>, max_iters: usize, tol: f64) -> Ascent {
    let odd = y.order() % 2 == 1;
    let mut x = start;
    let mut value = value_of(y, &x);
    let mut shift = 0.0f64;
    for iter in 0..max_iters {
        let g = y.contract_vector(&x);
        let gnorm = dot(&g, &g).sqrt();
        let mut step = None;
        for _ in 0..80 {
            let cand: Vec<f64> = g.iter().zip(&x).map(|(gi, xi)| gi + shift * xi).collect();
            if let Some(mut c) = normalized(cand) {
                let mut v = value_of(y, &c);
                if odd && v < 0.0 {
                    c.iter_mut().for_each(|a| *a = -*a);
                    v = -v;
                }
                if v >= value {
                    step = Some((c, v));
                    break;
                }
            }
            shift = if shift == 0.0 { gnorm.max(f64::MIN_POSITIVE) } else { 2.0 * shift };
        }
        let Some((next, v)) = step else {
            return Ascent { x, value, iters: iter, converged: true };
        };
        debug_assert!(v >= value);
        let moved = 1.0 - dot(&next, &x).abs();
        x = next;
        value = v;
        shift *= 0.5;
        if moved < tol {
            return Ascent { x, value, iters: iter + 1, converged: true };
        }
    }
    Ascent { x, value, iters: max_iters, converged: false }
}

/// Riemannian gradient ascent with the normalization retraction and an
/// Armijo line search.
fn riemannian_ascent(y: &SymmetricTensor, start: Vec<f64>, max_iters: usize, tol: f64) -> Ascent {
    let mut x = start;
    let mut value = value_of(y, &x);
    let mut eta = 1.0 / (y.order() as f64 * value.abs().max(1.0));
    for iter in 0..max_iters {
        let grad = project_tangent(&x, y.euclidean_gradient(&x));
        let g2 = dot(&grad, &grad);
        if g2.sqrt() <= 1e-14 * value.abs().max(1.0) {
            return Ascent { x, value, iters: iter, converged: true };
        }
        let mut step = None;
        for _ in 0..80 {
            let cand: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi + eta * gi).collect();
            if let Some(c) = normalized(cand) {
                let v = value_of(y, &c);
                if v >= value + 1e-4 * eta * g2 {
                    step = Some((c, v));
                    break;
                }
            }
            eta *= 0.5;
        }
        let Some((next, v)) = step else {
            return Ascent { x, value, iters: iter, converged: true };
        };
        let moved = 1.0 - dot(&next, &x).abs();
        x = next;
        value = v;
        eta *= 2.0;
        if moved < tol {
            return Ascent { x, value, iters: iter + 1, converged: true };
        }
    }
    Ascent { x, value, iters: max_iters, converged: false }
}

fn ascend(y: &SymmetricTensor, start: Vec<f64>, config: &OptimizerConfig) -> Ascent {
    match config.method {
        Method::PowerIteration => power_iteration(y, start, config.max_iters, config.tol),
        Method::RiemannianAscent => riemannian_ascent(y, start, config.max_iters, config.tol),
    }
}

/// Maximize `⟨Y, x⊗k⟩` over the sphere from the configured starts.
///
/// Random starts come from `config.seed`. With `Both` and no truth the
/// planted start is replaced by one more random start, so null and
/// alternative runs use the same number of starts.
pub fn mle_optimize(y: &SymmetricTensor, config: &OptimizerConfig, truth: Option<&SphereVector>) -> Result<MleResult> {
    config.validate()?;
    let n = y.dim();
    if let Some(t) = truth {
        y.check_dim(t.as_slice())?;
    }
    let planted = matches!(config.init_mode, InitMode::Planted | InitMode::Both);
    if config.init_mode == InitMode::Planted && truth.is_none() {
        return Err(Error::Config("planted initialization needs the ground truth".into()));
    }
    let mut random_count = match config.init_mode {
        InitMode::Random | InitMode::Both => config.restarts,
        InitMode::Planted => 0,
    };
    if planted && truth.is_none() {
        random_count += 1;
    }

    let mut starts: Vec<(Basin, Vec<f64>)> = Vec::new();
    for r in 0..random_count {
        let mut g = rng::substream(config.seed, &[label::RESTARTS, r as u64]);
        starts.push((Basin::RandomInit, sample_sphere_with(n, &mut g)?.into_inner()));
    }
    if let (true, Some(t)) = (planted, truth) {
        starts.push((Basin::PlantedInit, t.as_slice().to_vec()));
    }

    let scale = (n as f64).sqrt();
    let even = y.order() % 2 == 0;
    let mut per_basin: Vec<(BasinResult, Vec<f64>)> = Vec::new();
    for (basin, start) in starts {
        let run = ascend(y, start, config);
        let estimate = SphereVector::new(run.x.clone())?;
        let overlap = truth.map(|t| t.dot(&estimate).abs().min(1.0));
        let result = BasinResult { basin, objective: run.value / scale, overlap, iters: run.iters, converged: run.converged };
        match per_basin.iter_mut().find(|(b, _)| b.basin == basin) {
            Some(slot) => {
                if result.objective > slot.0.objective {
                    *slot = (result, run.x);
                }
            }
            None => per_basin.push((result, run.x)),
        }
    }
    let (best, x) = per_basin
        .iter()
        .fold(None::<&(BasinResult, Vec<f64>)>, |acc, item| match acc {
            Some(a) if a.0.objective >= item.0.objective => Some(a),
            _ => Some(item),
        })
        .expect("at least one start");
    let mut estimate = SphereVector::new(x.clone())?;
    if even {
        estimate = estimate.canonical_sign();
    }
    let objective = value_of(y, estimate.as_slice()) / scale;
    Ok(MleResult {
        overlap: truth.map(|t| t.dot(&estimate).abs().min(1.0)),
        objective,
        iters: best.iters,
        converged: best.converged,
        basin: best.basin,
        basins: per_basin.iter().map(|(b, _)| b.clone()).collect(),
        estimate,
    })
}

/// Exhaustive search over an angle grid (`N = 2`) or a spherical Fibonacci
/// grid (`N = 3`) of `grid_points` points, polished by gradient ascent.
/// Returns the maximizer and the unnormalized value `⟨Y, x⊗k⟩`.
pub fn brute_force_max(y: &SymmetricTensor, grid_points: usize) -> Result<(SphereVector, f64)> {
    let n = y.dim();
    if !(n == 2 || n == 3) {
        return Err(Error::Unsupported(format!("brute force search supports N in {{2, 3}}, got {n}")));
    }
    if grid_points == 0 {
        return Err(Error::InvalidInput("grid_points must be positive".into()));
    }
    let point = |i: usize| -> Vec<f64> {
        if n == 2 {
            let a = std::f64::consts::TAU * i as f64 / grid_points as f64;
            vec![a.cos(), a.sin()]
        } else {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / grid_points as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let a = golden * i as f64;
            vec![r * a.cos(), r * a.sin(), z]
        }
    };
    let mut best = (f64::NEG_INFINITY, 0usize);
    for i in 0..grid_points {
        let v = value_of(y, &point(i));
        if v > best.0 {
            best = (v, i);
        }
    }
    let polished = riemannian_ascent(y, point(best.1), 10_000, 1e-16);
    let (x, v) = if polished.value >= best.0 { (polished.x, polished.value) } else { (point(best.1), best.0) };
    Ok((SphereVector::new(x)?, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{generate_observation, sample_sphere_uniform, ModelParams};

    fn random_tensor(n: usize, k: usize, seed: u64) -> SymmetricTensor {
        let params = ModelParams::new(n, k, 0.0, seed).unwrap();
        crate::tensor::sample_noise(&params).unwrap()
    }

    #[test]
    fn noiseless_recovers_signal() {
        let x = sample_sphere_uniform(6, 3).unwrap();
        for k in [3, 4] {
            let y = SymmetricTensor::rank_one(x.as_slice(), k, 1.5 * 6f64.sqrt()).unwrap();
            for method in [Method::PowerIteration, Method::RiemannianAscent] {
                let cfg = OptimizerConfig { init_mode: InitMode::Random, method, restarts: 4, ..Default::default() };
                let r = mle_optimize(&y, &cfg, Some(&x)).unwrap();
                assert!((r.overlap.unwrap() - 1.0).abs() < 1e-8, "k={k} {method:?}");
                assert!((r.objective - 1.5).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn power_iteration_is_monotone() {
        for (k, seed) in [(3, 1), (4, 2), (5, 3)] {
            let y = random_tensor(5, k, seed);
            let mut g = rng::stream(seed);
            let mut x = sample_sphere_with(5, &mut g).unwrap().into_inner();
            let mut prev = value_of(&y, &x);
            for _ in 0..50 {
                let step = power_iteration(&y, x.clone(), 1, 0.0);
                assert!(step.value >= prev);
                prev = step.value;
                x = step.x;
            }
        }
    }

    #[test]
    fn matches_grid_oracle_in_two_dimensions() {
        for seed in 0..10 {
            let y = random_tensor(2, 3, seed);
            let r = mle_optimize(&y, &OptimizerConfig { seed, ..Default::default() }, None).unwrap();
            let (_, v) = brute_force_max(&y, 100_000).unwrap();
            assert!((r.objective * 2f64.sqrt() - v).abs() < 1e-4, "seed {seed}");
        }
    }

    #[test]
    fn brute_force_examples() {
        let e1 = SymmetricTensor::rank_one(&[1.0, 0.0], 3, 1.0).unwrap();
        let (x, v) = brute_force_max(&e1, 1000).unwrap();
        assert!((v - 1.0).abs() < 1e-6 && (x.as_slice()[0].abs() - 1.0).abs() < 1e-6);
        let y = random_tensor(3, 4, 5);
        let coarse = brute_force_max(&y, 10_000).unwrap().1;
        let fine = brute_force_max(&y, 100_000).unwrap().1;
        assert!((coarse - fine).abs() < 1e-3);
        assert!(matches!(brute_force_max(&random_tensor(4, 3, 1), 10), Err(Error::Unsupported(_))));
    }

    #[test]
    fn objective_and_overlap_are_consistent() {
        let params = ModelParams::new(8, 3, 2.0, 11).unwrap();
        let obs = generate_observation(&params, None).unwrap();
        let r = mle_optimize(&obs.data, &OptimizerConfig::default(), Some(&obs.signal)).unwrap();
        let direct = obs.data.contract_full(r.estimate.as_slice()) / 8f64.sqrt();
        assert!((r.objective - direct).abs() < 1e-10);
        let o = r.overlap.unwrap();
        assert!((0.0..=1.0).contains(&o));
        assert_eq!(r.basins.len(), 2);
    }

    #[test]
    fn even_order_sign_is_canonical() {
        let y = random_tensor(4, 4, 9);
        let r = mle_optimize(&y, &OptimizerConfig::default(), None).unwrap();
        let first = r.estimate.as_slice().iter().find(|v| **v != 0.0).unwrap();
        assert!(*first > 0.0);
    }

    #[test]
    fn config_validation() {
        let y = random_tensor(3, 3, 0);
        let bad = OptimizerConfig { restarts: 0, ..Default::default() };
        assert!(mle_optimize(&y, &bad, None).is_err());
        let planted = OptimizerConfig { init_mode: InitMode::Planted, ..Default::default() };
        assert!(mle_optimize(&y, &planted, None).is_err());
    }
}
