//! Overlap of two independent samples from `π_λ(dx) ∝ exp(−λ H(x)) dx`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{self, label, StreamRng};
use crate::tensor::{dot, project_tangent, sample_sphere_with, SymmetricTensor};

use super::free_energy::MAX_FREE_ENERGY_DIM;

const ADAPT_WINDOW: usize = 100;
const TARGET_ACCEPTANCE: (f64, f64) = (0.3, 0.5);
const MAX_STEP: f64 = 1e3;
const MIN_STEP: f64 = 1e-6;
const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub steps: usize,
    pub initial_step: f64,
    /// Exponent `p` in `|R₁₂|^p`; `None` uses the tensor order.
    pub power: Option<u32>,
    pub chain_seeds: [u64; 2],
}

impl McmcConfig {
    pub fn seeded(seed: u64) -> Self {
        Self {
            burn_in: 5_000,
            steps: 50_000,
            initial_step: 0.5,
            power: None,
            chain_seeds: [rng::derive(seed, &[label::CHAIN, 0]), rng::derive(seed, &[label::CHAIN, 1])],
        }
    }

    pub fn swapped(mut self) -> Self {
        self.chain_seeds.swap(0, 1);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsEstimate {
    /// Time average of `|⟨x¹_t, x²_t⟩|^p` after burn-in.
    pub mean: f64,
    /// Batch-means standard error.
    pub stderr: f64,
    pub acceptance: [f64; 2],
    pub step_sizes: [f64; 2],
}

struct Chain<'a> {
    w: &'a SymmetricTensor,
    beta: f64,
    x: Vec<f64>,
    energy: f64,
    step: f64,
    rng: StreamRng,
    accepted: usize,
    proposed: usize,
}

impl<'a> Chain<'a> {
    fn new(w: &'a SymmetricTensor, lambda: f64, step: f64, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed);
        let x = sample_sphere_with(w.dim(), &mut rng)?.into_inner();
        let beta = lambda * (w.dim() as f64).sqrt();
        let energy = beta * w.contract_full(&x);
        Ok(Self { w, beta, x, energy, step, rng, accepted: 0, proposed: 0 })
    }

    /// One Metropolis step with proposal `normalize(x + σ ξ)`, `ξ` a
    /// Gaussian tangent vector. The proposal density depends only on
    /// `⟨x, y⟩`, so it is symmetric.
    fn advance(&mut self) {
        let xi: Vec<f64> = (0..self.x.len()).map(|_| self.rng.sample::<f64, _>(StandardNormal)).collect();
        let xi = project_tangent(&self.x, xi);
        let mut y: Vec<f64> = self.x.iter().zip(&xi).map(|(a, b)| a + self.step * b).collect();
        let norm = dot(&y, &y).sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        let energy = self.beta * self.w.contract_full(&y);
        self.proposed += 1;
        let u: f64 = self.rng.random();
        if u.ln() < self.energy - energy {
            self.x = y;
            self.energy = energy;
            self.accepted += 1;
        }
    }

    fn take_rate(&mut self) -> f64 {
        let r = self.accepted as f64 / self.proposed.max(1) as f64;
        self.accepted = 0;
        self.proposed = 0;
        r
    }

    fn adapt(&mut self) -> Result<()> {
        let rate = self.take_rate();
        if rate < TARGET_ACCEPTANCE.0 {
            self.step *= 0.7;
        } else if rate > TARGET_ACCEPTANCE.1 {
            self.step = (self.step * 1.4).min(MAX_STEP);
        }
        if self.step < MIN_STEP {
            return Err(Error::Config(format!(
                "Metropolis step size fell below {MIN_STEP} while adapting to the acceptance window"
            )));
        }
        Ok(())
    }
}

/// Two independent Metropolis chains targeting `π_λ`, with step sizes
/// adapted toward 30 to 50 percent acceptance during burn-in.
pub fn gibbs_overlap_probe(w: &SymmetricTensor, lambda: f64, config: &McmcConfig) -> Result<GibbsEstimate> {
    if w.dim() > MAX_FREE_ENERGY_DIM {
        return Err(Error::Unsupported(format!(
            "Gibbs sampling is limited to N <= {MAX_FREE_ENERGY_DIM}, got {}",
            w.dim()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if config.steps < BATCHES || !(config.initial_step > 0.0) {
        return Err(Error::Config(format!("need steps >= {BATCHES} and a positive initial step")));
    }
    let power = config.power.unwrap_or(w.order() as u32) as i32;
    let mut chains = [
        Chain::new(w, lambda, config.initial_step, config.chain_seeds[0])?,
        Chain::new(w, lambda, config.initial_step, config.chain_seeds[1])?,
    ];
    for t in 1..=config.burn_in {
        for c in chains.iter_mut() {
            c.advance();
            if t % ADAPT_WINDOW == 0 {
                c.adapt()?;
            }
        }
    }
    chains.iter_mut().for_each(|c| {
        c.take_rate();
    });
    let batch = config.steps / BATCHES;
    let used = batch * BATCHES;
    let mut batch_means = vec![0.0; BATCHES];
    for t in 0..used {
        for c in chains.iter_mut() {
            c.advance();
        }
        batch_means[t / batch] += dot(&chains[0].x, &chains[1].x).abs().powi(power);
    }
    batch_means.iter_mut().for_each(|b| *b /= batch as f64);
    let (mean, stderr) = super::mean_and_stderr(&batch_means);
    let acceptance = [chains[0].take_rate(), chains[1].take_rate()];
    Ok(GibbsEstimate { mean, stderr, acceptance, step_sizes: [chains[0].step, chains[1].step] })
}
