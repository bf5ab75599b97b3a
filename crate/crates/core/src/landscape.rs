//! The constrained likelihood landscape `E_λ(m)` and the ground-state
//! variational problem behind it.
//!
//! For a covariance mixture `ξ` and external field `h`,
//!
//! `P_h(φ) = ∫_0^1 ξ″(s)φ(s) + 1/φ(s) ds + (h² + ξ′(0))φ(0)`
//!
//! is minimized over positive, non-increasing, concave profiles `φ`, and
//! `G(ξ, h) = ½ min P_h`. The landscape is `E_λ(m) = λm^k + G(ξ_m, 0)` with
//! `ξ_m(t) = (m² + (1−m²)t)^k − m^{2k}`.
//!
//! Two minimizers are provided. The grid solver works on all concave
//! piecewise-linear profiles over a uniform grid and is the reference. The
//! parametric solver searches a five-parameter family (terminal value plus
//! two slope kinks) with multistart Nelder–Mead and is much cheaper.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{binomial, nelder_mead, SimplexSettings};
use crate::rng;
use crate::scalar;

/// Smallest terminal value the solvers consider.
pub const MIN_TERMINAL: f64 = 1e-8;

/// `ξ(t) = Σ_p a_p t^p` with nonnegative coefficients and `ξ(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureFunction {
    coefficients: Vec<f64>,
}

impl MixtureFunction {
    /// `coefficients[p]` multiplies `t^p`.
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Ok(Self { coefficients: vec![0.0] });
        }
        if coefficients[0] != 0.0 {
            return Err(Error::InvalidInput(format!("mixture needs xi(0) = 0, got constant term {}", coefficients[0])));
        }
        if let Some(c) = coefficients.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::InvalidInput(format!("mixture coefficients must be nonnegative, found {c}")));
        }
        Ok(Self { coefficients })
    }

    /// The pure mixture `ξ(t) = t^k`.
    pub fn pure(k: usize) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Self { coefficients: c }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn value(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn d1(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (p, &c)| acc * t + p as f64 * c)
    }

    pub fn d2(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (p, &c)| acc * t + (p * (p - 1)) as f64 * c)
    }

    pub fn d1_at_zero(&self) -> f64 {
        self.coefficients.get(1).copied().unwrap_or(0.0)
    }

    pub fn d1_at_one(&self) -> f64 {
        self.d1(1.0)
    }

    pub fn d2_at_one(&self) -> f64 {
        self.d2(1.0)
    }
}

/// `ξ_m(t) = (m² + (1−m²)t)^k − m^{2k}`, expanded in powers of `t`.
pub fn xi_m(m: f64, k: usize) -> Result<MixtureFunction> {
    if !(m.abs() <= 1.0) {
        return Err(Error::Domain(format!("xi_m needs |m| <= 1, got {m}")));
    }
    if k < 3 {
        return Err(Error::Domain(format!("xi_m needs k >= 3, got {k}")));
    }
    let m2 = m * m;
    let mut c = vec![0.0; k + 1];
    for j in 0..k {
        c[k - j] = binomial(k as u32, j as u32) * m2.powi(j as i32) * (1.0 - m2).powi((k - j) as i32);
    }
    MixtureFunction::new(c)
}

/// `φ(s) = c + Σ_i θ_i (1 − max(s, a_i))`: concave, non-increasing and
/// piecewise linear with `φ(1) = c`. The slope on `(s, 1)` is
/// `−Σ_{a_i < s} θ_i`, which only gets steeper as `s` grows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcaveProfile {
    terminal: f64,
    kinks: Vec<(f64, f64)>,
}

impl ConcaveProfile {
    pub fn new(terminal: f64, mut kinks: Vec<(f64, f64)>) -> Result<Self> {
        if !(terminal >= 0.0 && terminal.is_finite()) {
            return Err(Error::InvalidInput(format!("terminal value must be finite and >= 0, got {terminal}")));
        }
        for &(a, theta) in &kinks {
            if !(0.0..=1.0).contains(&a) || !(theta >= 0.0 && theta.is_finite()) {
                return Err(Error::InvalidInput(format!("invalid kink (a = {a}, theta = {theta})")));
            }
        }
        kinks.sort_by(|x, y| x.0.total_cmp(&y.0));
        Ok(Self { terminal, kinks })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(c, Vec::new())
    }

    pub fn terminal(&self) -> f64 {
        self.terminal
    }

    pub fn kinks(&self) -> &[(f64, f64)] {
        &self.kinks
    }

    pub fn value(&self, s: f64) -> f64 {
        self.terminal + self.kinks.iter().map(|&(a, t)| t * (1.0 - s.max(a))).sum::<f64>()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.terminal * factor, self.kinks.iter().map(|&(a, t)| (a, t * factor)).collect())
    }

    /// Breakpoints `0 = s_0 < … < s_n = 1` and the profile there.
    pub fn nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let mut s = vec![0.0];
        for &(a, _) in &self.kinks {
            if a > 0.0 && a < 1.0 && a > *s.last().unwrap() {
                s.push(a);
            }
        }
        s.push(1.0);
        let v = s.iter().map(|&x| self.value(x)).collect();
        (s, v)
    }

    /// Monotonicity and midpoint concavity on a uniform grid.
    pub fn shape_defect(&self, points: usize) -> f64 {
        let v: Vec<f64> = (0..points).map(|i| self.value(i as f64 / (points - 1) as f64)).collect();
        let rise = v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let bulge = v.windows(3).map(|w| w[0] + w[2] - 2.0 * w[1]).fold(0.0, f64::max);
        rise.max(bulge)
    }
}

/// `ln(1+t)/t`, with its series near zero.
fn psi(t: f64) -> f64 {
    if t.abs() < 1e-3 {
        1.0 - t / 2.0 + t * t / 3.0 - t.powi(3) / 4.0 + t.powi(4) / 5.0 - t.powi(5) / 6.0
    } else {
        t.ln_1p() / t
    }
}

fn psi_prime(t: f64) -> f64 {
    if t.abs() < 1e-3 {
        -0.5 + 2.0 * t / 3.0 - 0.75 * t * t + 0.8 * t.powi(3) - 5.0 * t.powi(4) / 6.0
    } else {
        (t / (1.0 + t) - t.ln_1p()) / (t * t)
    }
}

/// `∫ ds / φ` over a segment of unit length on which `φ` runs linearly
/// from `a` to `b`.
fn inverse_mean(a: f64, b: f64) -> f64 {
    psi((b - a) / a) / a
}

/// `P_h` of the piecewise-linear profile through `(nodes[j], values[j])`.
/// Returns +∞ if the profile is not positive at every node.
pub fn p_h_piecewise(nodes: &[f64], values: &[f64], xi: &MixtureFunction, h: f64) -> f64 {
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return f64::INFINITY;
    }
    let mut total = (h * h + xi.d1_at_zero()) * values[0];
    for l in 0..nodes.len() - 1 {
        let (s0, s1) = (nodes[l], nodes[l + 1]);
        let (p0, p1) = (values[l], values[l + 1]);
        let width = s1 - s0;
        if width <= 0.0 {
            continue;
        }
        let slope = (p1 - p0) / width;
        total += xi.d1(s1) * p1 - xi.d1(s0) * p0 - slope * (xi.value(s1) - xi.value(s0));
        total += width * inverse_mean(p0, p1);
    }
    total
}

/// `P_h(φ)`; +∞ when `φ(1) = 0` since `∫ 1/φ` then diverges.
pub fn p_h_functional(phi: &ConcaveProfile, xi: &MixtureFunction, h: f64) -> f64 {
    if phi.terminal <= 0.0 {
        return f64::INFINITY;
    }
    let (s, v) = phi.nodes();
    p_h_piecewise(&s, &v, xi, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolverChoice {
    Both,
    Grid,
    Parametric,
}

/// Settings for [`ground_state`] and the two solvers.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverConfig {
    pub grid_size: usize,
    pub max_iters: usize,
    /// A kink enters the grid support when its gradient is below `−grid_tol`.
    pub grid_tol: f64,
    pub starts: usize,
    pub kinks: usize,
    pub seed: u64,
    pub solvers: SolverChoice,
    /// Solver disagreement above this is recorded as a warning.
    pub warn_gap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_size: 512,
            max_iters: 2_000,
            grid_tol: 1e-10,
            starts: 32,
            kinks: 2,
            seed: 0,
            solvers: SolverChoice::Both,
            warn_gap: 1e-4,
        }
    }
}

/// Result of one solver: `P_h` at its minimizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOutcome {
    pub p_value: f64,
    pub profile: ConcaveProfile,
    pub iterations: usize,
    /// Objective after every accepted grid step; empty for the parametric solver.
    pub history: Vec<f64>,
}

/// Objective, gradient and curvature of the grid problem in the variables
/// `x = (c, ν_0, …, ν_{n−1})`, where `L_l = Σ_{i≤l} ν_i` is the (negated)
/// slope on segment `l` and `φ_j = c + Δ Σ_{l≥j} L_l`. Every profile in this
/// parameterization is positive, non-increasing and concave, and the
/// constraints reduce to simple bounds.
struct GridProblem {
    n: usize,
    width: f64,
    h2: f64,
    xi_prime_one: f64,
    xi_steps: Vec<f64>,
}

impl GridProblem {
    fn new(xi: &MixtureFunction, h: f64, n: usize) -> Self {
        let width = 1.0 / n as f64;
        let xi_steps = (0..n).map(|l| xi.value((l + 1) as f64 * width) - xi.value(l as f64 * width)).collect();
        Self { n, width, h2: h * h, xi_prime_one: xi.d1_at_one(), xi_steps }
    }

    fn profile(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut slopes = vec![0.0; n];
        let mut acc = 0.0;
        for l in 0..n {
            acc += x[1 + l];
            slopes[l] = acc;
        }
        let mut phi = vec![0.0; n + 1];
        phi[n] = x[0];
        for j in (0..n).rev() {
            phi[j] = phi[j + 1] + self.width * slopes[j];
        }
        (slopes, phi)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (slopes, phi) = self.profile(x);
        let mut f = self.xi_prime_one * x[0] + self.h2 * phi[0];
        for l in 0..self.n {
            f += slopes[l] * self.xi_steps[l] + self.width * inverse_mean(phi[l], phi[l + 1]);
        }
        f
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n;
        let (slopes, phi) = self.profile(x);
        let mut f = self.xi_prime_one * x[0] + self.h2 * phi[0];
        let mut g_phi = vec![0.0; n + 1];
        g_phi[0] += self.h2;
        g_phi[n] += self.xi_prime_one;
        for l in 0..n {
            let (a, b) = (phi[l], phi[l + 1]);
            let t = (b - a) / a;
            let ps = psi(t);
            let dps = psi_prime(t);
            f += slopes[l] * self.xi_steps[l] + self.width * ps / a;
            g_phi[l] += self.width * (-ps / (a * a) - b * dps / (a * a * a));
            g_phi[l + 1] += self.width * dps / (a * a);
        }
        let mut grad = vec![0.0; n + 1];
        grad[0] = g_phi.iter().sum();
        // dP/dL_l = Δξ_l + Δ Σ_{j≤l} G_j, then dP/dν_i = Σ_{l≥i} dP/dL_l.
        let mut prefix = 0.0;
        let mut d_slope = vec![0.0; n];
        for l in 0..n {
            prefix += g_phi[l];
            d_slope[l] = self.xi_steps[l] + self.width * prefix;
        }
        let mut suffix = 0.0;
        for i in (0..n).rev() {
            suffix += d_slope[i];
            grad[1 + i] = suffix;
        }
        (f, grad)
    }

    /// Tridiagonal Hessian of `P` in `φ`: (diagonal, super-diagonal).
    fn phi_hessian(&self, phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut diag = vec![0.0; n + 1];
        let mut off = vec![0.0; n];
        for l in 0..n {
            let (a, b) = (phi[l], phi[l + 1]);
            let t = (b - a) / a;
            let (ps, dps, ddps) = (psi(t), psi_prime(t), psi_second(t));
            let a3 = a * a * a;
            diag[l] += self.width * (2.0 * ps / a3 + 4.0 * b * dps / (a3 * a) + b * b * ddps / (a3 * a * a));
            diag[l + 1] += self.width * ddps / a3;
            off[l] += self.width * (-b * ddps / (a3 * a) - 2.0 * dps / a3);
        }
        (diag, off)
    }

    /// `∂φ/∂x_i` as a vector over the nodes.
    fn column(&self, i: usize) -> Vec<f64> {
        let n = self.n;
        if i == 0 {
            return vec![1.0; n + 1];
        }
        let k = i - 1;
        (0..=n).map(|j| self.width * (n - k.max(j)) as f64).collect()
    }
}

/// `ψ″` for `ψ(t) = ln(1+t)/t`.
fn psi_second(t: f64) -> f64 {
    if t.abs() < 0.1 {
        let mut sum = 0.0;
        let mut tp = 1.0;
        for n in 2..40 {
            let nf = n as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * nf * (nf - 1.0) / (nf + 1.0) * tp;
            tp *= t;
        }
        return sum;
    }
    let l = t.ln_1p();
    2.0 * l / (t * t * t) - 2.0 / (t * t * (1.0 + t)) - 1.0 / (t * (1.0 + t) * (1.0 + t))
}

fn lower_bound(i: usize) -> f64 {
    if i == 0 {
        MIN_TERMINAL
    } else {
        0.0
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64]) -> f64 {
    (0..x.len()).map(|i| (x[i] - (x[i] - g[i]).max(lower_bound(i))).abs()).fold(0.0, f64::max)
}

/// Newton step on the free coordinates `free` (others held fixed).
fn reduced_newton_step(problem: &GridProblem, x: &[f64], g: &[f64], free: &[usize]) -> Vec<f64> {
    let (_, phi) = problem.profile(x);
    let (diag, off) = problem.phi_hessian(&phi);
    let columns: Vec<Vec<f64>> = free.iter().map(|&i| problem.column(i)).collect();
    let hv: Vec<Vec<f64>> = columns
        .iter()
        .map(|v| {
            let m = v.len();
            (0..m)
                .map(|j| {
                    let mut s = diag[j] * v[j];
                    if j > 0 {
                        s += off[j - 1] * v[j - 1];
                    }
                    if j + 1 < m {
                        s += off[j] * v[j + 1];
                    }
                    s
                })
                .collect()
        })
        .collect();
    let f = free.len();
    let mut h = nalgebra::DMatrix::<f64>::zeros(f, f);
    for p in 0..f {
        for q in 0..=p {
            let v: f64 = columns[p].iter().zip(&hv[q]).map(|(a, b)| a * b).sum();
            h[(p, q)] = v;
            h[(q, p)] = v;
        }
    }
    let rhs = nalgebra::DVector::from_iterator(f, free.iter().map(|&i| -g[i]));
    let scale = (0..f).map(|p| h[(p, p)].abs()).fold(1e-300, f64::max);
    let mut shift = 0.0;
    loop {
        let mut m = h.clone();
        for p in 0..f {
            m[(p, p)] += shift;
        }
        if let Some(ch) = m.cholesky() {
            return ch.solve(&rhs).iter().copied().collect();
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 10.0 };
    }
}

/// Grid solver: a primal active-set method over all concave piecewise-linear
/// profiles on `n` uniform segments. Slope kinks enter the support one at a
/// time (most negative gradient first); on the support, damped Newton steps
/// with a ratio test keep every kink nonnegative, and kinks that reach zero
/// leave the support. Accepted steps never increase the objective.
pub fn solve_grid(xi: &MixtureFunction, h: f64, config: &SolverConfig) -> Result<SolverOutcome> {
    let n = config.grid_size.max(2);
    let problem = GridProblem::new(xi, h, n);
    let scale = xi.d1_at_one() + h * h;
    let mut x = vec![0.0; n + 1];
    x[0] = if scale > 0.0 { 1.0 / scale.sqrt() } else { 1.0 };
    let mut support: Vec<usize> = Vec::new();
    // Kinks that just left the support at their bound; barred from
    // re-entering until the next accepted step.
    let mut barred: Vec<usize> = Vec::new();

    let (mut f, mut g) = problem.value_and_gradient(&x);
    let mut history = vec![f];
    let mut newton_steps = 0usize;
    while newton_steps < config.max_iters {
        // Newton iterations on {c} ∪ support.
        let mut free = vec![0usize];
        free.extend(support.iter().map(|&i| i + 1));
        let d = reduced_newton_step(&problem, &x, &g, &free);
        newton_steps += 1;
        let outward: Vec<usize> = free
            .iter()
            .zip(&d)
            .filter(|&(&i, &di)| i > 0 && di < 0.0 && x[i] <= 0.0)
            .map(|(&i, _)| i - 1)
            .collect();
        if !outward.is_empty() {
            support.retain(|s| !outward.contains(s));
            barred.extend(outward);
            continue;
        }
        let slope: f64 = free.iter().zip(&d).map(|(&i, di)| g[i] * di).sum();
        let mut alpha_max = 1.0f64;
        let mut blocking = None;
        for (p, &i) in free.iter().enumerate() {
            if d[p] < 0.0 {
                let room = (x[i] - lower_bound(i)) / -d[p];
                if room < alpha_max {
                    alpha_max = room;
                    blocking = Some(i);
                }
            }
        }
        let inner_done = -slope <= 1e-13 * (1.0 + f.abs());
        if !inner_done {
            let mut alpha = alpha_max;
            let mut accepted = false;
            for _ in 0..60 {
                let mut cand = x.clone();
                for (p, &i) in free.iter().enumerate() {
                    cand[i] = (x[i] + alpha * d[p]).max(lower_bound(i));
                }
                if alpha == alpha_max {
                    if let Some(b) = blocking {
                        cand[b] = lower_bound(b);
                    }
                }
                let fc = problem.value(&cand);
                if fc.is_finite() && fc <= f + 1e-4 * alpha * slope {
                    if alpha == alpha_max {
                        if let Some(b) = blocking {
                            support.retain(|&s| s + 1 != b);
                        }
                    }
                    let (fv, gv) = problem.value_and_gradient(&cand);
                    x = cand;
                    f = fv;
                    g = gv;
                    history.push(f);
                    barred.clear();
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                continue;
            }
        }
        // The support problem is solved; look for a kink to add.
        let entering = (0..n)
            .filter(|i| !support.contains(i) && !barred.contains(i))
            .min_by(|&a, &b| g[1 + a].total_cmp(&g[1 + b]).then(a.cmp(&b)));
        match entering {
            Some(i) if g[1 + i] < -config.grid_tol => {
                support.push(i);
                support.sort_unstable();
            }
            _ => {
                let profile = grid_profile(&x, n)?;
                return Ok(SolverOutcome { p_value: f, profile, iterations: newton_steps, history });
            }
        }
    }
    Err(Error::NumericFailure(format!(
        "grid solver did not converge in {} Newton steps: P = {f}, projected gradient = {:.3e}, support size {}, grid size {n}",
        config.max_iters,
        projected_gradient_norm(&x, &g),
        support.len()
    )))
}

fn grid_profile(x: &[f64], n: usize) -> Result<ConcaveProfile> {
    let kinks = (0..n).filter(|&i| x[1 + i] > 0.0).map(|i| (i as f64 / n as f64, x[1 + i])).collect();
    ConcaveProfile::new(x[0], kinks)
}

fn params_to_profile(p: &[f64], kinks: usize) -> Option<ConcaveProfile> {
    let list = (0..kinks).map(|i| (p[1 + i], p[1 + kinks + i])).collect();
    ConcaveProfile::new(p[0], list).ok()
}

const PARAM_MAX: f64 = 1e3;

/// Parametric solver: multistart Nelder–Mead over `(c, a_1…a_r, θ_1…θ_r)`.
/// Starts are seeded from `config.seed` and reduced in start order.
pub fn solve_parametric(xi: &MixtureFunction, h: f64, config: &SolverConfig) -> Result<SolverOutcome> {
    let r = config.kinks;
    let dim = 1 + 2 * r;
    let mut lower = vec![MIN_TERMINAL];
    let mut upper = vec![PARAM_MAX];
    lower.extend(std::iter::repeat(0.0).take(r));
    upper.extend(std::iter::repeat(1.0).take(r));
    lower.extend(std::iter::repeat(0.0).take(r));
    upper.extend(std::iter::repeat(PARAM_MAX).take(r));

    let scale = xi.d1_at_one() + h * h;
    let c0 = if scale > 0.0 { 1.0 / scale.sqrt() } else { 1.0 };
    let objective = |p: &[f64]| params_to_profile(p, r).map_or(f64::INFINITY, |phi| p_h_functional(&phi, xi, h));
    let settings = SimplexSettings { max_evals: 6000, ..Default::default() };

    let starts = config.starts.max(1);
    let results: Vec<(f64, Vec<f64>, usize)> = (0..starts)
        .into_par_iter()
        .map(|i| {
            let mut start = vec![c0; dim];
            if i > 0 {
                let mut g = rng::substream(config.seed, &[rng::label::MULTISTART, i as u64]);
                start[0] = c0 * (g.random_range(-2.0f64..1.5)).exp();
                for j in 0..r {
                    start[1 + j] = g.random_range(0.0..1.0);
                    start[1 + r + j] = g.random_range(0.0..4.0) * c0.max(0.1);
                }
            } else {
                for j in 0..r {
                    start[1 + j] = 0.5;
                    start[1 + r + j] = 0.0;
                }
            }
            let first = nelder_mead(objective, &start, &lower, &upper, settings);
            // A restart from the best vertex shakes off a collapsed simplex.
            let second = nelder_mead(objective, &first.x, &lower, &upper, settings);
            let best = if second.value <= first.value { second } else { first };
            (best.value, best.x, best.evals)
        })
        .collect();
    let (value, x, _) = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r.clone())
        .expect("at least one start");
    let evals = results.iter().map(|r| r.2).sum();
    if !value.is_finite() {
        return Err(Error::NumericFailure("parametric solver found no finite value".into()));
    }
    let profile = params_to_profile(&x, r).expect("box-feasible parameters");
    Ok(SolverOutcome { p_value: value, profile, iterations: evals, history: Vec::new() })
}

/// `G(ξ, h)` with the minimizing profile and the solver comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundState {
    pub value: f64,
    pub minimizer: ConcaveProfile,
    pub grid_value: Option<f64>,
    pub parametric_value: Option<f64>,
    pub warning: Option<String>,
}

/// `G(ξ, h) = ½ min P_h`, the smaller of the selected solvers.
pub fn ground_state(xi: &MixtureFunction, h: f64, config: &SolverConfig) -> Result<GroundState> {
    let grid = match config.solvers {
        SolverChoice::Both | SolverChoice::Grid => Some(solve_grid(xi, h, config)?),
        SolverChoice::Parametric => None,
    };
    let parametric = match config.solvers {
        SolverChoice::Both | SolverChoice::Parametric => Some(solve_parametric(xi, h, config)?),
        SolverChoice::Grid => None,
    };
    let grid_value = grid.as_ref().map(|o| 0.5 * o.p_value);
    let parametric_value = parametric.as_ref().map(|o| 0.5 * o.p_value);
    let warning = match (grid_value, parametric_value) {
        (Some(g), Some(p)) if (g - p).abs() > config.warn_gap => {
            Some(format!("grid and parametric solvers differ by {:.3e} (grid {g}, parametric {p})", (g - p).abs()))
        }
        _ => None,
    };
    let best = match (grid, parametric) {
        (Some(g), Some(p)) => {
            if p.p_value < g.p_value {
                p
            } else {
                g
            }
        }
        (Some(o), None) | (None, Some(o)) => o,
        (None, None) => unreachable!("at least one solver is selected"),
    };
    Ok(GroundState { value: 0.5 * best.p_value, minimizer: best.profile, grid_value, parametric_value, warning })
}

/// `√(ξ′(1) + h²)`, the ground state when `ξ′(1) + h² ≥ ξ″(1)`.
pub fn closed_form_ground_state(xi: &MixtureFunction, h: f64) -> Option<f64> {
    let s = xi.d1_at_one() + h * h;
    (s >= xi.d2_at_one()).then(|| s.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    ClosedForm,
    Variational,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::ClosedForm => "closed_form",
            Branch::Variational => "variational",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapePoint {
    pub m: f64,
    pub value: f64,
    pub branch: Branch,
    pub minimizer: Option<ConcaveProfile>,
    pub warning: Option<String>,
}

/// `|m|` from which `E_λ(m) = λm^k + √(k(1−m²))` holds.
pub fn closed_form_boundary(k: usize) -> f64 {
    (1.0 - 1.0 / (k as f64 - 1.0)).sqrt()
}

/// `E_λ(m) = λm^k + G(ξ_m, 0)`.
pub fn e_lambda(m: f64, lambda: f64, k: usize, config: &SolverConfig) -> Result<LandscapePoint> {
    if !(m.abs() <= 1.0) {
        return Err(Error::Domain(format!("E_lambda needs |m| <= 1, got {m}")));
    }
    let signal = lambda * m.powi(k as i32);
    if m.abs() >= closed_form_boundary(k) {
        return Ok(LandscapePoint {
            m,
            value: signal + (k as f64 * (1.0 - m * m)).max(0.0).sqrt(),
            branch: Branch::ClosedForm,
            minimizer: None,
            warning: None,
        });
    }
    let gs = ground_state(&xi_m(m, k)?, 0.0, config)?;
    Ok(LandscapePoint {
        m,
        value: signal + gs.value,
        branch: Branch::Variational,
        minimizer: Some(gs.minimizer),
        warning: gs.warning,
    })
}

/// `E_λ(m)` forced through the variational solvers, whatever `m` is.
pub fn e_lambda_variational(m: f64, lambda: f64, k: usize, config: &SolverConfig) -> Result<f64> {
    Ok(lambda * m.powi(k as i32) + ground_state(&xi_m(m, k)?, 0.0, config)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalMaxCheck {
    pub m_star: f64,
    pub value: f64,
    pub is_local_max: bool,
    pub is_global_max: bool,
    /// Largest `E_λ` over the coarse comparison grid.
    pub grid_max: f64,
}

const LOCAL_DELTA: f64 = 1e-3;

/// Check that `√q_s(λ)` is a local maximizer of `E_λ` and whether it is the
/// global one against an `(grid_points)`-point grid of `[−1, 1]`.
pub fn local_max_check(lambda: f64, k: usize, grid_points: usize, config: &SolverConfig) -> Result<LocalMaxCheck> {
    let ls = scalar::lambda_s(k)?;
    if !(lambda > ls) {
        return Err(Error::Domain(format!("local_max_check needs lambda > lambda_s = {ls}, got {lambda}")));
    }
    let q = scalar::q_s(lambda, k)?;
    let m_star = q.sqrt();
    let at_star = e_lambda(m_star, lambda, k, config)?;
    let x = lambda * lambda * k as f64 * q.powi(k as i32 - 1);
    let expected = scalar::gs_from_x(x, k);
    if (at_star.value - expected).abs() > 1e-10 {
        return Err(Error::Consistency(format!(
            "E at sqrt(q_s) is {} but the fixed-point form gives {expected}",
            at_star.value
        )));
    }
    let left = e_lambda(m_star - LOCAL_DELTA, lambda, k, config)?.value;
    let right = e_lambda((m_star + LOCAL_DELTA).min(1.0), lambda, k, config)?.value;
    let is_local_max = at_star.value > left && at_star.value > right;

    let points = grid_points.max(2);
    let grid: Vec<Result<f64>> = (0..points)
        .into_par_iter()
        .map(|i| {
            let m = -1.0 + 2.0 * i as f64 / (points - 1) as f64;
            e_lambda(m, lambda, k, config).map(|p| p.value)
        })
        .collect();
    let mut grid_max = f64::NEG_INFINITY;
    for v in grid {
        grid_max = grid_max.max(v?);
    }
    Ok(LocalMaxCheck {
        m_star,
        value: at_star.value,
        is_local_max,
        is_global_max: at_star.value >= grid_max - 1e-9,
        grid_max,
    })
}

/// Whether `t ↦ 1/√ξ_m″(t)` has a positive second derivative on `(0, 1)`,
/// by central differences on a 199-point grid.
pub fn sqrt_xi_convexity_check(m: f64, k: usize) -> bool {
    let Ok(xi) = xi_m(m, k) else { return false };
    if m.abs() >= 1.0 {
        return false;
    }
    let g = |t: f64| 1.0 / xi.d2(t).sqrt();
    (1..200).all(|i| {
        let t = i as f64 / 200.0;
        let step = (t / 10.0).min(1e-4);
        let second = (g(t + step) - 2.0 * g(t) + g(t - step)) / (step * step);
        second.is_finite() && second > 0.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SolverConfig {
        SolverConfig { grid_size: 256, starts: 8, ..Default::default() }
    }

    #[test]
    fn xi_m_examples() {
        let x0 = xi_m(0.0, 4).unwrap();
        assert_eq!(x0, MixtureFunction::pure(4));
        let x1 = xi_m(1.0, 4).unwrap();
        assert!(x1.coefficients().iter().all(|&c| c == 0.0));
        for m in [0.13, -0.4, 0.77, 0.95] {
            for k in 3..=6 {
                let x = xi_m(m, k).unwrap();
                assert!((x.value(1.0) - (1.0 - m.powi(2 * k as i32))).abs() < 1e-12);
                let t = 0.37;
                let direct = (m * m + (1.0 - m * m) * t).powi(k as i32) - m.powi(2 * k as i32);
                assert!((x.value(t) - direct).abs() < 1e-12);
            }
        }
        assert!(xi_m(1.2, 4).is_err());
    }

    #[test]
    fn mixture_derivatives() {
        let x = MixtureFunction::new(vec![0.0, 0.5, 0.0, 2.0]).unwrap();
        assert_eq!(x.d1_at_zero(), 0.5);
        assert!((x.d1(0.5) - (0.5 + 6.0 * 0.25)).abs() < 1e-15);
        assert!((x.d2(0.5) - 6.0).abs() < 1e-15);
        assert!(MixtureFunction::new(vec![1.0, 1.0]).is_err());
        assert!(MixtureFunction::new(vec![0.0, -1.0]).is_err());
    }

    #[test]
    fn profile_shape() {
        let p = ConcaveProfile::new(0.3, vec![(0.7, 1.0), (0.2, 0.5)]).unwrap();
        assert_eq!(p.value(1.0), 0.3);
        assert!(p.shape_defect(1000) <= 1e-12);
        assert!(ConcaveProfile::new(-1.0, vec![]).is_err());
        assert!(ConcaveProfile::new(1.0, vec![(1.5, 1.0)]).is_err());
    }

    #[test]
    fn constant_profile_minimum() {
        let xi = MixtureFunction::pure(4);
        let h: f64 = 0.7;
        let s = xi.d1_at_one() + h * h;
        let c = 1.0 / s.sqrt();
        let v = p_h_functional(&ConcaveProfile::constant(c).unwrap(), &xi, h);
        assert!((v - 2.0 * s.sqrt()).abs() < 1e-12);
        let direct = c * (xi.d1_at_one() - xi.d1_at_zero()) + 1.0 / c + (h * h + xi.d1_at_zero()) * c;
        assert!((v - direct).abs() < 1e-12);
        for f in [0.9, 1.1] {
            assert!(p_h_functional(&ConcaveProfile::constant(c * f).unwrap(), &xi, h) > v);
        }
    }

    #[test]
    fn functional_matches_quadrature() {
        let mut g = rng::stream(99);
        for _ in 0..10 {
            let xi = xi_m(g.random_range(-0.9..0.9), 3 + g.random_range(0..4)).unwrap();
            let h = g.random_range(0.0..1.0);
            let phi = ConcaveProfile::new(
                g.random_range(0.05..2.0),
                vec![(g.random_range(0.0..1.0), g.random_range(0.0..2.0)), (g.random_range(0.0..1.0), g.random_range(0.0..2.0))],
            )
            .unwrap();
            // Midpoint rule on 10^4 cells per kink-free stretch.
            let (nodes, _) = phi.nodes();
            let mut integral = 0.0;
            for w in nodes.windows(2) {
                let cells = 10_000;
                let width = (w[1] - w[0]) / cells as f64;
                for i in 0..cells {
                    let s = w[0] + (i as f64 + 0.5) * width;
                    let v = phi.value(s);
                    integral += width * (xi.d2(s) * v + 1.0 / v);
                }
            }
            let oracle = integral + (h * h + xi.d1_at_zero()) * phi.value(0.0);
            let v = p_h_functional(&phi, &xi, h);
            assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
        }
    }

    #[test]
    fn functional_scaling_and_degenerate_terminal() {
        let xi = xi_m(0.3, 4).unwrap();
        let phi = ConcaveProfile::new(0.4, vec![(0.3, 0.8)]).unwrap();
        let phi2 = phi.scaled(2.0).unwrap();
        let zero = MixtureFunction::new(vec![0.0]).unwrap();
        let inv = p_h_functional(&phi, &zero, 0.0);
        assert!((p_h_functional(&phi2, &zero, 0.0) - 0.5 * inv).abs() < 1e-12);
        let lin = p_h_functional(&phi, &xi, 0.5) - inv;
        let lin2 = p_h_functional(&phi2, &xi, 0.5) - 0.5 * inv;
        assert!((lin2 - 2.0 * lin).abs() < 1e-12);
        let flat = ConcaveProfile::new(0.0, vec![(0.0, 1.0)]).unwrap();
        assert_eq!(p_h_functional(&flat, &xi, 0.0), f64::INFINITY);
    }

    #[test]
    fn grid_gradient_matches_differences() {
        let xi = xi_m(0.4, 4).unwrap();
        let prob = GridProblem::new(&xi, 0.3, 8);
        let x = vec![0.6, 0.2, 0.0, 0.1, 0.3, 0.0, 0.05, 0.2, 0.1];
        let (f, g) = prob.value_and_gradient(&x);
        assert!((f - prob.value(&x)).abs() < 1e-14);
        let (_, phi) = prob.profile(&x);
        let nodes: Vec<f64> = (0..=8).map(|j| j as f64 / 8.0).collect();
        assert!((f - p_h_piecewise(&nodes, &phi, &xi, 0.3)).abs() < 1e-12);
        for i in 0..x.len() {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (prob.value(&a) - prob.value(&b)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6, "i={i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn grid_curvature_matches_gradient_differences() {
        let xi = xi_m(0.35, 4).unwrap();
        let prob = GridProblem::new(&xi, 0.2, 6);
        let x = vec![0.5, 0.3, 0.0, 0.2, 0.0, 0.1, 0.4];
        let (_, phi) = prob.profile(&x);
        let (diag, off) = prob.phi_hessian(&phi);
        let times = |v: &[f64]| -> Vec<f64> {
            (0..v.len())
                .map(|j| {
                    let mut s = diag[j] * v[j];
                    if j > 0 {
                        s += off[j - 1] * v[j - 1];
                    }
                    if j + 1 < v.len() {
                        s += off[j] * v[j + 1];
                    }
                    s
                })
                .collect()
        };
        for i in 0..x.len() {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let (_, ga) = prob.value_and_gradient(&a);
            let (_, gb) = prob.value_and_gradient(&b);
            let hv = times(&prob.column(i));
            for j in 0..x.len() {
                let exact: f64 = prob.column(j).iter().zip(&hv).map(|(p, q)| p * q).sum();
                let fd = (ga[j] - gb[j]) / 2e-6;
                assert!((exact - fd).abs() < 1e-5 * exact.abs().max(1.0), "({i},{j}): {exact} vs {fd}");
            }
        }
        for t in [-0.5, -0.099, 0.099, 0.3] {
            let fd = (psi_prime(t + 1e-6) - psi_prime(t - 1e-6)) / 2e-6;
            assert!((psi_second(t) - fd).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn closed_form_regime() {
        let cfg = quick();
        for m in [0.85, 0.9] {
            let xi = xi_m(m, 4).unwrap();
            let exact = closed_form_ground_state(&xi, 0.0).unwrap();
            let gs = ground_state(&xi, 0.0, &cfg).unwrap();
            assert!((gs.value - exact).abs() < 1e-6);
            assert!(gs.grid_value.unwrap() >= gs.parametric_value.unwrap() - 1e-6);
        }
        let xi = MixtureFunction::pure(3);
        let exact = closed_form_ground_state(&xi, 2.0).unwrap();
        assert!((ground_state(&xi, 2.0, &cfg).unwrap().value - exact).abs() < 1e-6);
    }

    #[test]
    fn pure_mixture_gives_gs_k() {
        for k in [3, 4] {
            let gs = ground_state(&MixtureFunction::pure(k), 0.0, &quick()).unwrap();
            assert!((gs.value - scalar::gs_k(k).unwrap()).abs() < 1e-4, "k={k}: {}", gs.value);
        }
    }

    #[test]
    fn grid_objective_is_monotone() {
        let out = solve_grid(&xi_m(0.3, 5).unwrap(), 0.0, &quick()).unwrap();
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.profile.shape_defect(1000) <= 1e-12);
    }

    #[test]
    fn e_lambda_examples() {
        let cfg = quick();
        assert_eq!(e_lambda(1.0, 1.7, 4, &cfg).unwrap().value, 1.7);
        let p = e_lambda(0.9, 0.0, 4, &cfg).unwrap();
        assert_eq!(p.branch, Branch::ClosedForm);
        assert!((p.value - (4.0f64 * 0.19).sqrt()).abs() < 1e-15);
        assert_eq!(e_lambda(0.2, 1.0, 4, &cfg).unwrap().branch, Branch::Variational);
    }

    #[test]
    fn branches_meet_at_boundary() {
        let cfg = quick();
        for k in [3, 4] {
            let b = closed_form_boundary(k);
            let closed = e_lambda(b, 1.2, k, &cfg).unwrap().value;
            let var = e_lambda_variational(b, 1.2, k, &cfg).unwrap();
            assert!((closed - var).abs() < 1e-4, "k={k}");
        }
    }

    #[test]
    fn parity_in_m() {
        let cfg = quick();
        let a = e_lambda(0.4, 1.3, 4, &cfg).unwrap().value;
        let b = e_lambda(-0.4, 1.3, 4, &cfg).unwrap().value;
        assert!((a - b).abs() < 1e-9);
        let g = ground_state(&xi_m(0.4, 3).unwrap(), 0.0, &cfg).unwrap().value;
        let odd = e_lambda(-0.4, 1.3, 3, &cfg).unwrap().value;
        assert!((odd - (-1.3 * 0.4f64.powi(3) + g)).abs() < 1e-9);
    }

    #[test]
    fn secondary_maximum_between_thresholds() {
        let cfg = SolverConfig { grid_size: 128, starts: 4, ..Default::default() };
        let r = local_max_check(1.35, 4, 21, &cfg).unwrap();
        assert!(r.is_local_max && !r.is_global_max);
        let r = local_max_check(1.5, 4, 21, &cfg).unwrap();
        assert!(r.is_local_max && r.is_global_max);
        let lc = scalar::lambda_c(4).unwrap();
        let at_c = local_max_check(lc, 4, 5, &cfg).unwrap();
        assert!((at_c.value - scalar::gs_k(4).unwrap()).abs() < 1e-6);
        assert!(local_max_check(1.0, 4, 5, &cfg).is_err());
    }

    #[test]
    fn convexity_of_inverse_sqrt() {
        assert!(sqrt_xi_convexity_check(0.5, 4));
        assert!(sqrt_xi_convexity_check(0.2, 3));
        assert!(sqrt_xi_convexity_check(0.0, 5));
        assert!(!sqrt_xi_convexity_check(1.0, 4));
    }

    #[test]
    fn value_along_fixed_point_curve() {
        // d/dλ of E_λ(√q_s(λ)) is q_s(λ)^{k/2}.
        let k = 4;
        let e = |l: f64| {
            let q = scalar::q_s(l, k).unwrap();
            scalar::gs_from_x(l * l * k as f64 * q.powi(k as i32 - 1), k)
        };
        let ls = scalar::lambda_s(k).unwrap();
        let lc = scalar::lambda_c(k).unwrap();
        let vals: Vec<f64> = (1..=40).map(|i| e(ls + (3.0 * lc - ls) * i as f64 / 40.0)).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        for l in [1.5, 2.0, 3.0] {
            let d = (e(l + 1e-5) - e(l - 1e-5)) / 2e-5;
            assert!((d - scalar::q_s(l, k).unwrap().powi(2)).abs() < 1e-5);
        }
    }
}
