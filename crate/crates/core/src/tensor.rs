//! Dense k-tensors over `R^N`, the spiked observation and the Hamiltonians
//! defined on the unit sphere.
//!
//! Entries are stored row-major: the multi-index `(i₁, …, i_k)` lives at
//! offset `Σ_j i_j N^{k−1−j}`, so the last index is the fastest.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, label};

/// Default cap on the number of stored entries (`N^k`).
pub const DEFAULT_ENTRY_BUDGET: usize = 100_000_000;

/// A unit vector in `R^N`, `N ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereVector(Vec<f64>);

impl SphereVector {
    /// Normalizes `entries` onto the sphere.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvalidDimension(format!("sphere vectors need N >= 2, got {}", entries.len())));
        }
        let norm = entries.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidInput(format!("cannot normalize a vector of norm {norm}")));
        }
        let mut x: Vec<f64> = entries.into_iter().map(|v| v / norm).collect();
        // One correction pass brings the norm to within an ulp or two of 1.
        let again = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= again);
        Ok(Self(x))
    }

    /// The standard basis vector `e_i` in `R^n`.
    pub fn basis(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::InvalidInput(format!("basis index {i} out of range for N = {n}")));
        }
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &SphereVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }

    /// Flip the sign so the first nonzero coordinate is nonnegative.
    pub fn canonical_sign(self) -> Self {
        match self.0.iter().find(|v| **v != 0.0) {
            Some(v) if *v < 0.0 => self.negated(),
            _ => self,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Model identity `(N, k, λ)` plus the noise mode and the observation seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub k: usize,
    pub lambda: f64,
    pub symmetrize: bool,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(n: usize, k: usize, lambda: f64, seed: u64) -> Result<Self> {
        let p = Self { n, k, lambda, symmetrize: true, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn with_symmetrize(mut self, symmetrize: bool) -> Self {
        self.symmetrize = symmetrize;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidDimension(format!("N must be >= 2, got {}", self.n)));
        }
        if self.k < 2 {
            return Err(Error::InvalidInput(format!("tensor order must be >= 2, got {}", self.k)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Dense order-k tensor over `R^N`.
///
/// `symmetric` records that the entries were symmetrized (or built from a
/// symmetric construction); it lets contractions skip the slot averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
    symmetric: bool,
}

fn entry_count(order: usize, dim: usize, budget: usize) -> Result<usize> {
    let entries = (dim as u128).checked_pow(order as u32).unwrap_or(u128::MAX);
    if entries > budget as u128 {
        return Err(Error::Resource { entries, budget });
    }
    Ok(entries as usize)
}

impl SymmetricTensor {
    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        Self::zeros_with_budget(order, dim, DEFAULT_ENTRY_BUDGET)
    }

    pub fn zeros_with_budget(order: usize, dim: usize, budget: usize) -> Result<Self> {
        if order < 1 || dim < 1 {
            return Err(Error::InvalidInput(format!("order {order} / dim {dim} must be positive")));
        }
        let len = entry_count(order, dim, budget)?;
        Ok(Self { order, dim, data: vec![0.0; len], symmetric: true })
    }

    /// Wraps raw row-major entries. The tensor is treated as non-symmetric.
    pub fn from_entries(order: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        let len = entry_count(order, dim, DEFAULT_ENTRY_BUDGET)?;
        if data.len() != len {
            return Err(Error::InvalidInput(format!(
                "expected {len} entries for order {order} over dim {dim}, got {}",
                data.len()
            )));
        }
        Ok(Self { order, dim, data, symmetric: false })
    }

    /// `scale · x⊗k`.
    pub fn rank_one(x: &[f64], order: usize, scale: f64) -> Result<Self> {
        let dim = x.len();
        let mut t = Self::zeros(order, dim)?;
        t.add_rank_one(x, scale);
        Ok(t)
    }

    /// I.i.d. standard Gaussian entries drawn from `rng`.
    pub fn gaussian<R: Rng + ?Sized>(order: usize, dim: usize, budget: usize, rng: &mut R) -> Result<Self> {
        let len = entry_count(order, dim, budget)?;
        let data = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(Self { order, dim, data, symmetric: false })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.order);
        index.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    /// Sets one entry; this clears the symmetric flag.
    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
        self.symmetric = false;
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { data: self.data.iter().map(|v| c * v).collect(), ..self.clone() }
    }

    /// `self += scale · x⊗k`. Keeps the symmetric flag as it was.
    pub fn add_rank_one(&mut self, x: &[f64], scale: f64) {
        assert_eq!(x.len(), self.dim);
        // Build x⊗k one mode at a time: the block for the leading r indices
        // is the previous block times x.
        let mut block = vec![scale];
        for _ in 0..self.order {
            let mut next = Vec::with_capacity(block.len() * self.dim);
            for b in &block {
                next.extend(x.iter().map(|xi| b * xi));
            }
            block = next;
        }
        for (d, b) in self.data.iter_mut().zip(block) {
            *d += b;
        }
    }

    /// Replaces every entry by the mean over all permutations of its index.
    ///
    /// `⟨Sym T, x⊗k⟩ = ⟨T, x⊗k⟩` for every `x`, so the Hamiltonian built
    /// from the symmetrized tensor is pathwise the same function of `x`.
    pub fn symmetrize(&mut self) {
        if self.order <= 1 {
            self.symmetric = true;
            return;
        }
        let mut sorted = vec![0usize; self.order];
        let mut offsets = Vec::new();
        loop {
            offsets.clear();
            let mut perm = sorted.clone();
            loop {
                offsets.push(self.offset(&perm));
                if !next_permutation(&mut perm) {
                    break;
                }
            }
            let mean = offsets.iter().map(|&o| self.data[o]).sum::<f64>() / offsets.len() as f64;
            for &o in &offsets {
                self.data[o] = mean;
            }
            if !next_sorted_tuple(&mut sorted, self.dim) {
                break;
            }
        }
        self.symmetric = true;
    }

    pub fn symmetrized(&self) -> Self {
        let mut t = self.clone();
        t.symmetrize();
        t
    }

    /// Largest deviation `|T[σ(i)] − T[i]|` over `samples` random index
    /// tuples and random transpositions of each.
    pub fn symmetry_defect<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> f64 {
        let mut worst: f64 = 0.0;
        let mut idx = vec![0usize; self.order];
        for _ in 0..samples {
            idx.iter_mut().for_each(|i| *i = rng.random_range(0..self.dim));
            let base = self.get(&idx);
            let mut perm = idx.clone();
            for _ in 0..self.order {
                let a = rng.random_range(0..self.order);
                let b = rng.random_range(0..self.order);
                perm.swap(a, b);
                worst = worst.max((self.get(&perm) - base).abs());
            }
        }
        worst
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "vector of dim {} does not match tensor dim {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `Σ T[i₁…i_k] x_{i₁}⋯x_{i_k}` by k successive contractions of the last mode.
    pub fn contract_full(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut cur = contract_last(&self.data, x);
        while cur.len() > 1 {
            cur = contract_last(&cur, x);
        }
        cur[0]
    }

    /// The vector `T[·, x, …, x]` with the free index in slot `slot`.
    pub fn contract_all_but(&self, x: &[f64], slot: usize) -> Vec<f64> {
        assert!(slot < self.order);
        let mut cur: Vec<f64>;
        let trailing = self.order - 1 - slot;
        if trailing > 0 {
            cur = contract_last(&self.data, x);
            for _ in 1..trailing {
                cur = contract_last(&cur, x);
            }
        } else {
            cur = self.data.clone();
        }
        for _ in 0..slot {
            cur = contract_first(&cur, x);
        }
        cur
    }

    /// `T[x^{⊗(k−1)}]` averaged over the position of the free index.
    ///
    /// For a symmetric tensor every slot gives the same vector and only
    /// slot 0 is computed.
    pub fn contract_vector(&self, x: &[f64]) -> Vec<f64> {
        if self.symmetric || self.order == 1 {
            return self.contract_all_but(x, 0);
        }
        let mut acc = vec![0.0; self.dim];
        for slot in 0..self.order {
            for (a, v) in acc.iter_mut().zip(self.contract_all_but(x, slot)) {
                *a += v;
            }
        }
        let k = self.order as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }

    /// Euclidean gradient of `x ↦ ⟨T, x⊗k⟩`, i.e. `k · T[x^{⊗(k−1)}]`.
    pub fn euclidean_gradient(&self, x: &[f64]) -> Vec<f64> {
        let k = self.order as f64;
        self.contract_vector(x).into_iter().map(|v| k * v).collect()
    }
}

/// `out[j] = Σ_i data[j·N + i] x_i`.
fn contract_last(data: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    data.chunks_exact(n).map(|row| dot(row, x)).collect()
}

/// `out[j] = Σ_i x_i data[i·S + j]` with `S = len / N`.
fn contract_first(data: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let stride = data.len() / n;
    let mut out = vec![0.0; stride];
    for (xi, block) in x.iter().zip(data.chunks_exact(stride)) {
        for (o, b) in out.iter_mut().zip(block) {
            *o += xi * b;
        }
    }
    out
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Advances a non-decreasing tuple over `0..dim`; false after the last one.
fn next_sorted_tuple(v: &mut [usize], dim: usize) -> bool {
    let mut pos = v.len();
    while pos > 0 {
        pos -= 1;
        if v[pos] + 1 < dim {
            let next = v[pos] + 1;
            v[pos..].iter_mut().for_each(|e| *e = next);
            return true;
        }
    }
    false
}

/// Uniform draw on `S^{N−1}`: a standard Gaussian vector, normalized.
pub fn sample_sphere_uniform(n: usize, seed: u64) -> Result<SphereVector> {
    let mut rng = rng::stream(seed);
    sample_sphere_with(n, &mut rng)
}

pub fn sample_sphere_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SphereVector> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("sphere sampling needs N >= 2, got {n}")));
    }
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return SphereVector::new(v);
        }
    }
}

/// The noise tensor `W` for `params`, drawn from the params' noise stream.
pub fn sample_noise(params: &ModelParams) -> Result<SymmetricTensor> {
    sample_noise_with_budget(params, DEFAULT_ENTRY_BUDGET)
}

pub fn sample_noise_with_budget(params: &ModelParams, budget: usize) -> Result<SymmetricTensor> {
    params.validate()?;
    let mut rng = rng::substream(params.seed, &[label::NOISE]);
    let mut w = SymmetricTensor::gaussian(params.k, params.n, budget, &mut rng)?;
    if params.symmetrize {
        w.symmetrize();
    }
    Ok(w)
}

/// One draw of the spiked model with its ground truth.
#[derive(Debug, Clone)]
pub struct Observation {
    pub params: ModelParams,
    pub signal: SphereVector,
    pub noise: SymmetricTensor,
    pub data: SymmetricTensor,
}

impl Observation {
    /// Largest `|Y − λ√N X⊗k − W|` over `samples` random entries.
    pub fn invariant_defect<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> f64 {
        let k = self.params.k;
        let n = self.params.n;
        let scale = self.params.lambda * (n as f64).sqrt();
        let x = self.signal.as_slice();
        let mut idx = vec![0usize; k];
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
            let spike: f64 = scale * idx.iter().map(|&i| x[i]).product::<f64>();
            let d = self.data.get(&idx) - spike - self.noise.get(&idx);
            worst = worst.max(d.abs());
        }
        worst
    }
}

/// `Y = λ√N X⊗k + W`. When `signal` is `None` it is drawn uniformly from
/// the params' signal stream.
pub fn generate_observation(params: &ModelParams, signal: Option<SphereVector>) -> Result<Observation> {
    params.validate()?;
    let signal = match signal {
        Some(s) => {
            if s.dim() != params.n {
                return Err(Error::InvalidInput(format!(
                    "signal has dim {} but params.n = {}",
                    s.dim(),
                    params.n
                )));
            }
            s
        }
        None => sample_sphere_uniform(params.n, rng::derive(params.seed, &[label::SIGNAL]))?,
    };
    let noise = sample_noise(params)?;
    let mut data = noise.clone();
    if params.lambda != 0.0 {
        data.add_rank_one(signal.as_slice(), params.lambda * (params.n as f64).sqrt());
    }
    Ok(Observation { params: *params, signal, noise, data })
}

/// `⟨T, x⊗k⟩`.
pub fn inner_rank_one(t: &SymmetricTensor, x: &SphereVector) -> Result<f64> {
    t.check_dim(x.as_slice())?;
    Ok(t.contract_full(x.as_slice()))
}

/// Riemannian gradient of `x ↦ ⟨T, x⊗k⟩` on the sphere: the Euclidean
/// gradient projected by `I − xxᵀ`.
pub fn sphere_gradient(t: &SymmetricTensor, x: &SphereVector) -> Result<Vec<f64>> {
    t.check_dim(x.as_slice())?;
    Ok(project_tangent(x.as_slice(), t.euclidean_gradient(x.as_slice())))
}

pub(crate) fn project_tangent(x: &[f64], mut g: Vec<f64>) -> Vec<f64> {
    let r = dot(&g, x);
    g.iter_mut().zip(x).for_each(|(gi, xi)| *gi -= r * xi);
    g
}

/// `H(x) = √N ⟨W, x⊗k⟩`.
pub fn hamiltonian(w: &SymmetricTensor, x: &SphereVector) -> Result<f64> {
    Ok((w.dim() as f64).sqrt() * inner_rank_one(w, x)?)
}

/// `H_λ(x) = H(x) + λ N ⟨x, X⟩^k`.
pub fn tilted_hamiltonian(w: &SymmetricTensor, signal: &SphereVector, lambda: f64, x: &SphereVector) -> Result<f64> {
    if signal.dim() != x.dim() {
        return Err(Error::InvalidInput("signal and x dims differ".into()));
    }
    let n = w.dim() as f64;
    Ok(hamiltonian(w, x)? + lambda * n * signal.dot(x).powi(w.order() as i32))
}
