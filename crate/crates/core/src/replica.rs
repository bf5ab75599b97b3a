//! The two-replica functional
//!
//! `P(u, m, Λ) = ξ(1) + (1−m)θ(u) − Λu + (1/m) log(A/B) − ½(log C + log A)`
//!
//! with `ξ(t) = λ²t^k`, `θ(t) = tξ′(t) − ξ(t)`, `A = 1 + ξ′(u) − Λ`,
//! `B = 1 + (1−m)ξ′(u) − Λ` and `C = 1 + ξ′(u) + Λ`, together with the
//! local structure around `(u, Λ) = (0, 0)` and the quadratic upper bound on
//! `inf_{m,Λ} P(u, m, Λ)` below the critical threshold.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar;

/// Feasibility margin for the three log arguments during minimization.
pub const LOG_MARGIN: f64 = 1e-9;

/// `θ(t) = λ²(k−1)t^k`.
pub fn theta(t: f64, lambda: f64, k: usize) -> f64 {
    lambda * lambda * (k as f64 - 1.0) * t.powi(k as i32)
}

fn xi_prime(u: f64, lambda: f64, k: usize) -> f64 {
    lambda * lambda * k as f64 * u.powi(k as i32 - 1)
}

fn xi_second(u: f64, lambda: f64, k: usize) -> f64 {
    lambda * lambda * (k * (k - 1)) as f64 * u.powi(k as i32 - 2)
}

/// A point `(u, m, Λ)` of the functional's domain for a given `(λ, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicaParams {
    pub u: f64,
    pub m: f64,
    /// The multiplier `Λ`.
    pub multiplier: f64,
    pub lambda: f64,
    pub k: usize,
}

impl ReplicaParams {
    pub fn new(u: f64, m: f64, multiplier: f64, lambda: f64, k: usize) -> Result<Self> {
        let p = Self { u, m, multiplier, lambda, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.u) {
            return Err(Error::Domain(format!("u must lie in [0, 1], got {}", self.u)));
        }
        if !(1.0..=2.0).contains(&self.m) {
            return Err(Error::Domain(format!("m must lie in [1, 2], got {}", self.m)));
        }
        if !(0.0..=1.0).contains(&self.multiplier) {
            return Err(Error::Domain(format!("Lambda must lie in [0, 1], got {}", self.multiplier)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Domain(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.k < 3 {
            return Err(Error::Domain(format!("k must be at least 3, got {}", self.k)));
        }
        let (a, b, c) = log_arguments(self.u, self.m, self.multiplier, self.lambda, self.k);
        if !(a > 0.0) {
            return Err(Error::Domain(format!("1 + xi'(u) - Lambda = {a} is not positive")));
        }
        if !(b > 0.0) {
            return Err(Error::Domain(format!("1 + (1 - m) xi'(u) - Lambda = {b} is not positive")));
        }
        if !(c > 0.0) {
            return Err(Error::Domain(format!("1 + xi'(u) + Lambda = {c} is not positive")));
        }
        Ok(())
    }
}

fn log_arguments(u: f64, m: f64, multiplier: f64, lambda: f64, k: usize) -> (f64, f64, f64) {
    let a = xi_prime(u, lambda, k);
    (1.0 + a - multiplier, 1.0 + (1.0 - m) * a - multiplier, 1.0 + a + multiplier)
}

/// The functional at a validated point.
pub fn parisi_p(p: &ReplicaParams) -> Result<f64> {
    p.validate()?;
    Ok(parisi_p_raw(p.u, p.m, p.multiplier, p.lambda, p.k))
}

/// The functional without range checks; NaN where a log argument is not
/// positive. Finite differences at the edges of the domain need this.
pub fn parisi_p_raw(u: f64, m: f64, multiplier: f64, lambda: f64, k: usize) -> f64 {
    let (a, b, c) = log_arguments(u, m, multiplier, lambda, k);
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return f64::NAN;
    }
    lambda * lambda + (1.0 - m) * theta(u, lambda, k) - multiplier * u + (a.ln() - b.ln()) / m
        - 0.5 * (c.ln() + a.ln())
}

/// Analytic partial derivatives `(∂_u, ∂_m, ∂_Λ)`.
pub fn parisi_gradient(u: f64, m: f64, multiplier: f64, lambda: f64, k: usize) -> [f64; 3] {
    let xp = xi_prime(u, lambda, k);
    let xs = xi_second(u, lambda, k);
    let (a, b, c) = log_arguments(u, m, multiplier, lambda, k);
    // θ′(u) = u ξ″(u)
    let du = (1.0 - m) * u * xs - multiplier + (xs / a - (1.0 - m) * xs / b) / m - 0.5 * (xs / c + xs / a);
    let dm = -theta(u, lambda, k) - (a.ln() - b.ln()) / (m * m) + xp / (m * b);
    let dl = -u + (-1.0 / a + 1.0 / b) / m - 0.5 * (1.0 / c - 1.0 / a);
    [du, dm, dl]
}

/// Local structure of `(u, Λ) ↦ P(u, 1, Λ)` at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OriginHessian {
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
    /// Smallest eigenvalue of the Hessian.
    pub min_eigenvalue: f64,
    /// Its eigenvector scaled to `(1, x)`.
    pub direction: [f64; 2],
}

const HESSIAN_STEP: f64 = 1e-4;

/// Central-difference gradient and Hessian of `(u, Λ) ↦ P(u, 1, Λ)` at `(0, 0)`.
pub fn hessian_at_origin(lambda: f64, k: usize) -> Result<OriginHessian> {
    if k < 4 {
        return Err(Error::Domain(format!("the origin Hessian needs k >= 4, got {k}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let h = HESSIAN_STEP;
    let p = |u: f64, l: f64| parisi_p_raw(u, 1.0, l, lambda, k);
    let p0 = p(0.0, 0.0);
    let gradient = [(p(h, 0.0) - p(-h, 0.0)) / (2.0 * h), (p(0.0, h) - p(0.0, -h)) / (2.0 * h)];
    let huu = (p(h, 0.0) - 2.0 * p0 + p(-h, 0.0)) / (h * h);
    let hll = (p(0.0, h) - 2.0 * p0 + p(0.0, -h)) / (h * h);
    let hul = (p(h, h) - p(h, -h) - p(-h, h) + p(-h, -h)) / (4.0 * h * h);
    let hessian = [[huu, hul], [hul, hll]];

    let mean = 0.5 * (huu + hll);
    let radius = (0.25 * (huu - hll).powi(2) + hul * hul).sqrt();
    let min_eigenvalue = mean - radius;
    if hul.abs() < 1e-300 {
        return Err(Error::NumericFailure("origin Hessian is diagonal; no (1, x) eigenvector".into()));
    }
    // (H − μ I) v = 0 with v = (1, x): huu − μ + hul·x = 0.
    let x = (min_eigenvalue - huu) / hul;
    Ok(OriginHessian { gradient, hessian, min_eigenvalue, direction: [1.0, x] })
}

const DM_STEP: f64 = 1e-5;

/// `∂_m P(s, m, 0)` at `m = 1` by central differences; equals `φ_λ(s)`.
pub fn dp_dm_at_one(s: f64, lambda: f64, k: usize) -> Result<f64> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::Domain(format!("s must lie in (0, 1], got {s}")));
    }
    let f = |m: f64| parisi_p_raw(s, m, 0.0, lambda, k);
    let d = (f(1.0 + DM_STEP) - f(1.0 - DM_STEP)) / (2.0 * DM_STEP);
    if !d.is_finite() {
        return Err(Error::NumericFailure(format!("m-derivative is not finite at s = {s}")));
    }
    Ok(d)
}

/// One `u` of the quadratic-bound scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub u: f64,
    /// `Φ(u) = inf_{m,Λ} P(u, m, Λ)`.
    pub inf_value: f64,
    pub argmin_m: f64,
    pub argmin_multiplier: f64,
    /// `λ² − c_fit u²`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticScan {
    pub lambda: f64,
    pub k: usize,
    /// Largest `c` with `Φ(u) ≤ λ² − c u²` on the grid.
    pub c_fit: f64,
    pub holds: bool,
    /// Odd `k` lies outside the setting where the bound is established.
    pub extrapolated: bool,
    pub points: Vec<ScanPoint>,
}

const SCAN_GRID: usize = 64;

/// Minimize `P(u, ·, ·)` over `[1, 2] × [0, 1]`: a `64 × 64` grid, then
/// compass search from the best grid point. Infeasible points count as +∞.
pub fn inf_over_m_multiplier(u: f64, lambda: f64, k: usize) -> (f64, f64, f64) {
    let objective = |m: f64, l: f64| {
        let (a, b, c) = log_arguments(u, m, l, lambda, k);
        if a < LOG_MARGIN || b < LOG_MARGIN || c < LOG_MARGIN {
            return f64::INFINITY;
        }
        let v = parisi_p_raw(u, m, l, lambda, k);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let step = 1.0 / (SCAN_GRID - 1) as f64;
    let mut best = (objective(1.0, 0.0), 1.0, 0.0);
    for i in 0..SCAN_GRID {
        for j in 0..SCAN_GRID {
            let m = 1.0 + i as f64 * step;
            let l = j as f64 * step;
            let v = objective(m, l);
            if v < best.0 {
                best = (v, m, l);
            }
        }
    }
    let (mut v, mut m, mut l) = best;
    let mut h = step;
    while h > 1e-13 {
        let mut improved = false;
        for (dm, dl) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            let nm = (m + dm).clamp(1.0, 2.0);
            let nl = (l + dl).clamp(0.0, 1.0);
            let nv = objective(nm, nl);
            if nv < v {
                v = nv;
                m = nm;
                l = nl;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (v, m, l)
}

/// Scan `u ∈ {1/grid, …, 1}` and fit the quadratic bound. Requires
/// `λ < λ_c(k)`.
pub fn quadratic_bound_scan(lambda: f64, k: usize, grid: usize) -> Result<QuadraticScan> {
    if k < 3 {
        return Err(Error::Domain(format!("k must be at least 3, got {k}")));
    }
    if grid == 0 {
        return Err(Error::InvalidInput("the u-grid needs at least one point".into()));
    }
    let lc = scalar::lambda_c(k)?;
    if !(lambda > 0.0 && lambda < lc) {
        return Err(Error::Domain(format!("the quadratic bound needs 0 < lambda < lambda_c = {lc}, got {lambda}")));
    }
    let l2 = lambda * lambda;
    let raw: Vec<(f64, f64, f64, f64)> = (1..=grid)
        .into_par_iter()
        .map(|i| {
            let u = i as f64 / grid as f64;
            let (v, m, l) = inf_over_m_multiplier(u, lambda, k);
            (u, v, m, l)
        })
        .collect();
    let c_fit = raw.iter().map(|&(u, v, _, _)| (l2 - v) / (u * u)).fold(f64::INFINITY, f64::min);
    let points: Vec<ScanPoint> = raw
        .iter()
        .map(|&(u, v, m, l)| ScanPoint { u, inf_value: v, argmin_m: m, argmin_multiplier: l, bound: l2 - c_fit * u * u })
        .collect();
    let holds = c_fit > 0.0 && points.iter().all(|p| p.inf_value <= p.bound + 1e-15 * l2.max(1.0));
    Ok(QuadraticScan { lambda, k, c_fit, holds, extrapolated: k % 2 == 1, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Second transcription of the functional, term by term.
    fn p_oracle(u: f64, m: f64, l: f64, lambda: f64, k: usize) -> f64 {
        let xi = |t: f64| lambda * lambda * t.powi(k as i32);
        let dxi = |t: f64| lambda * lambda * k as f64 * t.powi(k as i32 - 1);
        let th = u * dxi(u) - xi(u);
        let first = xi(1.0) + (1.0 - m) * th - l * u;
        let ratio = ((1.0 + dxi(u) - l) / (1.0 + (1.0 - m) * dxi(u) - l)).ln() / m;
        let last = -0.5 * ((1.0 + dxi(u) + l).ln() + (1.0 + dxi(u) - l).ln());
        first + ratio + last
    }

    #[test]
    fn theta_values() {
        assert_eq!(theta(0.0, 1.3, 4), 0.0);
        assert!((theta(1.0, 1.3, 4) - 1.69 * 3.0).abs() < 1e-12);
        for t in [0.2, 0.5, 0.9] {
            let xi = |s: f64| 1.3f64.powi(2) * s.powi(5);
            let d = (xi(t + 1e-6) - xi(t - 1e-6)) / 2e-6;
            assert!((theta(t, 1.3, 5) - (t * d - xi(t))).abs() < 1e-8);
        }
    }

    #[test]
    fn collapses_to_lambda_squared() {
        for i in 0..=10 {
            let u = i as f64 / 10.0;
            let p = ReplicaParams::new(u, 1.0, 0.0, 0.9, 4).unwrap();
            assert!((parisi_p(&p).unwrap() - 0.81).abs() < 1e-12);
            let q = ReplicaParams::new(0.0, 1.0 + u, 0.0, 0.9, 4).unwrap();
            assert!((parisi_p(&q).unwrap() - 0.81).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_second_transcription() {
        let p = ReplicaParams::new(0.3, 1.5, 0.2, 1.0, 4).unwrap();
        let v = parisi_p(&p).unwrap();
        assert!(v.is_finite());
        assert!((v - p_oracle(0.3, 1.5, 0.2, 1.0, 4)).abs() < 1e-12);
    }

    #[test]
    fn domain_violations_are_named() {
        // u = 1, λ = 1, k = 4: ξ′ = 4, so B = 1 − 4(m − 1) − Λ < 0 at m = 2.
        let err = ReplicaParams::new(1.0, 2.0, 0.0, 1.0, 4).unwrap_err().to_string();
        assert!(err.contains("(1 - m)"), "{err}");
        assert!(ReplicaParams::new(0.5, 0.5, 0.0, 1.0, 4).is_err());
        assert!(parisi_p_raw(1.0, 2.0, 0.0, 1.0, 4).is_nan());
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        for &(u, m, l, lambda, k) in &[(0.3, 1.5, 0.2, 1.0, 4), (0.6, 1.2, 0.5, 0.7, 6), (0.45, 1.8, 0.1, 0.9, 3)] {
            let g = parisi_gradient(u, m, l, lambda, k);
            let h = 1e-6;
            let fd = [
                (parisi_p_raw(u + h, m, l, lambda, k) - parisi_p_raw(u - h, m, l, lambda, k)) / (2.0 * h),
                (parisi_p_raw(u, m + h, l, lambda, k) - parisi_p_raw(u, m - h, l, lambda, k)) / (2.0 * h),
                (parisi_p_raw(u, m, l + h, lambda, k) - parisi_p_raw(u, m, l - h, lambda, k)) / (2.0 * h),
            ];
            for i in 0..3 {
                assert!((g[i] - fd[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "i={i}: {} vs {}", g[i], fd[i]);
            }
        }
    }

    #[test]
    fn origin_hessian_structure() {
        for (k, lambda) in [(6, 0.8), (4, 1.2)] {
            let h = hessian_at_origin(lambda, k).unwrap();
            let expected = [[0.0, -1.0], [-1.0, 1.0]];
            for i in 0..2 {
                assert!(h.gradient[i].abs() < 1e-6);
                for j in 0..2 {
                    assert!((h.hessian[i][j] - expected[i][j]).abs() < 1e-3);
                }
            }
            assert!(h.min_eigenvalue < 0.0);
            assert!(h.direction[1] > 0.0);
            assert!((h.min_eigenvalue - (1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-3);
        }
        assert!(hessian_at_origin(1.0, 3).is_err());
    }

    #[test]
    fn m_derivative_is_phi() {
        assert!(dp_dm_at_one(1e-9, 1.0, 4).unwrap().abs() < 1e-8);
        let d = dp_dm_at_one(0.5, 1.0, 4).unwrap();
        assert!((d - scalar::phi_lambda(0.5, 1.0, 4).unwrap()).abs() < 1e-6);
        let lc = scalar::lambda_c(4).unwrap();
        for i in 1..=20 {
            let s = i as f64 / 20.0;
            assert!(dp_dm_at_one(s, 0.95 * lc, 4).unwrap() < 0.0, "s={s}");
        }
    }

    #[test]
    fn quadratic_bound_below_threshold() {
        let lc = scalar::lambda_c(4).unwrap();
        let lambda = 0.5 * lc;
        let scan = quadratic_bound_scan(lambda, 4, 20).unwrap();
        assert!(scan.holds && scan.c_fit > 0.0 && !scan.extrapolated);
        let h = hessian_at_origin(lambda, 4).unwrap();
        let x = h.direction[1];
        for p in &scan.points {
            assert!(p.inf_value < lambda * lambda);
            let along = parisi_p_raw(p.u, 1.0, (p.u * x).min(1.0), lambda, 4);
            assert!(p.inf_value <= along + 1e-12);
        }
        assert!(quadratic_bound_scan(1.1 * lc, 4, 10).is_err());
        assert!(quadratic_bound_scan(0.5, 3, 5).unwrap().extrapolated);
    }
}
