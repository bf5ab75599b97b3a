//! Scalar theory of the spiked k-tensor model: the functions `f_λ`, `φ_λ`
//! and `h`, the thresholds `λ_s < λ_c`, the stable fixed point `q_s(λ)` and
//! the limits of the maximum likelihood, the correlation and the MMSE.
//!
//! Every root is found by bracketing bisection. The supremum of `f_λ` on
//! `[0, 1)` is read off its stationary points: `f_λ′` has the sign of `h`,
//! whose positive roots are exactly `q_u < q_s`, so
//! `sup f_λ = max(0, f_λ(q_s))`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{adaptive_simpson, bisect, ROOT_TOL};

const QUAD_TOL: f64 = 1e-9;
const QUAD_DEPTH: u32 = 40;
const THRESHOLD_EPS: f64 = 1e-12;

fn check_k(k: usize) -> Result<()> {
    if k < 3 {
        return Err(Error::Domain(format!("threshold formulas need k >= 3, got {k}")));
    }
    Ok(())
}

fn powi(x: f64, p: usize) -> f64 {
    x.powi(p as i32)
}

/// `f_λ(t) = λ² t^k + log(1 − t) + t` on `[0, 1)`.
pub fn f_lambda(t: f64, lambda: f64, k: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Domain(format!("f_lambda needs t in [0, 1), got {t}")));
    }
    Ok(lambda * lambda * powi(t, k) + (-t).ln_1p() + t)
}

/// `φ_λ(q) = λ²k q^{k−1} − log(1 + λ²k q^{k−1}) − λ²(k−1) q^k` on `[0, 1]`.
pub fn phi_lambda(q: f64, lambda: f64, k: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("phi_lambda needs q in [0, 1], got {q}")));
    }
    let l2 = lambda * lambda;
    let x = l2 * k as f64 * powi(q, k - 1);
    Ok(x - x.ln_1p() - l2 * (k as f64 - 1.0) * powi(q, k))
}

/// `h(q) = λ²k q^{k−1} − λ²k q^k − q`.
pub fn h_poly(q: f64, lambda: f64, k: usize) -> f64 {
    let a = lambda * lambda * k as f64;
    a * powi(q, k - 1) - a * powi(q, k) - q
}

/// The factored form `h(q) = q k λ² (q^{k−2} − q^{k−1} − 1/(kλ²))`.
pub fn h_poly_factored(q: f64, lambda: f64, k: usize) -> f64 {
    let a = lambda * lambda * k as f64;
    q * a * (powi(q, k - 2) - powi(q, k - 1) - 1.0 / a)
}

/// `f_λ′(q) = h(q) / (1 − q)`.
pub fn f_lambda_derivative(q: f64, lambda: f64, k: usize) -> f64 {
    h_poly(q, lambda, k) / (1.0 - q)
}

/// `λ_s = √((k−1)^{k−1} / (k (k−2)^{k−2}))`.
pub fn lambda_s(k: usize) -> Result<f64> {
    check_k(k)?;
    let kf = k as f64;
    // Logs keep large k away from overflow.
    let log_sq = (kf - 1.0) * (kf - 1.0).ln() - kf.ln() - (kf - 2.0) * (kf - 2.0).ln();
    Ok((0.5 * log_sq).exp())
}

/// The two positive stationary points of `f_λ` above `λ_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoints {
    /// Strict local minimum, below `(k−2)/(k−1)`.
    pub q_u: f64,
    /// Strict local maximum, above `(k−2)/(k−1)`.
    pub q_s: f64,
}

/// Roots of `q^{k−2} − q^{k−1} = 1/(kλ²)` on either side of the peak at
/// `(k−2)/(k−1)`; `None` below `λ_s`.
pub fn critical_points(lambda: f64, k: usize) -> Result<Option<CriticalPoints>> {
    check_k(k)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("critical_points needs lambda > 0, got {lambda}")));
    }
    let target = 1.0 / (k as f64 * lambda * lambda);
    let peak_at = (k as f64 - 2.0) / (k as f64 - 1.0);
    let g = |q: f64| powi(q, k - 2) - powi(q, k - 1) - target;
    let peak = g(peak_at);
    if peak.abs() <= 4.0 * f64::EPSILON * target {
        return Err(Error::DegenerateRoot { lambda });
    }
    if peak < 0.0 {
        return Ok(None);
    }
    let q_u = bisect(g, 0.0, peak_at, ROOT_TOL)?;
    let q_s = bisect(g, peak_at, 1.0, ROOT_TOL)?;
    Ok(Some(CriticalPoints { q_u, q_s }))
}

/// `q_s(λ)`, failing below `λ_s`.
pub fn q_s(lambda: f64, k: usize) -> Result<f64> {
    critical_points(lambda, k)?
        .map(|c| c.q_s)
        .ok_or_else(|| Error::Domain(format!("q_s is undefined below lambda_s (lambda = {lambda}, k = {k})")))
}

/// Residual of the fixed point `q = λ²kq^{k−1} / (1 + λ²kq^{k−1})`.
pub fn fixed_point_residual(q: f64, lambda: f64, k: usize) -> f64 {
    let x = lambda * lambda * k as f64 * powi(q, k - 1);
    q - x / (1.0 + x)
}

/// `φ_k(z) = (1+z)/z² · log(1+z) − 1/z − 1/k`.
///
/// For small `z` the first two terms cancel to leading order, so the
/// series `Σ_{n≥2} (−z)^{n−2} / (n(n−1))` is used instead.
pub fn varphi_k(z: f64, k: usize) -> f64 {
    if z < 0.05 {
        let mut sum = 0.0;
        let mut zp = 1.0;
        for n in 2..40 {
            let nf = n as f64;
            sum += zp / (nf * (nf - 1.0));
            zp *= -z;
        }
        return sum - 1.0 / k as f64;
    }
    (1.0 + z) / (z * z) * z.ln_1p() - 1.0 / z - 1.0 / k as f64
}

/// The unique zero `z_k` of `φ_k` on `(0, ∞)`.
pub fn z_k_root(k: usize) -> Result<f64> {
    check_k(k)?;
    let lo = 1e-8;
    let mut hi = 1.0;
    let f = |z: f64| varphi_k(z, k);
    let mut grown = 0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        grown += 1;
        if grown > 200 {
            return Err(Error::NumericFailure(format!("varphi_k has no sign change for k = {k}")));
        }
    }
    if f(lo) <= 0.0 {
        return Err(Error::NumericFailure(format!("varphi_k(1e-8) <= 0 for k = {k}")));
    }
    bisect(f, lo, hi, ROOT_TOL)
}

/// `GS_k = √k / √(1+z_k) · (1 + z_k/k)`.
pub fn gs_k(k: usize) -> Result<f64> {
    let z = z_k_root(k)?;
    Ok(gs_from_x(z, k))
}

/// `√k (1 + x/k) / √(1+x)`; equals `GS_k` at `x = z_k` and `E_λ(√q_s(λ))`
/// at `x = λ²kq_s^{k−1}`.
pub fn gs_from_x(x: f64, k: usize) -> f64 {
    let kf = k as f64;
    kf.sqrt() * (1.0 + x / kf) / (1.0 + x).sqrt()
}

/// `λ_c` from the closed form `√((1+z_k)^{k−1} z_k^{2−k} / k)`.
pub fn lambda_c_closed(k: usize) -> Result<f64> {
    let z = z_k_root(k)?;
    lambda_c_from_z(z, k)
}

fn lambda_c_from_z(z: f64, k: usize) -> Result<f64> {
    let kf = k as f64;
    let log_sq = (kf - 1.0) * z.ln_1p() + (2.0 - kf) * z.ln() - kf.ln();
    Ok((0.5 * log_sq).exp())
}

/// Value of `f_λ` at its local maximum `q_s(λ)`, for `λ > λ_s`.
pub fn f_at_q_s(lambda: f64, k: usize) -> Result<f64> {
    let q = q_s(lambda, k)?;
    f_lambda(q, lambda, k)
}

/// `sup_{t∈[0,1)} f_λ(t) = max(0, f_λ(q_s))`, or 0 when `λ ≤ λ_s`.
pub fn sup_f_lambda(lambda: f64, k: usize) -> Result<f64> {
    check_k(k)?;
    if lambda <= 0.0 {
        return Ok(0.0);
    }
    match critical_points(lambda, k) {
        Ok(Some(c)) => Ok(f_lambda(c.q_s, lambda, k)?.max(0.0)),
        Ok(None) | Err(Error::DegenerateRoot { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// `λ_c` by bisection in `λ` on the sign of `f_λ(q_s(λ))`.
pub fn lambda_c_bisect(k: usize) -> Result<f64> {
    let ls = lambda_s(k)?;
    let lo = ls * (1.0 + 1e-9);
    if f_at_q_s(lo, k)? >= 0.0 {
        return Err(Error::NumericFailure(format!("f(q_s) is not negative just above lambda_s for k = {k}")));
    }
    let mut hi = 2.0 * ls;
    let mut grown = 0;
    while f_at_q_s(hi, k)? <= 0.0 {
        hi *= 2.0;
        grown += 1;
        if grown > 60 {
            return Err(Error::NumericFailure(format!("no upper bracket for lambda_c at k = {k}")));
        }
    }
    bisect(|l| f_at_q_s(l, k).unwrap_or(f64::NAN), lo, hi, ROOT_TOL)
}

/// Both routes to `λ_c`, cross-checked.
pub fn lambda_c(k: usize) -> Result<f64> {
    Ok(threshold_report(k)?.lambda_c_bisect)
}

/// The thresholds of a given order, computed along both `λ_c` routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub k: usize,
    pub lambda_s: f64,
    pub z_k: f64,
    pub gs_k: f64,
    pub lambda_c_bisect: f64,
    pub lambda_c_closed: f64,
    pub q_s_at_lambda_c: f64,
}

/// Routes for `λ_c` must agree to this.
pub const LAMBDA_C_ROUTE_TOL: f64 = 1e-8;

pub fn threshold_report(k: usize) -> Result<ThresholdReport> {
    let ls = lambda_s(k)?;
    let z = z_k_root(k)?;
    let gs = gs_from_x(z, k);
    let lc_b = lambda_c_bisect(k)?;
    let lc_c = lambda_c_from_z(z, k)?;
    if (lc_b - lc_c).abs() > LAMBDA_C_ROUTE_TOL {
        return Err(Error::Consistency(format!(
            "lambda_c routes disagree for k = {k}: bisection {lc_b}, closed form {lc_c}"
        )));
    }
    if !(ls < lc_b) {
        return Err(Error::Consistency(format!("lambda_s = {ls} is not below lambda_c = {lc_b}")));
    }
    let q = q_s(lc_b, k)?;
    if (q - z / (1.0 + z)).abs() > 1e-10 {
        return Err(Error::Consistency(format!(
            "q_s(lambda_c) = {q} differs from z/(1+z) = {}",
            z / (1.0 + z)
        )));
    }
    Ok(ThresholdReport {
        k,
        lambda_s: ls,
        z_k: z,
        gs_k: gs,
        lambda_c_bisect: lc_b,
        lambda_c_closed: lc_c,
        q_s_at_lambda_c: q,
    })
}

/// `q_*(λ)`: 0 below `λ_c`, `q_s(λ)` above, undefined at `λ_c`.
pub fn q_star(lambda: f64, k: usize) -> Result<f64> {
    let lc = lambda_c(k)?;
    q_star_given(lambda, k, lc)
}

/// [`q_star`] with a precomputed `λ_c`.
pub fn q_star_given(lambda: f64, k: usize, lambda_c: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("q_star needs lambda >= 0, got {lambda}")));
    }
    if (lambda - lambda_c).abs() < THRESHOLD_EPS {
        return Err(Error::AmbiguousAtThreshold { lambda, lambda_c });
    }
    if lambda < lambda_c {
        Ok(0.0)
    } else {
        q_s(lambda, k)
    }
}

/// Limit of `(1/√N) max_x ⟨x⊗k, Y⟩`: `GS_k` up to `λ_c`, then
/// `√k (1 + λ²q^{k−1}) / √(1 + λ²kq^{k−1})` at `q = q_*(λ)`.
pub fn ml_limit(lambda: f64, k: usize) -> Result<f64> {
    let report = threshold_report(k)?;
    ml_limit_given(lambda, k, &report)
}

pub fn ml_limit_given(lambda: f64, k: usize, report: &ThresholdReport) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("ml_limit needs lambda >= 0, got {lambda}")));
    }
    if lambda <= report.lambda_c_bisect {
        return Ok(report.gs_k);
    }
    let q = q_s(lambda, k)?;
    let l2 = lambda * lambda;
    let kf = k as f64;
    Ok(kf.sqrt() * (1.0 + l2 * powi(q, k - 1)) / (1.0 + l2 * kf * powi(q, k - 1)).sqrt())
}

/// `∫_{from}^{to} q_s(γ)^{k/2} dγ` by adaptive Simpson; `from > λ_s`.
pub fn integral_q_s_power(from: f64, to: f64, k: usize) -> Result<f64> {
    if to <= from {
        return Ok(0.0);
    }
    // Surface a bad lower limit as an error rather than NaNs inside the quadrature.
    q_s(from, k)?;
    let half_k = k as f64 / 2.0;
    Ok(adaptive_simpson(
        |g| q_s(g, k).map(|q| q.powf(half_k)).unwrap_or(f64::NAN),
        from,
        to,
        QUAD_TOL,
        QUAD_DEPTH,
    ))
}

/// `ℓ(λ) = GS_k + ∫_0^λ q_*(γ)^{k/2} dγ`; the integrand vanishes below `λ_c`.
pub fn ell(lambda: f64, k: usize) -> Result<f64> {
    let report = threshold_report(k)?;
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("ell needs lambda >= 0, got {lambda}")));
    }
    if lambda <= report.lambda_c_bisect {
        return Ok(report.gs_k);
    }
    Ok(report.gs_k + integral_q_s_power(report.lambda_c_bisect, lambda, k)?)
}

/// Limit of the MMSE for `X⊗k`: `1 − q_*(λ)^k`.
pub fn mmse_limit(lambda: f64, k: usize) -> Result<f64> {
    Ok(1.0 - powi(q_star(lambda, k)?, k))
}

/// Ceiling `q_*(λ)^{k/2}` on `lim sup E[(x̂, X)^k]` for any estimator.
pub fn correlation_ceiling(lambda: f64, k: usize) -> Result<f64> {
    Ok(q_star(lambda, k)?.powf(k as f64 / 2.0))
}

/// Replica-symmetric potential `L(γ) = ½ max_{q∈[0,1]} φ_{√γ}(q)`.
pub fn rs_potential_l(gamma: f64, k: usize) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("rs_potential_l needs gamma >= 0, got {gamma}")));
    }
    let lc = lambda_c(k)?;
    let lambda = gamma.sqrt();
    if lambda <= lc {
        return Ok(0.0);
    }
    let q = q_s(lambda, k)?;
    Ok(0.5 * phi_lambda(q, lambda, k)?.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const K_RANGE: std::ops::RangeInclusive<usize> = 3..=8;

    #[test]
    fn f_lambda_values() {
        for k in 3..6 {
            assert_eq!(f_lambda(0.0, 1.7, k).unwrap(), 0.0);
        }
        // 0.5^4 + ln 0.5 + 0.5
        let v = f_lambda(0.5, 1.0, 4).unwrap();
        assert!((v - (-0.130_647_180_559_945_3)).abs() < 1e-5);
        assert!(f_lambda(1.0 - 1e-12, 2.0, 3).unwrap() < -20.0);
        assert!(f_lambda(1.0, 1.0, 3).is_err());
        assert!(f_lambda(-0.1, 1.0, 3).is_err());
    }

    #[test]
    fn phi_lambda_domain_and_origin() {
        assert_eq!(phi_lambda(0.0, 2.0, 4).unwrap(), 0.0);
        assert!(phi_lambda(1.1, 1.0, 4).is_err());
    }

    #[test]
    fn phi_is_f_plus_h_minus_log() {
        for k in 3..=6 {
            for lambda in [0.7, 1.3, 2.2] {
                for i in 0..100 {
                    let q = i as f64 / 100.0;
                    let h = h_poly(q, lambda, k);
                    let lhs = phi_lambda(q, lambda, k).unwrap();
                    let rhs = f_lambda(q, lambda, k).unwrap() + h - h.ln_1p();
                    assert!((lhs - rhs).abs() < 1e-10, "k={k} lambda={lambda} q={q}");
                }
            }
        }
    }

    #[test]
    fn h_factorizations_agree() {
        assert_eq!(h_poly(0.0, 1.0, 4), 0.0);
        for (i, k) in (3..9).enumerate() {
            for j in 0..20 {
                let q = (j as f64 + 0.37) / 20.0;
                let lambda = 0.3 + 0.4 * i as f64;
                assert!((h_poly(q, lambda, k) - h_poly_factored(q, lambda, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lambda_s_values() {
        assert!((lambda_s(4).unwrap() - (27f64 / 16.0).sqrt()).abs() < 1e-12);
        assert!((lambda_s(3).unwrap() - (4f64 / 3.0).sqrt()).abs() < 1e-12);
        let vals: Vec<f64> = (3..=10).map(|k| lambda_s(k).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
        assert!(lambda_s(2).is_err());
    }

    #[test]
    fn critical_points_structure() {
        for k in K_RANGE {
            let ls = lambda_s(k).unwrap();
            assert!(critical_points(0.9 * ls, k).unwrap().is_none());
            let mut prev: Option<CriticalPoints> = None;
            for i in 1..30 {
                let lambda = ls * (1.0 + 0.05 * i as f64);
                let c = critical_points(lambda, k).unwrap().unwrap();
                let peak = (k as f64 - 2.0) / (k as f64 - 1.0);
                assert!(0.0 < c.q_u && c.q_u < peak && peak < c.q_s && c.q_s < 1.0);
                assert!(fixed_point_residual(c.q_s, lambda, k).abs() < 1e-10);
                assert!(h_poly(c.q_s, lambda, k).abs() < 1e-10);
                if let Some(p) = prev {
                    assert!(c.q_s > p.q_s && c.q_u < p.q_u);
                }
                prev = Some(c);
            }
        }
        assert!(critical_points(0.0, 4).is_err());
        let ls = lambda_s(4).unwrap();
        assert!(matches!(critical_points(ls, 4), Err(Error::DegenerateRoot { .. })));
    }

    #[test]
    fn z_k_sign_structure_and_root() {
        for k in K_RANGE {
            assert!(varphi_k(1e-6, k) > 0.0);
            assert!(varphi_k(1e6, k) < 0.0);
            let z = z_k_root(k).unwrap();
            assert!(varphi_k(z, k).abs() < 1e-10);
        }
    }

    #[test]
    fn varphi_series_matches_direct_form() {
        for z in [0.03, 0.045, 0.049] {
            let direct = (1.0 + z) / (z * z) * f64::ln_1p(z) - 1.0 / z - 0.25;
            assert!((varphi_k(z, 4) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn gs_k_bounds() {
        for k in K_RANGE {
            let z = z_k_root(k).unwrap();
            let gs = gs_k(k).unwrap();
            assert!(gs > 0.0 && gs < (k as f64).sqrt() * (1.0 + z / k as f64));
            assert_eq!(ml_limit(0.0, k).unwrap(), gs);
        }
    }

    #[test]
    fn lambda_c_k4_and_defining_property() {
        let lc = lambda_c(4).unwrap();
        assert!((lc - 1.405).abs() < 0.005);
        for k in K_RANGE {
            let r = threshold_report(k).unwrap();
            assert!(r.lambda_s < r.lambda_c_bisect);
            assert!((r.lambda_c_bisect - r.lambda_c_closed).abs() <= 1e-8);
            assert!(f_at_q_s(r.lambda_c_bisect, k).unwrap().abs() < 1e-8);
            assert!((r.q_s_at_lambda_c - r.z_k / (1.0 + r.z_k)).abs() < 1e-10);
        }
    }

    #[test]
    fn sup_f_is_zero_below_lambda_c() {
        let lc = lambda_c(5).unwrap();
        for lambda in [0.3, 1.0, 0.99 * lc] {
            assert_eq!(sup_f_lambda(lambda, 5).unwrap(), 0.0);
        }
        assert!(sup_f_lambda(1.01 * lc, 5).unwrap() > 0.0);
    }

    #[test]
    fn q_star_cases() {
        let lc = lambda_c(3).unwrap();
        assert_eq!(q_star(lc / 2.0, 3).unwrap(), 0.0);
        assert!(matches!(q_star(lc, 3), Err(Error::AmbiguousAtThreshold { .. })));

        // Grid-argmax oracle.
        for lambda in [1.2 * lc, 2.0 * lc] {
            let q = q_star(lambda, 3).unwrap();
            let best = f_lambda(q, lambda, 3).unwrap();
            for i in 0..10_000 {
                let t = i as f64 / 9_999.0 * (1.0 - 1e-6);
                assert!(best >= f_lambda(t, lambda, 3).unwrap() - 1e-15, "t={t}");
            }
        }

        let qs: Vec<f64> = (1..10).map(|i| q_star(lc * (1.0 + i as f64), 3).unwrap()).collect();
        assert!(qs.windows(2).all(|w| w[0] < w[1]));
        assert!(q_star(100.0, 3).unwrap() > 0.99);
    }

    #[test]
    fn ml_limit_continuity_and_integral_form() {
        for k in 3..=5 {
            let r = threshold_report(k).unwrap();
            let right = ml_limit(r.lambda_c_bisect + 1e-6, k).unwrap();
            assert!(right - r.gs_k <= 1e-3 && right >= r.gs_k - 1e-12);
        }
        let r = threshold_report(3).unwrap();
        let lambda = 2.0 * r.lambda_c_bisect;
        let direct = ml_limit(lambda, 3).unwrap();
        let via_integral = r.gs_k + integral_q_s_power(r.lambda_c_bisect, lambda, 3).unwrap();
        assert!((direct - via_integral).abs() < 1e-6);
    }

    #[test]
    fn ell_matches_ml_limit() {
        for k in [3, 4] {
            let lc = lambda_c(k).unwrap();
            assert_eq!(ell(0.5 * lc, k).unwrap(), gs_k(k).unwrap());
            let mut prev = 0.0;
            for f in [1.1, 1.5, 2.0] {
                let a = ell(f * lc, k).unwrap();
                let b = ml_limit(f * lc, k).unwrap();
                assert!((a - b).abs() < 1e-6);
                assert!(a >= prev);
                prev = a;
            }
        }
    }

    #[test]
    fn mmse_limit_cases() {
        let lc = lambda_c(4).unwrap();
        assert_eq!(mmse_limit(0.5 * lc, 4).unwrap(), 1.0);
        assert!(mmse_limit(30.0, 4).unwrap() < 0.05);
        let q = q_star(1.5 * lc, 4).unwrap();
        assert!((correlation_ceiling(1.5 * lc, 4).unwrap() - q * q).abs() < 1e-15);
    }

    #[test]
    fn rs_potential() {
        let lc = lambda_c(4).unwrap();
        assert_eq!(rs_potential_l(0.9 * lc * lc, 4).unwrap(), 0.0);
        let vals: Vec<f64> = (0..60).map(|i| rs_potential_l(0.1 * i as f64, 4).unwrap()).collect();
        for w in vals.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8);
        }
        let gamma = (1.5 * lc).powi(2);
        let step = 1e-5;
        let d = (rs_potential_l(gamma + step, 4).unwrap() - rs_potential_l(gamma - step, 4).unwrap()) / (2.0 * step);
        let q = q_star(gamma.sqrt(), 4).unwrap();
        assert!((d - 0.5 * q.powi(4)).abs() < 1e-5);
    }

    #[test]
    fn f_derivative_is_h_over_one_minus_q() {
        for k in 3..=6 {
            for lambda in [0.8, 1.6] {
                for i in 1..20 {
                    let q = i as f64 / 20.0;
                    let step = 1e-6;
                    let fd = (f_lambda(q + step, lambda, k).unwrap() - f_lambda(q - step, lambda, k).unwrap())
                        / (2.0 * step);
                    let exact = f_lambda_derivative(q, lambda, k);
                    assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "k={k} q={q}");
                }
            }
        }
    }
}
