//! Small numerical kernels: bracketing bisection, adaptive Simpson
//! quadrature and a box-constrained Nelder–Mead simplex search.

use crate::error::{Error, Result};

/// Absolute tolerance used for every root in the crate.
pub const ROOT_TOL: f64 = 1e-12;

/// Root of `f` on `[lo, hi]` by bisection. `f(lo)` and `f(hi)` must have
/// opposite signs (a zero at an endpoint is returned as is).
///
/// Iterates until the bracket is narrower than `tol` and then keeps going
/// while the midpoint is still representable, so the result is accurate to
/// the larger of `tol` and one ulp.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::NumericFailure(format!(
            "no sign change on [{lo}, {hi}]: f(lo) = {flo}, f(hi) = {fhi}"
        )));
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
        // Past `tol` a few extra halvings are free and tighten the residuals.
        if hi - lo <= tol * 1e-3 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`, with a recursion cap of `max_depth` halvings.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct SimplexSettings {
    pub max_evals: usize,
    /// Stop when the spread of function values over the simplex drops below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter drops below this.
    pub x_tol: f64,
    /// Initial edge length as a fraction of each box side.
    pub initial_step: f64,
}

impl Default for SimplexSettings {
    fn default() -> Self {
        Self { max_evals: 4000, f_tol: 1e-14, x_tol: 1e-10, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Nelder–Mead search for a minimum of `f` inside the box `lower ≤ x ≤ upper`.
///
/// Every trial point is clamped into the box before evaluation, so `f` is
/// only ever called on feasible points. Non-finite values are treated as +∞.
pub fn nelder_mead<F>(mut f: F, start: &[f64], lower: &[f64], upper: &[f64], settings: SimplexSettings) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..dim {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut x0 = start.to_vec();
    clamp(&mut x0);
    simplex.push(x0.clone());
    for i in 0..dim {
        let mut xi = x0.clone();
        let step = settings.initial_step * (upper[i] - lower[i]).min(1.0).max(1e-6);
        // Step inward when the start sits on the upper face.
        xi[i] = if xi[i] + step <= upper[i] { xi[i] + step } else { xi[i] - step };
        clamp(&mut xi);
        simplex.push(xi);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    while evals < settings.max_evals {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread <= settings.f_tol * (1.0 + values[0].abs())) || diameter <= settings.x_tol {
            break;
        }

        let mut centroid = vec![0.0; dim];
        for x in &simplex[..dim] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / dim as f64;
            }
        }
        let toward = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&simplex[dim]).map(|(c, w)| c + t * (w - c)).collect();
            clamp(&mut p);
            p
        };

        let reflected = toward(-1.0);
        let fr = eval(&reflected, &mut evals);
        if fr < values[0] {
            let expanded = toward(-2.0);
            let fe = eval(&expanded, &mut evals);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[dim] {
            let p = toward(-0.5);
            let v = eval(&p, &mut evals);
            (p, v)
        } else {
            let p = toward(0.5);
            let v = eval(&p, &mut evals);
            (p, v)
        };
        if fc < values[dim].min(fr) {
            simplex[dim] = contracted;
            values[dim] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].clone();
        for j in 1..=dim {
            let mut p: Vec<f64> = best.iter().zip(&simplex[j]).map(|(b, x)| b + 0.5 * (x - b)).collect();
            clamp(&mut p);
            values[j] = eval(&p, &mut evals);
            simplex[j] = p;
        }
    }

    let (best, &value) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is non-empty");
    SimplexResult { x: simplex[best].clone(), value, evals }
}

/// Central finite difference of a scalar function.
pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Binomial coefficient as a float; exact for the small orders used here.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, ROOT_TOL).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bisect_rejects_unbracketed() {
        assert!(matches!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12), Err(Error::NumericFailure(_))));
    }

    #[test]
    fn simpson_polynomials_and_exp() {
        let v = adaptive_simpson(|x| x.powi(3) - x, 0.0, 2.0, 1e-12, 30);
        assert!((v - 2.0).abs() < 1e-12);
        let e = adaptive_simpson(f64::exp, 0.0, 1.0, 1e-11, 40);
        assert!((e - (1f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn nelder_mead_rosenbrock_in_box() {
        let r = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.0, 1.5],
            &[-2.0, -2.0],
            &[2.0, 2.0],
            SimplexSettings { max_evals: 20_000, ..Default::default() },
        );
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r);
    }

    #[test]
    fn nelder_mead_respects_box() {
        let r = nelder_mead(|x| x[0], &[0.5], &[0.2], &[1.0], SimplexSettings::default());
        assert!((r.x[0] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(6, 0), 1.0);
        assert_eq!(binomial(6, 6), 1.0);
        assert_eq!(binomial(3, 5), 0.0);
    }
}
