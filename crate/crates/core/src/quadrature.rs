//! Double-exponential quadrature over the real line.
//!
//! Finite pieces use tanh-sinh, half-lines use exp-sinh. Integrands are evaluated at
//! `anchor + offset` with the anchor set to the nearest interval endpoint, so nodes
//! clustering toward an endpoint keep full relative precision in the offset. Poles
//! and kinks must be passed as split points; the rules then converge exponentially
//! for algebraic endpoint singularities and algebraic (Cauchy-type) tails alike.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RhoError};

/// Past this node parameter `1 - tanh(π/2 sinh t)` underflows.
const TANH_SINH_TMAX: f64 = 6.1;
const EXP_SINH_TMIN: f64 = -6.1;
const EXP_SINH_TMAX: f64 = 6.7;
const MIN_LEVELS: u32 = 3;

/// Quadrature settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Target absolute error of a full-line integral.
    pub abs_tol: f64,
    /// Maximum number of step-halving refinements per piece.
    pub max_levels: u32,
    /// Extra split points (poles, kinks, support edges) added to the integrand's own.
    #[serde(default)]
    pub split_points: Vec<f64>,
    /// Sample size of the Monte Carlo fallback used when quadrature fails.
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-8,
            max_levels: 11,
            split_points: Vec::new(),
            mc_samples: 100_000,
            mc_seed: 0x5eed,
        }
    }
}

impl QuadratureConfig {
    pub fn with_tolerance(abs_tol: f64) -> Result<Self> {
        if !(abs_tol > 0.0) {
            return Err(RhoError::Domain(
                "quadrature tolerance must be positive".into(),
            ));
        }
        Ok(QuadratureConfig {
            abs_tol,
            ..Default::default()
        })
    }
}

/// Value and error estimate of an integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// `∫_a^b f`. `f(anchor, offset)` is evaluated at `anchor + offset`.
pub fn integrate_interval<F>(f: &F, a: f64, b: f64, tol: f64, max_levels: u32) -> Result<Integral>
where
    F: Fn(f64, f64) -> f64 + ?Sized,
{
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if a > b {
        let r = integrate_interval(f, b, a, tol, max_levels)?;
        return Ok(Integral {
            value: -r.value,
            ..r
        });
    }
    let half = 0.5 * (b - a);
    let mut evals = 0usize;
    let mut eval = |t: f64| -> Result<f64> {
        let y = FRAC_PI_2 * t.sinh();
        let comp = 2.0 / (1.0 + (2.0 * y.abs()).exp());
        let cosh_y = y.cosh();
        let w = FRAC_PI_2 * t.cosh() / (cosh_y * cosh_y);
        let off = half * comp;
        if off == 0.0 || w == 0.0 {
            return Ok(0.0);
        }
        evals += 1;
        let v = if t > 0.0 {
            f(b, -off)
        } else if t < 0.0 {
            f(a, off)
        } else {
            f(a, half)
        };
        if !v.is_finite() {
            return Err(RhoError::Numeric(format!(
                "non-finite integrand near {} (offset {off:e})",
                if t > 0.0 { b } else { a }
            )));
        }
        Ok(w * v)
    };

    let mut h = 1.0;
    let mut sum = eval(0.0)?;
    let mut k = 1;
    loop {
        let t = k as f64;
        if t > TANH_SINH_TMAX {
            break;
        }
        sum += eval(t)? + eval(-t)?;
        k += 1;
    }
    let mut prev = half * h * sum;
    let mut err = f64::INFINITY;
    for level in 1..=max_levels {
        h *= 0.5;
        let mut j = 1u64;
        loop {
            let t = j as f64 * h;
            if t > TANH_SINH_TMAX {
                break;
            }
            sum += eval(t)? + eval(-t)?;
            j += 2;
        }
        let cur = half * h * sum;
        err = (cur - prev).abs();
        prev = cur;
        if level >= MIN_LEVELS && err <= tol.max(1e-15 * cur.abs()) {
            return Ok(Integral {
                value: cur,
                error: err,
                evaluations: evals,
            });
        }
    }
    Err(RhoError::Numeric(format!(
        "tanh-sinh on [{a}, {b}] did not converge (last change {err:e})"
    )))
}

/// `∫_a^∞ f` (direction `+1`) or `∫_{-∞}^a f` (direction `-1`), substitution
/// `x = a ± s·exp(π/2 sinh t)`.
pub fn integrate_half_line<F>(
    f: &F,
    a: f64,
    direction: f64,
    scale: f64,
    tol: f64,
    max_levels: u32,
) -> Result<Integral>
where
    F: Fn(f64, f64) -> f64 + ?Sized,
{
    let mut evals = 0usize;
    let mut eval = |t: f64| -> Result<f64> {
        let y = FRAC_PI_2 * t.sinh();
        let e = y.exp();
        let off = scale * e;
        let w = scale * e * FRAC_PI_2 * t.cosh();
        if off == 0.0 || !off.is_finite() || w == 0.0 {
            return Ok(0.0);
        }
        evals += 1;
        let v = f(a, direction * off);
        if !v.is_finite() {
            return Err(RhoError::Numeric(format!(
                "non-finite integrand on the tail at {a}"
            )));
        }
        Ok(w * v)
    };
    let mut h = 1.0;
    let mut sum = 0.0;
    let mut k = (EXP_SINH_TMIN).ceil() as i64;
    while (k as f64) <= EXP_SINH_TMAX {
        sum += eval(k as f64)?;
        k += 1;
    }
    let mut prev = h * sum;
    let mut err = f64::INFINITY;
    for level in 1..=max_levels {
        h *= 0.5;
        // odd multiples of h inside [TMIN, TMAX]
        let first = ((EXP_SINH_TMIN / h).ceil() as i64) | 1;
        let mut j = first;
        while (j as f64) * h <= EXP_SINH_TMAX {
            sum += eval(j as f64 * h)?;
            j += 2;
        }
        let cur = h * sum;
        err = (cur - prev).abs();
        prev = cur;
        if level >= MIN_LEVELS && err <= tol.max(1e-15 * cur.abs()) {
            return Ok(Integral {
                value: cur,
                error: err,
                evaluations: evals,
            });
        }
    }
    Err(RhoError::Numeric(format!(
        "exp-sinh tail from {a} did not converge (last change {err:e})"
    )))
}

/// `∫_ℝ f`, split at `points` (sorted and deduplicated internally).
pub fn integrate_line<F>(f: &F, points: &[f64], cfg: &QuadratureConfig) -> Result<Integral>
where
    F: Fn(f64, f64) -> f64 + ?Sized,
{
    let mut pts: Vec<f64> = points
        .iter()
        .chain(cfg.split_points.iter())
        .copied()
        .filter(|p| p.is_finite())
        .collect();
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    if pts.is_empty() {
        pts.push(0.0);
    }
    let span = pts[pts.len() - 1] - pts[0];
    let scale = if span > 0.0 { span / 4.0 } else { 1.0 };
    let pieces = pts.len() + 1;
    let tol = cfg.abs_tol / pieces as f64;
    let mut total = integrate_half_line(f, pts[0], -1.0, scale, tol, cfg.max_levels)?;
    for w in pts.windows(2) {
        let r = integrate_interval(f, w[0], w[1], tol, cfg.max_levels)?;
        total.value += r.value;
        total.error += r.error;
        total.evaluations += r.evaluations;
    }
    let r = integrate_half_line(f, pts[pts.len() - 1], 1.0, scale, tol, cfg.max_levels)?;
    total.value += r.value;
    total.error += r.error;
    total.evaluations += r.evaluations;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> QuadratureConfig {
        QuadratureConfig::with_tolerance(1e-12).unwrap()
    }

    #[test]
    fn polynomial_on_interval() {
        let r =
            integrate_interval(&|a: f64, o: f64| (a + o) * (a + o), 0.0, 3.0, 1e-13, 10).unwrap();
        assert!((r.value - 9.0).abs() < 1e-12);
    }

    #[test]
    fn endpoint_power_singularity() {
        // ∫_0^1 x^{-3/4} dx = 4, singular at the left anchor
        let f = |a: f64, o: f64| {
            if a == 0.0 {
                o.powf(-0.75)
            } else {
                (a + o).powf(-0.75)
            }
        };
        let r = integrate_interval(&f, 0.0, 1.0, 1e-12, 12).unwrap();
        assert!((r.value - 4.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn gaussian_over_line() {
        let f = |a: f64, o: f64| {
            let x = a + o;
            (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        };
        let r = integrate_line(&f, &[-3.0, 0.0, 3.0], &tol()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11, "{}", r.value);
    }

    #[test]
    fn cauchy_tails() {
        let f = |a: f64, o: f64| {
            let x = a + o;
            1.0 / (std::f64::consts::PI * (1.0 + x * x))
        };
        let r = integrate_line(&f, &[-10.0, 0.0, 10.0], &tol()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10, "{}", r.value);
    }

    #[test]
    fn zero_integrand() {
        let r = integrate_line(&|_: f64, _: f64| 0.0, &[0.0, 1.0], &tol()).unwrap();
        assert_eq!(r.value, 0.0);
    }
}
