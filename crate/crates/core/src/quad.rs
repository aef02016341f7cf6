//! Log-space numerics: log-sum-exp, Gauss–Legendre rules and an adaptive
//! Gauss–Legendre integrator that works with log-integrands, so integrals
//! spanning hundreds of orders of magnitude never overflow.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^{v_i}`; `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln |e^a - e^b|`.
pub fn log_abs_diff_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let d = (a - hi).exp() - (b - hi).exp();
    if d == 0.0 {
        f64::NEG_INFINITY
    } else {
        hi + d.abs().ln()
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub ln_weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        let ln_weights = weights.iter().map(|w| w.ln()).collect();
        Self {
            nodes,
            weights,
            ln_weights,
        }
    }

    /// Shared 16-point rule used by the adaptive integrator.
    pub fn panel_rule() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(16))
    }

    /// Plain-space integral of `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum();
        half * s
    }

    /// `ln ∫_a^b e^{g(t)} dt` with a single application of the rule.
    pub fn log_integrate<F: FnMut(f64) -> f64>(&self, g: &mut F, a: f64, b: f64) -> Result<f64> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut terms = [0.0f64; 64];
        let mut buf;
        let vals: &mut [f64] = if self.nodes.len() <= terms.len() {
            &mut terms[..self.nodes.len()]
        } else {
            buf = vec![0.0; self.nodes.len()];
            &mut buf
        };
        for (k, (x, lw)) in self.nodes.iter().zip(&self.ln_weights).enumerate() {
            let v = g(mid + half * x);
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::Numerical(format!(
                    "log-integrand is {v} at t = {}",
                    mid + half * x
                )));
            }
            vals[k] = lw + v;
        }
        Ok(half.ln() + log_sum_exp(vals))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `ln(1e-14)`: relative panel error attributable to rounding alone.
const ROUNDING_FLOOR: f64 = -32.236;

/// Result of [`log_integrate`].
#[derive(Debug, Clone, Copy)]
pub struct LogIntegral {
    /// `ln ∫ e^g`.
    pub log_value: f64,
    /// `ln` of the estimated absolute error.
    pub log_error: f64,
    pub panels: usize,
}

impl LogIntegral {
    pub fn relative_error(&self) -> f64 {
        (self.log_error - self.log_value).exp()
    }
}

struct Panel {
    a: f64,
    b: f64,
    left: f64,
    right: f64,
    fine: f64,
    err: f64,
}

fn make_panel<F: FnMut(f64) -> f64>(g: &mut F, a: f64, b: f64, coarse: f64) -> Result<Panel> {
    let rule = GaussLegendre::panel_rule();
    let m = 0.5 * (a + b);
    let left = rule.log_integrate(g, a, m)?;
    let right = rule.log_integrate(g, m, b)?;
    let fine = log_add_exp(left, right);
    Ok(Panel {
        a,
        b,
        left,
        right,
        fine,
        err: log_abs_diff_exp(coarse, fine),
    })
}

/// Adaptive Gauss–Legendre integration of `e^{g}` over the intervals given by
/// consecutive `breaks`, with `g` returned in log-space.
///
/// Panels are bisected in order of largest error estimate (difference between
/// the 16-point rule on the panel and on its two halves) until the summed
/// error is below `rel_tol` times the integral. Placing a break at any point
/// where `g` is not smooth keeps convergence geometric.
pub fn log_integrate<F: FnMut(f64) -> f64>(
    mut g: F,
    breaks: &[f64],
    rel_tol: f64,
    max_panels: usize,
) -> Result<LogIntegral> {
    if breaks.len() < 2 {
        return Err(Error::Numerical("need at least two break points".into()));
    }
    let rule = GaussLegendre::panel_rule();
    let mut panels = Vec::with_capacity(64);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            if b == a {
                continue;
            }
            return Err(Error::Numerical(format!("unordered break points {a} > {b}")));
        }
        let coarse = rule.log_integrate(&mut g, a, b)?;
        panels.push(make_panel(&mut g, a, b, coarse)?);
    }
    let ln_tol = rel_tol.ln();
    loop {
        let fines: Vec<f64> = panels.iter().map(|p| p.fine).collect();
        let errs: Vec<f64> = panels.iter().map(|p| p.err).collect();
        let total = log_sum_exp(&fines);
        let err = log_sum_exp(&errs);
        if total == f64::NEG_INFINITY || err <= total + ln_tol {
            return Ok(LogIntegral {
                log_value: total,
                log_error: err,
                panels: panels.len(),
            });
        }
        if panels.len() >= max_panels {
            return Err(Error::Numerical(format!(
                "adaptive quadrature did not converge: relative error {:.3e} after {} panels",
                (err - total).exp(),
                panels.len()
            )));
        }
        // Panels whose error is already at the rounding floor cannot improve.
        let worst = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.err > p.fine + ROUNDING_FLOOR && p.b - p.a > 1e-13 * p.a.abs().max(p.b.abs()).max(1.0))
            .max_by(|a, b| a.1.err.total_cmp(&b.1.err))
            .map(|(i, _)| i);
        let Some(worst) = worst else {
            return Ok(LogIntegral {
                log_value: total,
                log_error: err,
                panels: panels.len(),
            });
        };
        let p = panels.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        panels.push(make_panel(&mut g, p.a, m, p.left)?);
        panels.push(make_panel(&mut g, m, p.b, p.right)?);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the highest exact degree for 8 nodes
        let v = rule.integrate(|x| x.powi(14) + 3.0 * x.powi(15), -1.0, 1.0);
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
        let big = GaussLegendre::new(64);
        let v = big.integrate(|x| x.cos(), 0.0, 1.0);
        assert!((v - 1f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert!((log_abs_diff_exp(2f64.ln(), 0.0)).abs() < 1e-15);
    }

    #[test]
    fn adaptive_log_integral_of_gaussian() {
        let r = log_integrate(|t| -t * t, &[-40.0, 0.0, 40.0], 1e-13, 500).unwrap();
        assert!((r.log_value - 0.5 * PI.ln()).abs() < 1e-12, "{r:?}");
        // Huge scale: ∫ e^{800 - t²/2} = e^{800} √(2π)
        let r = log_integrate(|t| 800.0 - 0.5 * t * t, &[-60.0, 60.0], 1e-12, 500).unwrap();
        assert!((r.log_value - 800.0 - 0.5 * (2.0 * PI).ln()).abs() < 1e-11);
    }

    #[test]
    fn adaptive_log_integral_of_sharp_peak() {
        // ∫_0^1 s e^{-s t} dt = 1 - e^{-s}
        let s: f64 = 1e6;
        let r = log_integrate(|t| s.ln() - s * t, &[0.0, 1.0], 1e-12, 2000).unwrap();
        assert!(r.log_value.abs() < 1e-11, "{r:?}");
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-11);
    }
}
