//! ℓ_p norms, dual exponents and the origin-centered ℓ_p ball used as the
//! constraint set.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Relative slack used by [`LpGeometry::contains`].
pub const MEMBERSHIP_RTOL: f64 = 1e-12;

/// `(Σ|x_i|^p)^{1/p}`, or `max |x_i|` for `p = ∞`.
pub fn lp_norm(x: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("norm exponent must be >= 1, got {p}")));
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite coordinate {bad}")));
    }
    Ok(lp_norm_unchecked(x, p))
}

/// [`lp_norm`] without input validation. Scales by the largest coordinate so
/// that large exponents do not overflow.
pub fn lp_norm_unchecked(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 || p == f64::INFINITY {
        return m;
    }
    if p == 2.0 {
        let s: f64 = x.iter().map(|v| (v / m) * (v / m)).sum();
        return m * s.sqrt();
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    let s: f64 = x.iter().map(|v| (v.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// The exponent `q` with `1/p + 1/q = 1`, for `p ∈ [1, 2]`.
pub fn dual_exponent(p: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::Domain(format!("primal exponent must lie in [1, 2], got {p}")));
    }
    Ok(conjugate(p))
}

/// `p/(p-1)`, with `1 ↔ ∞`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p == f64::INFINITY {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Smallest primal exponent the regularizer is built for in dimension `d`:
/// below `1 + 1/ln d` the ℓ_p ball is within a constant factor of the ℓ_1
/// ball, and the exponent is raised to that threshold.
pub fn exponent_floor(d: usize) -> f64 {
    if d <= 2 {
        return 2.0;
    }
    (1.0 + 1.0 / (d as f64).ln()).min(2.0)
}

/// The ambient constraint set: the origin-centered ℓ_p ball of the given
/// radius in `R^d`, together with its dual exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpGeometry {
    d: usize,
    p: f64,
    q: f64,
    radius: f64,
}

impl LpGeometry {
    pub fn new(d: usize, p: f64, radius: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Domain(format!("radius must be positive, got {radius}")));
        }
        let q = dual_exponent(p)?;
        Ok(Self { d, p, q, radius })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Raw primal exponent of the ball.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Raw dual exponent.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Diameter of the ball in its own norm.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// Primal exponent used when building the regularizer: `p` itself, or
    /// [`exponent_floor`] when `p` is at or below it.
    pub fn effective_p(&self) -> f64 {
        let floor = exponent_floor(self.d);
        if self.p <= floor {
            floor
        } else {
            self.p
        }
    }

    pub fn effective_q(&self) -> f64 {
        conjugate(self.effective_p())
    }

    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x.len())?;
        lp_norm(x, self.p)
    }

    /// Membership in the ball, with relative slack [`MEMBERSHIP_RTOL`].
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(self.norm(x)? <= self.radius * (1.0 + MEMBERSHIP_RTOL))
    }

    /// Rescaled copy with the same exponent.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.d, self.p, radius)
    }
}

/// Distance between `x` and `x2` in the Hessian metric of the log-Laplace
/// transform of `a‖y‖_2²`, whose Hessian is the constant `I/(2a)`.
pub fn riemannian_distance_gaussian(x: &[f64], x2: &[f64], a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("scale a must be positive, got {a}")));
    }
    check_dim(x.len(), x2.len())?;
    let diff: Vec<f64> = x.iter().zip(x2).map(|(u, v)| u - v).collect();
    Ok(lp_norm(&diff, 2.0)? / (2.0 * a).sqrt())
}

/// Euclidean inner product.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
