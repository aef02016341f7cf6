//! Tabulated `ln J_q(z)` for `J_q(z) = ∫ exp(zs - |s|^q) ds`.
//!
//! Every one-dimensional integral in the λ-mixture reduces to `J_q` by the
//! substitution `t = c^{-1/q} s`:
//! `∫ exp(θt - c|t|^q) dt = c^{-1/q} J_q(|θ| c^{-1/q})`.
//! The table depends on `q` alone and is shared process-wide.
//!
//! Two branches keep the interpolated quantity smooth and O(1):
//! for `z ≤ q` the table holds `ln J_q(z)` on a uniform grid in `z`; above,
//! with the mode `s* = (z/q)^{1/(q-1)}` and `H = s*^q`, it holds the Laplace
//! remainder `R(H) = ln J_q(z) - (q-1)H + ((q-2)/2) ln s*` on a uniform grid in
//! `ln H`. `R` tends to `½ ln(2π/(q(q-1)))` with a `1/H` correction.

use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::llt::ln_one_dim_integral;
use crate::quad::log_integrate;

const SMALL_NODES: usize = 513;
const LARGE_STEP: f64 = 1.0 / 32.0;
const LARGE_MAX: f64 = 40.0;
const STENCIL: usize = 6;

#[derive(Debug)]
pub(crate) struct KernelTable {
    q: f64,
    small_step: f64,
    small: Vec<f64>,
    large: Vec<f64>,
    limit: f64,
}

static TABLES: OnceLock<Mutex<Vec<(u64, Arc<KernelTable>)>>> = OnceLock::new();

/// The shared table for exponent `q > 2`.
pub(crate) fn kernel_table(q: f64) -> Result<Arc<KernelTable>> {
    let tables = TABLES.get_or_init(Mutex::default);
    if let Some((_, t)) = tables.lock().expect("kernel table lock").iter().find(|(k, _)| *k == q.to_bits()) {
        return Ok(Arc::clone(t));
    }
    // Built outside the lock; a concurrent duplicate build is harmless.
    let table = Arc::new(KernelTable::build(q)?);
    let mut guard = tables.lock().expect("kernel table lock");
    if let Some((_, t)) = guard.iter().find(|(k, _)| *k == q.to_bits()) {
        return Ok(Arc::clone(t));
    }
    guard.push((q.to_bits(), Arc::clone(&table)));
    Ok(table)
}

/// `H·g(v/√H)` with `g(u) = 1 + qu - |1+u|^q`, accurate for small `u`.
fn scaled_gap(q: f64, h: f64, v: f64) -> f64 {
    let u = v / h.sqrt();
    if u.abs() > 0.25 {
        return h * (1.0 + q * u - (1.0 + u).abs().powf(q));
    }
    // (1+u)^q - 1 - qu = Σ_{k≥2} C(q,k) u^k
    let mut coeff = q * (q - 1.0) / 2.0;
    let mut power = u * u;
    let mut sum = 0.0;
    for k in 2..80 {
        let term = coeff * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        coeff *= (q - k as f64) / (k as f64 + 1.0);
        power *= u;
    }
    -h * sum
}

/// `R(H) = ln ∫ exp(H g(v/√H)) dv`.
fn remainder(q: f64, h: f64) -> Result<f64> {
    let f = |v: f64| scaled_gap(q, h, v);
    let mut ends = [0.0f64; 2];
    for (k, dir) in [-1.0f64, 1.0].into_iter().enumerate() {
        let mut v = 1.0;
        while f(dir * v) > -46.0 {
            v *= 2.0;
            if v > 1e6 {
                return Err(Error::Numerical(format!("kernel remainder range search failed at H = {h}")));
            }
        }
        ends[k] = dir * v;
    }
    let mut breaks = vec![ends[0]];
    let kink = -h.sqrt();
    if kink > ends[0] {
        breaks.push(kink);
    }
    breaks.push(0.0);
    breaks.push(ends[1]);
    Ok(log_integrate(f, &breaks, 1e-14, 4000)?.log_value)
}

/// Six-point Lagrange interpolation on a uniform grid starting at 0.
fn interpolate(values: &[f64], step: f64, x: f64) -> f64 {
    let r = x / step;
    let base = (r.floor() as isize - (STENCIL as isize / 2 - 1)).clamp(0, (values.len() - STENCIL) as isize) as usize;
    let mut total = 0.0;
    for i in 0..STENCIL {
        let mut w = 1.0;
        let ri = (base + i) as f64;
        for j in 0..STENCIL {
            if j != i {
                w *= (r - (base + j) as f64) / (ri - (base + j) as f64);
            }
        }
        total += w * values[base + i];
    }
    total
}

impl KernelTable {
    fn build(q: f64) -> Result<Self> {
        if !(q > 2.0) || !q.is_finite() {
            return Err(Error::Domain(format!("kernel table needs finite q > 2, got {q}")));
        }
        let small_step = q / (SMALL_NODES - 1) as f64;
        let small = (0..SMALL_NODES)
            .map(|i| ln_one_dim_integral(i as f64 * small_step, 1.0, q, 1e-14))
            .collect::<Result<Vec<_>>>()?;
        let n_large = (LARGE_MAX / LARGE_STEP).round() as usize + 1;
        let large = (0..n_large)
            .map(|i| remainder(q, (i as f64 * LARGE_STEP).exp()))
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelTable {
            q,
            small_step,
            small,
            large,
            limit: 0.5 * (2.0 * std::f64::consts::PI / (q * (q - 1.0))).ln(),
        })
    }

    /// `ln J_q(z)`.
    pub(crate) fn ln_j(&self, z: f64) -> f64 {
        let q = self.q;
        let z = z.abs();
        if z <= q {
            return interpolate(&self.small, self.small_step, z);
        }
        let ln_s = (z / q).ln() / (q - 1.0);
        let ln_h = q * ln_s;
        let r = if ln_h <= LARGE_MAX {
            interpolate(&self.large, LARGE_STEP, ln_h)
        } else {
            let last = *self.large.last().expect("table is non-empty");
            self.limit + (last - self.limit) * (LARGE_MAX - ln_h).exp()
        };
        (q - 1.0) * ln_h.exp() - 0.5 * (q - 2.0) * ln_s + r
    }

    /// `ln ∫ exp(θt - c|t|^q) dt`.
    pub(crate) fn ln_integral(&self, theta: f64, coef: f64) -> f64 {
        let scale = coef.powf(-1.0 / self.q);
        scale.ln() + self.ln_j(theta * scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn matches_direct_quadrature() {
        let mut rng = seeded(5);
        for &q in &[2.5, 3.0, 4.0, 5.6] {
            let table = kernel_table(q).unwrap();
            let mut worst = 0.0f64;
            for _ in 0..400 {
                let theta = 10f64.powf(rng.random_range(-3.0..3.0));
                let coef = 10f64.powf(rng.random_range(-6.0..3.0));
                let direct = ln_one_dim_integral(theta, coef, q, 1e-13).unwrap();
                let got = table.ln_integral(theta, coef);
                // The direct value carries rounding error proportional to the
                // size of the exponent at the mode.
                let scale = 1.0 + direct.abs();
                worst = worst.max((got - direct).abs() / scale);
            }
            assert!(worst < 1e-11, "q = {q}: worst scaled error {worst:e}");
        }
    }

    #[test]
    fn remainder_tends_to_gaussian_limit() {
        let q = 3.0;
        let limit = 0.5 * (2.0 * std::f64::consts::PI / (q * (q - 1.0))).ln();
        let r = remainder(q, 1e12).unwrap();
        assert!((r - limit).abs() < 1e-10);
        assert!((remainder(q, 1e4).unwrap() - limit).abs() > (r - limit).abs());
    }

    #[test]
    fn table_is_even_in_z() {
        let t = kernel_table(3.0).unwrap();
        for &z in &[0.3, 2.9, 17.0, 4e4] {
            assert_eq!(t.ln_j(z), t.ln_j(-z));
        }
    }
}
