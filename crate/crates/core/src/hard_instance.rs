//! Gaussian linear-loss instances on which every `k`-sample algorithm has
//! excess population risk of order
//! `GD·max(1 - 1/p, 1/ln d)·min(1, √(d/(k ln d)))`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dp::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{lp_norm_unchecked, LpGeometry};

/// Losses `f(x; s) = ⟨s, x⟩` with `s ~ N(κv, σ²I_d)`, `v ∈ {±1}^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    pub d: usize,
    pub v: Vec<f64>,
    pub kappa: f64,
    pub sigma: f64,
    pub lipschitz: f64,
    pub p: f64,
    pub q: f64,
    pub k_budget: usize,
    /// Replace draws with `‖s‖_q ≥ G` by zero.
    pub truncate: bool,
}

/// `σ = G d^{-1/q} / √(d/k + 4 ln d)` and `κ = σ√d / (2√k)` with a uniformly
/// random sign vector `v`.
pub fn make_hard_instance<R: Rng + ?Sized>(
    d: usize,
    lipschitz: f64,
    p: f64,
    k_budget: usize,
    truncate: bool,
    rng: &mut R,
) -> Result<HardInstance> {
    if d < 2 {
        return Err(Error::Domain("hard instances need d >= 2".into()));
    }
    if k_budget == 0 {
        return Err(Error::Domain("query budget k must be at least 1".into()));
    }
    if !(lipschitz > 0.0) {
        return Err(Error::Domain(format!("G must be positive, got {lipschitz}")));
    }
    let q = crate::geometry::dual_exponent(p)?;
    let df = d as f64;
    let kf = k_budget as f64;
    let d_pow = if q.is_finite() { df.powf(-1.0 / q) } else { 1.0 };
    let sigma = lipschitz * d_pow / (df / kf + 4.0 * df.ln()).sqrt();
    let kappa = sigma * df.sqrt() / (2.0 * kf.sqrt());
    let v = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    Ok(HardInstance {
        d,
        v,
        kappa,
        sigma,
        lipschitz,
        p,
        q,
        k_budget,
        truncate,
    })
}

impl HardInstance {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let noise = Normal::new(0.0, self.sigma).expect("σ is positive");
        let s: Vec<f64> = self.v.iter().map(|vi| self.kappa * vi + noise.sample(rng)).collect();
        if self.truncate && lp_norm_unchecked(&s, self.q) >= self.lipschitz {
            vec![0.0; self.d]
        } else {
            s
        }
    }

    /// `n` draws as a linear-loss dataset. Requires the truncated variant,
    /// since untruncated draws may violate the norm bound.
    pub fn dataset<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let rows = (0..n).map(|_| self.sample(rng)).collect();
        Dataset::new(rows, None, self.lipschitz, self.q)
    }

    /// Excess population risk `κ(⟨v, x⟩ + D‖v‖_q)` over the ball of radius
    /// `D` for the untruncated law.
    pub fn excess_risk(&self, x: &[f64], radius: f64) -> f64 {
        let dot: f64 = self.v.iter().zip(x).map(|(a, b)| a * b).sum();
        let dual = if self.q.is_finite() { (self.d as f64).powf(1.0 / self.q) } else { 1.0 };
        self.kappa * (dot + radius * dual)
    }
}

/// The minimizer of `⟨s, x⟩` over the ℓ_p ball of radius `D`:
/// `x = -D ∇‖s‖_q`.
pub fn linear_minimizer(s: &[f64], geom: &LpGeometry) -> Vec<f64> {
    let q = geom.q();
    let r = geom.radius();
    if !q.is_finite() {
        // p = 1: all mass on the largest coordinate.
        let (i, _) = s
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
        let mut x = vec![0.0; s.len()];
        x[i] = -r * s[i].signum();
        return x;
    }
    let norm = lp_norm_unchecked(s, q);
    if norm == 0.0 {
        return vec![0.0; s.len()];
    }
    s.iter()
        .map(|v| -r * v.signum() * (v.abs() / norm).powf(q - 1.0))
        .collect()
}

/// The reference curve `GD·max(1 - 1/p, 1/ln d)·min(1, √(d/(k ln d)))` with
/// unit constant.
pub fn risk_lower_bound(lipschitz: f64, radius: f64, p: f64, d: usize, k_budget: f64) -> f64 {
    let ln_d = (d as f64).ln();
    let geometry_factor = (1.0 - 1.0 / p).max(1.0 / ln_d);
    let sample_factor = (d as f64 / (k_budget * ln_d)).sqrt().min(1.0);
    lipschitz * radius * geometry_factor * sample_factor
}

/// One row of a risk-vs-budget table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub k: usize,
    pub mean_risk: f64,
    pub risk_se: f64,
    pub lower_bound: f64,
}

/// The empirical risk minimizer of the linear losses `samples`.
pub fn erm_solution(samples: &[Vec<f64>], geom: &LpGeometry) -> Vec<f64> {
    let mut mean = vec![0.0; geom.dim()];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / samples.len() as f64;
        }
    }
    linear_minimizer(&mean, geom)
}

/// Mean excess population risk of `solve` over `reps` fresh instances for
/// each budget `k`, where `solve` sees `k` draws. Draws come from the
/// truncated law when `truncate` is set; risk is always measured for the
/// untruncated law.
pub fn risk_table<R, S>(
    geom: &LpGeometry,
    lipschitz: f64,
    budgets: &[usize],
    reps: usize,
    truncate: bool,
    rng: &mut R,
    mut solve: S,
) -> Result<Vec<RiskRow>>
where
    R: Rng + ?Sized,
    S: FnMut(&HardInstance, &[Vec<f64>], &mut R) -> Result<Vec<f64>>,
{
    if reps < 2 {
        return Err(Error::Domain("risk table needs at least two repetitions".into()));
    }
    let d = geom.dim();
    let p = geom.p();
    let mut table = Vec::with_capacity(budgets.len());
    for &k in budgets {
        let mut risks = Vec::with_capacity(reps);
        for _ in 0..reps {
            let inst = make_hard_instance(d, lipschitz, p, k, truncate, rng)?;
            let samples: Vec<Vec<f64>> = (0..k).map(|_| inst.sample(rng)).collect();
            let x = solve(&inst, &samples, rng)?;
            risks.push(inst.excess_risk(&x, geom.radius()));
        }
        let n = reps as f64;
        let m = risks.iter().sum::<f64>() / n;
        let var = risks.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (n - 1.0);
        table.push(RiskRow {
            k,
            mean_risk: m,
            risk_se: (var / n).sqrt(),
            lower_bound: risk_lower_bound(lipschitz, geom.radius(), p, d, k as f64),
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn parameters_follow_the_construction() {
        let mut rng = seeded(1);
        let h = make_hard_instance(16, 2.0, 4.0 / 3.0, 64, false, &mut rng).unwrap();
        let want_sigma = 2.0 * 16f64.powf(-0.25) / (16.0 / 64.0 + 4.0 * 16f64.ln()).sqrt();
        assert!((h.sigma - want_sigma).abs() < 1e-15);
        assert!((h.kappa - h.sigma * 4.0 / (2.0 * 8.0)).abs() < 1e-15);
        assert!(h.v.iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn truncated_draws_respect_the_bound() {
        let mut rng = seeded(2);
        let h = make_hard_instance(8, 0.5, 1.5, 8, true, &mut rng).unwrap();
        for _ in 0..10_000 {
            assert!(lp_norm_unchecked(&h.sample(&mut rng), h.q) <= 0.5);
        }
    }

    #[test]
    fn lower_bound_examples() {
        assert!((risk_lower_bound(1.0, 1.0, 2.0, 100, 100.0) - 0.5 * 0.46599060178465607).abs() < 1e-12);
        assert!(risk_lower_bound(1.0, 1.0, 2.0, 100, 1e30) < 1e-12);
        let p = 1.0 + 1.0 / 100f64.ln();
        let f = risk_lower_bound(1.0, 1.0, p, 100, 1.0);
        assert!((f - (1.0 - 1.0 / p).max(1.0 / 100f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn erm_risk_decreases_with_budget() {
        let geom = LpGeometry::new(8, 2.0, 1.0).unwrap();
        let mut rng = seeded(3);
        let rows = risk_table(&geom, 1.0, &[8, 32, 128, 512], 200, false, &mut rng, |_, s, _| {
            Ok(erm_solution(s, &geom))
        })
        .unwrap();
        for w in rows.windows(2) {
            assert!(w[1].mean_risk < w[0].mean_risk, "{rows:?}");
        }
        assert!(rows.iter().all(|r| r.mean_risk >= 0.0));
    }

    #[test]
    fn minimizer_attains_the_dual_norm() {
        let geom = LpGeometry::new(3, 1.5, 2.0).unwrap();
        let s = [0.3, -1.2, 0.7];
        let x = linear_minimizer(&s, &geom);
        let val: f64 = s.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((val + 2.0 * lp_norm_unchecked(&s, 3.0)).abs() < 1e-12);
        assert!((lp_norm_unchecked(&x, 1.5) - 2.0).abs() < 1e-12);
    }
}
