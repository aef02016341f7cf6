//! Fixtures shared by the criterion benches.

use rand::Rng;

use llt_core::{seeded, InnerLoopConfig, LLTSpec, LpGeometry, ProblemInstance, Result};

/// A regularizer on the unit `ℓ_p` ball in `R^d`.
pub fn spec(d: usize, p: f64, a: f64) -> Result<LLTSpec> {
    LLTSpec::new(LpGeometry::new(d, p, 1.0)?, a)
}

/// `count` points drawn uniformly from the cube `[-r, r]^d`.
pub fn points(d: usize, r: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    (0..count).map(|_| (0..d).map(|_| rng.random_range(-r..r)).collect()).collect()
}

/// A linear finite sum with `n` unit-direction rows scaled by `g`, and an
/// inner-loop configuration whose `η` just meets the inner precondition.
pub fn linear_problem(d: usize, n: usize, g: f64, seed: u64) -> Result<(ProblemInstance, InnerLoopConfig)> {
    let geom = LpGeometry::new(d, 2.0, 1.0)?;
    let rows = points(d, 1.0, n, seed)
        .into_iter()
        .map(|r| {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            r.iter().map(|v| g * v / norm).collect()
        })
        .collect();
    let instance = ProblemInstance::linear(geom, rows)?;
    let delta = 0.1;
    let eta = 1.0 / (1e4 * g * g * (1.0f64 / delta).ln());
    let cfg = InnerLoopConfig::new(delta, eta, 1.0 / eta, g)?;
    Ok((instance, cfg))
}
