//! Battery of numerical checks on the LLT machinery, each addressable by
//! name and reported as one JSON record.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lp_norm_unchecked, LpGeometry};
use crate::grid::{grid_tv, GridOracle};
use crate::llt::{llt_gradient, sample_linf_first_coordinate, CumulantEstimate, LLTSpec};
use crate::quad::{log_sum_exp, normal_cdf};
use crate::rng::{split, ChainRng};
use crate::stable::StableCountLaw;

/// Check names in suite order. The index of a name is its rng stream.
pub const CHECK_NAMES: [&str; 10] = [
    "closed-form",
    "laplace-identity",
    "gaussian-sampler",
    "cumulant-mean",
    "duality-lower-bound",
    "smoothness-gaussian",
    "self-concordance",
    "tv-stability",
    "range-bound",
    "linf-range-growth",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub seed: u64,
    /// Draws per Monte-Carlo moment estimate.
    pub mc_samples: usize,
    /// Random directions per covariance check.
    pub directions: usize,
    /// Random `(x, h)` pairs per exponent in the self-concordance check.
    pub concordance_pairs: usize,
    pub range_points: usize,
    /// Draws per dimension in the ℓ_∞ growth check.
    pub growth_samples: usize,
    pub closed_form_cases: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            seed: 0,
            mc_samples: 100_000,
            directions: 50,
            concordance_pairs: 25,
            range_points: 200,
            growth_samples: 1_000_000,
            closed_form_cases: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
}

/// One check outcome. `measured` is compared against `tolerance`; the
/// direction of the comparison is stated in `detail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check_name: String,
    pub status: CheckStatus,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub samples: u64,
    pub seconds: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub seed: u64,
    pub checks: Vec<CheckRecord>,
}

impl DiagnosticsReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }
}

struct Outcome {
    pass: bool,
    measured: f64,
    expected: f64,
    tolerance: f64,
    samples: u64,
    detail: String,
}

/// Runs the named checks (all of them when `names` is empty) in parallel.
/// Unknown names are a configuration error. Per-check failures, including
/// numerical errors inside a check, are recorded rather than returned.
pub fn diagnostics_suite(cfg: &DiagnosticsConfig, names: &[String]) -> Result<DiagnosticsReport> {
    let selected: Vec<usize> = if names.is_empty() {
        (0..CHECK_NAMES.len()).collect()
    } else {
        names
            .iter()
            .map(|n| {
                CHECK_NAMES
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::Config(format!("unknown check '{n}'; known: {}", CHECK_NAMES.join(", "))))
            })
            .collect::<Result<_>>()?
    };
    let checks = selected.par_iter().map(|&i| run_indexed(i, cfg)).collect();
    Ok(DiagnosticsReport { seed: cfg.seed, checks })
}

/// Runs a single check by name.
pub fn run_check(name: &str, cfg: &DiagnosticsConfig) -> Result<CheckRecord> {
    let i = CHECK_NAMES
        .iter()
        .position(|c| *c == name)
        .ok_or_else(|| Error::Config(format!("unknown check '{name}'")))?;
    Ok(run_indexed(i, cfg))
}

fn run_indexed(index: usize, cfg: &DiagnosticsConfig) -> CheckRecord {
    let mut rng = split(cfg.seed, index as u64);
    let start = Instant::now();
    let result = match CHECK_NAMES[index] {
        "closed-form" => closed_form(cfg, &mut rng),
        "laplace-identity" => laplace_identity(),
        "gaussian-sampler" => gaussian_sampler(cfg, &mut rng),
        "cumulant-mean" => cumulant_mean(cfg, &mut rng),
        "duality-lower-bound" => duality_lower_bound(cfg, &mut rng),
        "smoothness-gaussian" => smoothness_gaussian(cfg, &mut rng),
        "self-concordance" => self_concordance(cfg, &mut rng),
        "tv-stability" => tv_stability(cfg, &mut rng),
        "range-bound" => range_bound(cfg, &mut rng),
        "linf-range-growth" => linf_range_growth(cfg, &mut rng),
        _ => unreachable!("index comes from CHECK_NAMES"),
    };
    let seconds = start.elapsed().as_secs_f64();
    let name = CHECK_NAMES[index].to_string();
    match result {
        Ok(o) => CheckRecord {
            check_name: name,
            status: if o.pass { CheckStatus::Pass } else { CheckStatus::Fail },
            measured: o.measured,
            expected: o.expected,
            tolerance: o.tolerance,
            samples: o.samples,
            seconds,
            detail: o.detail,
        },
        Err(e) => CheckRecord {
            check_name: name,
            status: CheckStatus::Fail,
            measured: f64::NAN,
            expected: f64::NAN,
            tolerance: f64::NAN,
            samples: 0,
            seconds,
            detail: format!("error: {e}"),
        },
    }
}

/// A direction with `‖v‖_p = 1` and Gaussian orientation.
pub fn random_unit_lp<R: Rng + ?Sized>(d: usize, p: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = lp_norm_unchecked(&g, p);
        if n > 0.0 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

fn draws<R: Rng + ?Sized>(spec: &LLTSpec, x: &[f64], n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    (0..n).map(|_| spec.sample(x, rng)).collect()
}

fn uniform_point<R: Rng + ?Sized>(d: usize, half_width: f64, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-half_width..half_width)).collect()
}

fn closed_form(cfg: &DiagnosticsConfig, rng: &mut ChainRng) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.closed_form_cases {
        let d = rng.random_range(1..=8usize);
        let a: f64 = rng.random_range(0.1..10.0);
        let x = uniform_point(d, 2.0, rng);
        let geom = LpGeometry::new(d, 2.0, 1.0)?;
        let forced = LLTSpec::new(geom, a)?.forcing_quadrature(true);
        let got = forced.value(&x)?;
        let want = x.iter().map(|v| v * v).sum::<f64>() / (4.0 * a) + 0.5 * d as f64 * (std::f64::consts::PI / a).ln();
        worst = worst.max((got - want).abs() / want.abs().max(1e-300));
    }
    Ok(Outcome {
        pass: worst <= 1e-6,
        measured: worst,
        expected: 0.0,
        tolerance: 1e-6,
        samples: cfg.closed_form_cases as u64,
        detail: "max relative error of forced quadrature vs Gaussian closed form; pass if <= tolerance".into(),
    })
}

fn laplace_identity() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &c in &[1.0 / 3.0, 0.5, 2.0 / 3.0, 0.9] {
        let law = StableCountLaw::new(c)?;
        for &t in &[0.25, 0.5, 1.0, 2.0, 4.0] {
            let got = law.ln_laplace_transform(t)?.exp();
            worst = worst.max((got - (-f64::powf(t, c)).exp()).abs());
            cases += 1;
        }
    }
    Ok(Outcome {
        pass: worst <= 1e-4,
        measured: worst,
        expected: 0.0,
        tolerance: 1e-4,
        samples: cases,
        detail: "max |∫e^{-λt}μ_c(dλ) - e^{-t^c}|; pass if <= tolerance".into(),
    })
}

fn gaussian_sampler(cfg: &DiagnosticsConfig, rng: &mut ChainRng) -> Result<Outcome> {
    let d = 3;
    let spec = LLTSpec::new(LpGeometry::new(d, 2.0, 1.0)?, 0.5)?;
    let x = uniform_point(d, 2.0, rng);
    let ys = draws(&spec, &x, cfg.mc_samples, rng)?;
    let mut worst: f64 = 0.0;
    for i in 0..d {
        let mut col: Vec<f64> = ys.iter().map(|y| y[i] - x[i]).collect();
        col.sort_by(f64::total_cmp);
        worst = worst.max(ks_distance_sorted(&col, normal_cdf));
    }
    Ok(Outcome {
        pass: worst <= 0.01,
        measured: worst,
        expected: 0.0,
        tolerance: 0.01,
        samples: cfg.mc_samples as u64,
        detail: "max per-coordinate Kolmogorov distance of D_x draws to N(x, I) at a = 1/2; pass if <= tolerance".into(),
    })
}

/// Kolmogorov distance between sorted samples and a continuous CDF.
pub fn ks_distance_sorted<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |m, (i, &v)| {
        let f = cdf(v);
        m.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

fn cumulant_mean(cfg: &DiagnosticsConfig, rng: &mut ChainRng) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for &q in &[2.0, 4.0] {
        for &d in &[2usize, 4] {
            let spec = LLTSpec::with_exponent(LpGeometry::new(d, 2.0, 1.0)?, q, 0.5, Default::default())?;
            let x = uniform_point(d, 1.0, rng);
            let grad = llt_gradient(&spec, &x)?;
            let h = vec![1.0 / (d as f64).sqrt(); d];
            let est = CumulantEstimate::from_draws(&draws(&spec, &x, cfg.mc_samples, rng)?, &h);
            for i in 0..d {
                worst = worst.max((est.mean[i] - grad[i]).abs() / est.mean_se[i]);
            }
        }
    }
    Ok(Outcome {
        pass: worst <= 3.0,
        measured: worst,
        expected: 0.0,
        tolerance: 3.0,
        samples: 4 * cfg.mc_samples as u64,
        detail: "max |MC mean - finite-difference gradient| in standard errors over q in {2,4}, d in {2,4}; pass if <= tolerance".into(),
    })
}

fn duality_lower_bound(cfg: &DiagnosticsConfig, rng: &mut ChainRng) -> Result<Outcome> {
    let a = 0.5;
    let mut worst = f64::INFINITY;
    for &q in &[2.0, 4.0] {
        let p = q / (q - 1.0);
        for &d in &[2usize, 4] {
            let spec = LLTSpec::with_exponent(LpGeometry::new(d, 2.0, 1.0)?, q, a, Default::default())?;
            let x = uniform_point(d, 1.0, rng);
            let ys = draws(&spec, &x, cfg.mc_samples, rng)?;
            for _ in 0..cfg.directions {
                let v = random_unit_lp(d, p, rng);
                let est = CumulantEstimate::from_draws(&ys, &v);
                let bound = (p - 1.0) / (2.0 * a);
                worst = worst.min((est.directional_variance - bound) / est.directional_variance_se);
            }
        }
    }
    Ok(Outcome {
        pass: worst >= -3.0,
        measured: worst,
        expected: 0.0,
        tolerance: -3.0,
        samples: 4 * cfg.mc_samples as u64,
        detail: "min over directions of (vᵀΣv - (p-1)/(2a)‖v‖_p²) in standard errors; pass if >= tolerance".into(),
    })
}

fn smoothness_gaussian(cfg: &DiagnosticsConfig, rng: &mut ChainRng) -> Result<Outcome> {
    let d = 3;
    let a: f64 = rng.random_range(0.25..2.0);
    let spec = LLTSpec::new(LpGeometry::new(d, 2.0, 1.0)?, a)?;
    let x = uniform_point(d, 1.0, rng);
    let ys = draws(&spec, &x, cfg.mc_samples, rng)?;
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.directions {
        let v = random_unit_lp(d, 2.0, rng);
        let est = CumulantEstimate::from_draws(&ys, &v);
        worst = worst.max((est.directional_variance - 1.0 / (2.0 * a)).abs() / est.directional_variance_se);
    }
    Ok(Outcome {
        pass: worst <= 3.0,
        measured: worst,
        expected: 0.0,
        tolerance: 3.0,
        samples: cfg.mc_samples as u64,
        detail: format!("max |vᵀΣv - ‖v‖²/(2a)| in standard errors at q = 2, a = {a:.4}; pass if <= tolerance"),
    })
}

/// `(|m₃| - 3 se₃) / (2 (m₂ + 3 se₂)^{3/2})` for one `(x, h)` pair; the
/// self-concordance bound holds within the bands when this is at most 1.
pub fn concordance_ratio(est: &CumulantEstimate) -> f64 {
    let num = (est.third_directional.abs() - 3.0 * est.third_directional_se).max(0.0);
    num / (2.0 * (est.directional_variance + 3.0 * est.directional_variance_se).powf(1.5))
}

fn self_concordance(cfg: &DiagnosticsConfig, rng: &mut ChainRng) -> Result<Outcome> {
    let d = 3;
    let mut worst: f64 = 0.0;
    for &q in &[2.0, 4.0] {
        let spec = LLTSpec::with_exponent(LpGeometry::new(d, 2.0, 1.0)?, q, 0.5, Default::default())?;
        for _ in 0..cfg.concordance_pairs {
            let x = uniform_point(d, 2.0, rng);
            let h = random_unit_lp(d, 2.0, rng);
            let est = CumulantEstimate::from_draws(&draws(&spec, &x, cfg.mc_samples, rng)?, &h);
            worst = worst.max(concordance_ratio(&est));
        }
    }
    Ok(Outcome {
        pass: worst <= 1.0,
        measured: worst,
        expected: 0.0,
        tolerance: 1.0,
        samples: (2 * cfg.concordance_pairs * cfg.mc_samples) as u64,
        detail: "max (|m3| - 3se) / (2 (m2 + 3se)^{3/2}) over random (x, h) at q in {2,4}, d = 3; pass if <= tolerance".into(),
    })
}

fn tv_stability(cfg: &DiagnosticsConfig, rng: &mut ChainRng) -> Result<Outcome> {
    let d = 2;
    let spec = LLTSpec::new(LpGeometry::new(d, 2.0, 1.0)?, 0.5)?;
    let x = uniform_point(d, 1.0, rng);
    let u = random_unit_lp(d, 2.0, rng);
    let x2: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + 0.25 * b).collect();
    let exact = 2.0 * normal_cdf(0.125) - 1.0;
    // D_x and D_x' are N(x, I) and N(x', I); they differ only along u, so the
    // TV equals that of the projections onto u.
    let centre: f64 = x2.iter().zip(&u).map(|(a, b)| a * b).sum();
    let oracle = GridOracle::new(&[centre - 6.0], &[centre + 6.0], &[60], 4, |t| Ok(-0.5 * (t[0] - centre).powi(2)))?;
    let projected: Vec<[f64; 1]> = draws(&spec, &x, cfg.mc_samples, rng)?
        .iter()
        .map(|y| [y.iter().zip(&u).map(|(a, b)| a * b).sum()])
        .collect();
    let mc = grid_tv(&projected, &oracle)?;
    Ok(Outcome {
        pass: exact <= 0.5 && (mc - exact).abs() <= 0.02,
        measured: mc,
        expected: exact,
        tolerance: 0.02,
        samples: cfg.mc_samples as u64,
        detail: "grid TV of D_x draws against D_x' at ‖x - x'‖ = 1/4, q = 2, a = 1/2; pass if the exact TV is <= 1/2 and the estimate is within tolerance of it".into(),
    })
}

fn range_bound(cfg: &DiagnosticsConfig, rng: &mut ChainRng) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut evaluations = 0u64;
    for &d in &[4usize, 8, 16] {
        let a = 1.0 / (d as f64 * (d as f64).ln());
        for &p in &[2.0, 4.0 / 3.0] {
            let spec = LLTSpec::new(LpGeometry::new(d, p, 1.0)?, a)?;
            let base = spec.value(&vec![0.0; d])?;
            for _ in 0..cfg.range_points {
                let x = random_unit_lp(d, p, rng);
                worst = worst.max(a * (spec.value(&x)? - base));
                evaluations += 1;
            }
        }
    }
    Ok(Outcome {
        pass: worst <= 10.0,
        measured: worst,
        expected: 0.0,
        tolerance: 10.0,
        samples: evaluations,
        detail: "max a·(ψ(x) - ψ(0)) over random unit-ℓ_p points, a = 1/(d ln d), d in {4,8,16}, p in {2, 4/3}; pass if <= tolerance".into(),
    })
}

/// Monte-Carlo `ln E[e^{y₁}]` for `y ∝ exp(-a‖y‖_∞²)` in dimension `d`, which
/// equals `ψ(e₁) - ψ(0)` for that reference function.
pub fn linf_range_estimate<R: Rng + ?Sized>(d: usize, a: f64, samples: usize, rng: &mut R) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let ys: Vec<f64> = (0..samples)
        .map(|_| sample_linf_first_coordinate(d, a, rng))
        .collect::<Result<_>>()?;
    Ok(log_sum_exp(&ys) - (samples as f64).ln())
}

fn linf_range_growth(cfg: &DiagnosticsConfig, rng: &mut ChainRng) -> Result<Outcome> {
    let ladder = [16usize, 64, 256];
    let values: Vec<f64> = ladder
        .iter()
        .map(|&d| linf_range_estimate(d, 1.0, cfg.growth_samples, rng))
        .collect::<Result<_>>()?;
    let worst = values.windows(2).map(|w| w[1] / w[0]).fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        pass: worst >= 1.7,
        measured: worst,
        expected: 2.0,
        tolerance: 1.7,
        samples: (ladder.len() * cfg.growth_samples) as u64,
        detail: format!(
            "min ratio of successive ψ(e1) - ψ(0) estimates for ‖y‖_∞² at d = 16, 64, 256 (values {values:?}); pass if >= tolerance"
        ),
    })
}
