//! The x-side of the proximal chain: stochastic objectives, the density
//! `γ_y(x) ∝ exp(-(1 + ημ)ψ(x) + ⟨x, y⟩)` on the ℓ_p ball, a hit-and-run
//! sampler for it, and the randomized rejection loop that turns `γ_y` draws
//! into draws from `π_y(x) ∝ exp(-F(x) - (1 + ημ)ψ(x) + ⟨x, y⟩)` using only
//! value queries of random components `f_i`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{dot, lp_norm_unchecked, LpGeometry};
use crate::llt::LLTSpec;

/// A 1-Lipschitz scalar link for generalized-linear losses `f(x; s) = ℓ(⟨s, x⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// `ln(1 + e^z)`.
    Logistic,
    /// `max(0, 1 - z)`.
    Hinge,
    /// `|z|`.
    Absolute,
}

impl Link {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Link::Logistic => {
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
            Link::Hinge => (1.0 - z).max(0.0),
            Link::Absolute => z.abs(),
        }
    }

    pub fn parse(name: &str) -> Result<Link> {
        match name.to_ascii_lowercase().as_str() {
            "logistic" => Ok(Link::Logistic),
            "hinge" => Ok(Link::Hinge),
            "absolute" | "abs" => Ok(Link::Absolute),
            other => Err(Error::Config(format!("unknown link `{other}` (expected logistic, hinge or absolute)"))),
        }
    }
}

/// The component functions `f_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Family {
    /// `f_i(x) = ⟨s_i, x⟩`.
    Linear { rows: Vec<Vec<f64>> },
    /// `f_i(x) = link(⟨s_i, x⟩)`.
    Glm { rows: Vec<Vec<f64>>, link: Link },
    /// A single constant component.
    Constant { value: f64 },
}

impl Family {
    fn rows(&self) -> Option<&[Vec<f64>]> {
        match self {
            Family::Linear { rows } | Family::Glm { rows, .. } => Some(rows),
            Family::Constant { .. } => None,
        }
    }

    fn eval(&self, i: usize, x: &[f64]) -> f64 {
        match self {
            Family::Linear { rows } => dot(&rows[i], x),
            Family::Glm { rows, link } => link.eval(dot(&rows[i], x)),
            Family::Constant { value } => *value,
        }
    }
}

/// A stochastic objective `F = E_i f_i` over an ℓ_p ball, scaled by a
/// positive weight, with a shared tally of component evaluations.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    geom: LpGeometry,
    family: Arc<Family>,
    weight: f64,
    base_lipschitz: f64,
    queries: Arc<AtomicU64>,
}

impl ProblemInstance {
    pub fn new(geom: LpGeometry, family: Family) -> Result<Self> {
        let base_lipschitz = match &family {
            Family::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Domain("constant objective must be finite".into()));
                }
                0.0
            }
            Family::Linear { rows } | Family::Glm { rows, .. } => {
                if rows.is_empty() {
                    return Err(Error::Ingestion("objective needs at least one component".into()));
                }
                let mut g = 0.0f64;
                for (i, row) in rows.iter().enumerate() {
                    check_dim(geom.dim(), row.len())?;
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Ingestion(format!("component {i} has non-finite entries")));
                    }
                    // ⟨s, ·⟩ is ‖s‖_q-Lipschitz in ℓ_p, and the links are 1-Lipschitz.
                    g = g.max(lp_norm_unchecked(row, geom.q()));
                }
                g
            }
        };
        Ok(ProblemInstance {
            geom,
            family: Arc::new(family),
            weight: 1.0,
            base_lipschitz,
            queries: Arc::default(),
        })
    }

    pub fn linear(geom: LpGeometry, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(geom, Family::Linear { rows })
    }

    pub fn constant(geom: LpGeometry, value: f64) -> Result<Self> {
        Self::new(geom, Family::Constant { value })
    }

    /// The same components multiplied by `factor`, sharing the query tally.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::Domain(format!("objective weight must be positive, got {factor}")));
        }
        Ok(ProblemInstance {
            weight: self.weight * factor,
            ..self.clone()
        })
    }

    /// The objective `x ↦ F(radius·x)` on the ball of radius 1. For linear and
    /// generalized-linear families this multiplies every row by the radius.
    /// The query tally is shared.
    pub fn rescaled_to_unit_ball(&self) -> Result<Self> {
        let r = self.geom.radius();
        let family = match &*self.family {
            Family::Linear { rows } => Family::Linear {
                rows: rows.iter().map(|s| s.iter().map(|v| v * r).collect()).collect(),
            },
            Family::Glm { rows, link } => Family::Glm {
                rows: rows.iter().map(|s| s.iter().map(|v| v * r).collect()).collect(),
                link: *link,
            },
            Family::Constant { value } => Family::Constant { value: *value },
        };
        Ok(ProblemInstance {
            geom: self.geom.with_radius(1.0)?,
            family: Arc::new(family),
            weight: self.weight,
            base_lipschitz: self.base_lipschitz * r,
            queries: Arc::clone(&self.queries),
        })
    }

    pub fn geometry(&self) -> &LpGeometry {
        &self.geom
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Lipschitz constant `G` of every weighted component in ℓ_p.
    pub fn lipschitz(&self) -> f64 {
        self.weight * self.base_lipschitz
    }

    pub fn n_components(&self) -> Option<usize> {
        self.family.rows().map(|r| r.len())
    }

    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self.n_components() {
            Some(n) => rng.random_range(0..n),
            None => 0,
        }
    }

    /// `f_i(x)`, counted as one query.
    pub fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.weight * self.family.eval(i, x)
    }

    /// `F(x)` evaluated in full for reference purposes; not counted.
    pub fn mean_value(&self, x: &[f64]) -> f64 {
        let total = match self.n_components() {
            Some(n) => (0..n).map(|i| self.family.eval(i, x)).sum::<f64>() / n as f64,
            None => self.family.eval(0, x),
        };
        self.weight * total
    }

    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    /// Largest observed `|f_i(x) - f_i(x')| / ‖x - x'‖_p` over random pairs in
    /// the ball, divided by `G`. Not counted as queries.
    pub fn max_secant_ratio<R: Rng + ?Sized>(&self, pairs: usize, rng: &mut R) -> f64 {
        let g = self.lipschitz();
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let x = uniform_direction_point(&self.geom, rng);
            let x2 = uniform_direction_point(&self.geom, rng);
            let i = self.draw_index(rng);
            let diff: Vec<f64> = x.iter().zip(&x2).map(|(a, b)| a - b).collect();
            let dist = lp_norm_unchecked(&diff, self.geom.p());
            if dist == 0.0 {
                continue;
            }
            let slope = self.weight * (self.family.eval(i, &x) - self.family.eval(i, &x2)).abs() / dist;
            worst = worst.max(if g > 0.0 { slope / g } else { slope });
        }
        worst
    }
}

fn uniform_direction_point<R: Rng + ?Sized>(geom: &LpGeometry, rng: &mut R) -> Vec<f64> {
    let dir = random_direction(geom.dim(), rng);
    let n = lp_norm_unchecked(&dir, geom.p());
    let r = geom.radius() * rng.random::<f64>();
    dir.iter().map(|v| v * r / n).collect()
}

/// Controls for [`inner_loop`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerLoopConfig {
    pub delta: f64,
    pub eta: f64,
    pub mu: f64,
    pub hr_steps: usize,
    pub hr_burn: usize,
    pub max_iterations: usize,
}

pub const DEFAULT_HR_STEPS: usize = 200;
pub const DEFAULT_MAX_ITERATIONS: usize = 1000;

impl InnerLoopConfig {
    /// Checks `1/η ≥ 10⁴ G² ln(1/δ)` for the given Lipschitz constant.
    pub fn new(delta: f64, eta: f64, mu: f64, lipschitz: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain(format!("inner-loop δ must lie in (0, 1), got {delta}")));
        }
        if !(eta > 0.0) || !(mu >= 0.0) || !eta.is_finite() || !mu.is_finite() {
            return Err(Error::Domain(format!("need η > 0 and μ >= 0, got η = {eta}, μ = {mu}")));
        }
        let bound = 1e4 * lipschitz * lipschitz * (1.0 / delta).ln();
        if 1.0 / eta < bound {
            return Err(Error::Precondition(format!(
                "inner loop needs 1/η >= 1e4 G² ln(1/δ) = {bound:.6e}, got 1/η = {:.6e} (G = {lipschitz}, δ = {delta})",
                1.0 / eta
            )));
        }
        Ok(InnerLoopConfig {
            delta,
            eta,
            mu,
            hr_steps: DEFAULT_HR_STEPS,
            hr_burn: 0,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        })
    }

    pub fn with_hit_and_run(mut self, steps: usize, burn: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("hit-and-run needs at least one step".into()));
        }
        self.hr_steps = steps;
        self.hr_burn = burn;
        Ok(self)
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    /// `H = ⌈10 ln(1/δ)⌉`, reported for reference only.
    pub fn depth_horizon(&self) -> u64 {
        (10.0 * (1.0 / self.delta).ln()).ceil() as u64
    }
}

/// Unnormalized `ln γ_y(x) = -(1 + ημ)ψ(x) + ⟨x, y⟩`.
pub fn gamma_logdensity(spec: &LLTSpec, eta: f64, mu: f64, y: &[f64], x: &[f64]) -> Result<f64> {
    check_dim(spec.dim(), y.len())?;
    Ok(-(1.0 + eta * mu) * spec.value(x)? + dot(x, y))
}

fn random_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|t| t / n).collect();
        }
    }
}

const CHORD_TOL: f64 = 1e-10;
const DIRECTION_RETRIES: usize = 100;
const LINE_GRID: usize = 65;
const SCAN_GRID: usize = 17;
/// Window edges are located to `2^-12` of their bracket.
const CUT_BISECTIONS: usize = 12;
const LINE_DROP: f64 = 30.0;

/// Largest `t ≥ 0` with `x + t·u` in the ball, by bisection.
fn chord_end(geom: &LpGeometry, x: &[f64], u: &[f64]) -> f64 {
    let r = geom.radius();
    let p = geom.p();
    let mut probe = x.to_vec();
    let mut inside = |t: f64| {
        for ((pi, xi), ui) in probe.iter_mut().zip(x).zip(u) {
            *pi = xi + t * ui;
        }
        lp_norm_unchecked(&probe, p) <= r
    };
    // ‖x + tu‖ ≥ t‖u‖ - ‖x‖, so 2r/‖u‖ is outside.
    let mut hi = 2.0 * r / lp_norm_unchecked(u, p);
    let mut lo = 0.0;
    while hi - lo > CHORD_TOL * r {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The chord `[lo, hi]` of the ball through `x` along the unit vector `u`.
/// Euclidean balls solve the quadratic `‖x + tu‖² = r²`; other balls bisect.
fn chord(geom: &LpGeometry, x: &[f64], u: &[f64]) -> (f64, f64) {
    if geom.p() == 2.0 {
        let r = geom.radius();
        let b = dot(x, u);
        let c = (dot(x, x) - r * r).min(0.0);
        let root = (b * b - c).sqrt();
        // Pulled inside by the bisection tolerance, like the general path.
        let shrink = 1.0 - CHORD_TOL;
        return ((-b - root) * shrink, (-b + root) * shrink);
    }
    let neg: Vec<f64> = u.iter().map(|v| -v).collect();
    (-chord_end(geom, x, &neg), chord_end(geom, x, u))
}

/// A point on a line together with its log density.
#[derive(Clone, Copy)]
struct Node {
    t: f64,
    g: f64,
}

/// Samples a point on the segment `[lo, hi]` (which contains 0, the current
/// point) from a density proportional to `exp(g(t))` with `g` concave.
///
/// A piecewise-exponential interpolation of `g` on a grid covering the bulk of
/// the mass is used as an independence proposal, followed by a Metropolis
/// correction. The grid depends only on the segment, not on where the current
/// point sits in it (unless that point is beyond the cut-offs, a region of
/// relative density below `e^-30`), so the restricted density is invariant.
fn line_step<R, G>(lo: f64, hi: f64, g0: f64, g: &mut G, rng: &mut R) -> Result<(f64, f64)>
where
    R: Rng + ?Sized,
    G: FnMut(f64) -> Result<f64>,
{
    // Coarse scan for the maximiser, then golden-section refinement.
    let mut best = Node { t: lo, g: f64::NEG_INFINITY };
    let mut scan = Vec::with_capacity(SCAN_GRID);
    for k in 0..SCAN_GRID {
        let t = lo + (hi - lo) * k as f64 / (SCAN_GRID - 1) as f64;
        let v = g(t)?;
        scan.push(Node { t, g: v });
        if v > best.g {
            best = Node { t, g: v };
        }
    }
    let step = (hi - lo) / (SCAN_GRID - 1) as f64;
    let (mut a, mut b) = ((best.t - step).max(lo), (best.t + step).min(hi));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut gc, mut gd) = (g(c)?, g(d)?);
    // The peak only anchors the window; the Metropolis correction below
    // absorbs any error in it.
    while b - a > 1e-3 * step.max(f64::MIN_POSITIVE) {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - ratio * (b - a);
            gc = g(c)?;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + ratio * (b - a);
            gd = g(d)?;
        }
    }
    for n in [Node { t: c, g: gc }, Node { t: d, g: gd }] {
        if n.g > best.g {
            best = n;
        }
    }
    // Where the density has dropped by LINE_DROP on each side, by bisection
    // between the peak and the scan point (or segment end) beyond it.
    let floor = best.g - LINE_DROP;
    // `toward` is a scan point known to lie below the floor; without one the
    // window runs to the segment end.
    let cut = |toward: Option<f64>, end: f64, g: &mut G| -> Result<f64> {
        let Some(toward) = toward else {
            return Ok(end);
        };
        let (mut inner, mut outer) = (best.t, toward);
        for _ in 0..CUT_BISECTIONS {
            let mid = 0.5 * (inner + outer);
            if g(mid)? >= floor {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        Ok(outer)
    };
    let left_scan = scan.iter().rev().find(|n| n.t < best.t && n.g < floor).map(|n| n.t);
    let right_scan = scan.iter().find(|n| n.t > best.t && n.g < floor).map(|n| n.t);
    let left = cut(left_scan, lo, g)?.min(0.0);
    let right = cut(right_scan, hi, g)?.max(0.0);

    let mut nodes = Vec::with_capacity(LINE_GRID);
    for k in 0..LINE_GRID {
        let t = left + (right - left) * k as f64 / (LINE_GRID - 1) as f64;
        nodes.push(Node { t, g: g(t)? });
    }
    // Mass of each segment under the interpolant, relative to the peak node.
    let top = nodes.iter().fold(f64::NEG_INFINITY, |m, n| m.max(n.g));
    if !top.is_finite() {
        return Err(Error::Numerical(format!("line density has no mass on [{left}, {right}]")));
    }
    let scaled: Vec<f64> = nodes.iter().map(|n| (n.g - top).exp()).collect();
    let masses: Vec<f64> = nodes
        .windows(2)
        .zip(scaled.windows(2))
        .map(|(w, e)| {
            let h = w[1].t - w[0].t;
            let diff = (w[1].g - w[0].g).abs();
            let (big, small) = (e[0].max(e[1]), e[0].min(e[1]));
            if !diff.is_finite() || h <= 0.0 {
                0.0
            } else if diff < 1e-3 {
                // h·big·(1 - e^{-diff})/diff by its series.
                h * big * (1.0 - diff / 2.0 + diff * diff / 6.0 - diff * diff * diff / 24.0)
            } else {
                h * (big - small) / diff
            }
        })
        .collect();
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numerical(format!("line density has no mass on [{left}, {right}]")));
    }
    let interp = |t: f64| -> f64 {
        let pos = ((t - left) / (right - left) * (LINE_GRID - 1) as f64).clamp(0.0, (LINE_GRID - 1) as f64);
        let k = (pos.floor() as usize).min(LINE_GRID - 2);
        let w = pos - k as f64;
        let (l0, l1) = (nodes[k].g, nodes[k + 1].g);
        if l0 == f64::NEG_INFINITY || l1 == f64::NEG_INFINITY {
            if w == 0.0 {
                l0
            } else if w == 1.0 {
                l1
            } else {
                f64::NEG_INFINITY
            }
        } else {
            l0 + w * (l1 - l0)
        }
    };
    // Draw a segment, then a point inside it by inverting its exponential CDF.
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut seg = masses.len() - 1;
    for (k, m) in masses.iter().enumerate() {
        acc += m;
        if u < acc {
            seg = k;
            break;
        }
    }
    let (n0, n1) = (nodes[seg], nodes[seg + 1]);
    let h = n1.t - n0.t;
    let v: f64 = rng.random();
    let slope = (n1.g - n0.g) / h;
    let t_new = if !slope.is_finite() {
        if n1.g > n0.g {
            n1.t
        } else {
            n0.t
        }
    } else if (slope * h).abs() < 1e-10 {
        n0.t + v * h
    } else if slope > 0.0 {
        // Invert from the right end to avoid overflow.
        n1.t + (v + (1.0 - v) * (-slope * h).exp()).ln() / slope
    } else {
        n0.t + (1.0 - v + v * (slope * h).exp()).ln() / slope
    };
    let t_new = t_new.clamp(n0.t, n1.t);
    let g_new = g(t_new)?;
    let log_accept = (g_new - interp(t_new)) - (g0 - interp(0.0));
    if log_accept >= 0.0 || rng.random::<f64>().ln() < log_accept {
        Ok((t_new, g_new))
    } else {
        Ok((0.0, g0))
    }
}

/// One hit-and-run step for the density `exp(log_density)` restricted to the
/// ball. `current` is `log_density(x)`; returns the new log density.
pub fn hit_and_run_step<R, F>(
    geom: &LpGeometry,
    x: &mut [f64],
    current: f64,
    log_density: &mut F,
    rng: &mut R,
) -> Result<f64>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = x.len();
    for _ in 0..DIRECTION_RETRIES {
        let u = random_direction(d, rng);
        let (lo, hi) = chord(geom, x, &u);
        if hi - lo <= CHORD_TOL * geom.radius() {
            continue;
        }
        let base = x.to_vec();
        let mut probe = vec![0.0; d];
        let mut along = |t: f64| -> Result<f64> {
            for ((pi, bi), ui) in probe.iter_mut().zip(&base).zip(&u) {
                *pi = bi + t * ui;
            }
            log_density(&probe)
        };
        let (t, g) = line_step(lo, hi, current, &mut along, rng)?;
        for (xi, ui) in x.iter_mut().zip(&u) {
            *xi += t * ui;
        }
        return Ok(g);
    }
    Err(Error::Numerical(format!(
        "hit-and-run found only degenerate chords after {DIRECTION_RETRIES} directions at {x:?}"
    )))
}

/// Runs `burn + steps` hit-and-run steps from `start` and returns the final
/// point.
pub fn hit_and_run<R, F>(
    geom: &LpGeometry,
    start: &[f64],
    steps: usize,
    mut log_density: F,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<f64>,
{
    check_dim(geom.dim(), start.len())?;
    if !geom.contains(start)? {
        return Err(Error::Domain("hit-and-run start point lies outside the domain".into()));
    }
    let mut x = start.to_vec();
    let mut g = log_density(&x)?;
    for _ in 0..steps {
        g = hit_and_run_step(geom, &mut x, g, &mut log_density, rng)?;
    }
    Ok(x)
}

/// Approximate draw from `γ_y` on the ball by hit-and-run from the origin.
pub fn sample_gamma<R: Rng + ?Sized>(
    spec: &LLTSpec,
    eta: f64,
    mu: f64,
    y: &[f64],
    cfg: &InnerLoopConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dim(spec.dim(), y.len())?;
    let start = vec![0.0; spec.dim()];
    let weight = 1.0 + eta * mu;
    hit_and_run(
        spec.geometry(),
        &start,
        cfg.hr_burn + cfg.hr_steps,
        |x| Ok(-weight * spec.value(x)? + dot(x, y)),
        rng,
    )
}

/// Draws `a ≥ 1` with `Pr[a ≥ b] = 1/b!`.
pub fn sample_depth<R: Rng + ?Sized>(rng: &mut R) -> u32 {
    // u in (0, 1]; a = max{b : u ≤ 1/b!}.
    let u = 1.0 - rng.random::<f64>();
    let mut b = 1u32;
    let mut tail = 1.0; // 1/b!
    loop {
        let next = tail / (b + 1) as f64;
        if u <= next {
            b += 1;
            tail = next;
        } else {
            return b;
        }
    }
}

/// The estimator `ρ = 1 + Σ_{b=1}^{a} Π_{i≤b} (f_{j_{i,b}}(x₂) - f_{j_{i,b}}(x₁))`
/// with a fresh depth `a` and fresh indices, whose conditional mean is
/// `exp(F(x₂) - F(x₁))`.
pub fn rho_estimate<R: Rng + ?Sized>(instance: &ProblemInstance, x1: &[f64], x2: &[f64], rng: &mut R) -> f64 {
    let depth = sample_depth(rng);
    let mut rho = 1.0;
    for b in 1..=depth {
        let mut prod = 1.0;
        for _ in 0..b {
            let j = instance.draw_index(rng);
            prod *= instance.value(j, x2) - instance.value(j, x1);
        }
        rho += prod;
    }
    rho
}

/// The acceptance rule `u ≤ ρ/2`.
pub fn accepts(u: f64, rho: f64) -> bool {
    u <= rho / 2.0
}

/// Result of one [`inner_loop`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
}

/// Approximate draw from `π_y` by randomized rejection from `γ_y`.
pub fn inner_loop<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    spec: &LLTSpec,
    cfg: &InnerLoopConfig,
    y: &[f64],
    rng: &mut R,
) -> Result<InnerOutcome> {
    check_dim(instance.geometry().dim(), spec.dim())?;
    for iteration in 1..=cfg.max_iterations {
        let x1 = sample_gamma(spec, cfg.eta, cfg.mu, y, cfg, rng)?;
        let x2 = sample_gamma(spec, cfg.eta, cfg.mu, y, cfg, rng)?;
        let u: f64 = rng.random();
        let rho = rho_estimate(instance, &x1, &x2, rng);
        if accepts(u, rho) {
            return Ok(InnerOutcome { x: x1, iterations: iteration });
        }
    }
    Err(Error::Numerical(format!(
        "inner loop made no acceptance in {} iterations; the η precondition is likely violated (η = {}, G = {})",
        cfg.max_iterations,
        cfg.eta,
        instance.lipschitz()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn ball(d: usize, r: f64) -> LpGeometry {
        LpGeometry::new(d, 2.0, r).unwrap()
    }

    #[test]
    fn depth_law_basics() {
        let mut rng = seeded(1);
        let n = 200_000;
        let draws: Vec<u32> = (0..n).map(|_| sample_depth(&mut rng)).collect();
        assert!(draws.iter().all(|&a| a >= 1));
        let ge3 = draws.iter().filter(|&&a| a >= 3).count() as f64 / n as f64;
        assert!((ge3 - 1.0 / 6.0).abs() < 0.005);
    }

    #[test]
    fn truncation_is_equivalent() {
        let mut rng = seeded(2);
        for &rho in &[-1.0f64, 0.5, 3.0] {
            for _ in 0..1000 {
                let u: f64 = rng.random();
                let clipped = rho.clamp(0.0, 2.0);
                assert_eq!(accepts(u, rho), u <= clipped / 2.0);
            }
        }
    }

    #[test]
    fn gamma_density_closed_form() {
        let geom = ball(2, 1.0);
        let spec = LLTSpec::new(geom, 0.5).unwrap();
        let (eta, mu) = (0.1, 2.0);
        let x = [0.2, -0.4];
        let y = [1.0, 3.0];
        let psi = 0.2 / 2.0 + (std::f64::consts::PI / 0.5).ln();
        let want = -(1.0 + eta * mu) * psi + (0.2 - 1.2);
        assert!((gamma_logdensity(&spec, eta, mu, &y, &x).unwrap() - want).abs() < 1e-12);
        let at_zero = gamma_logdensity(&spec, eta, mu, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((at_zero + (1.0 + eta * mu) * spec.value(&[0.0, 0.0]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn precondition_is_enforced() {
        assert!(InnerLoopConfig::new(0.01, 1e-3, 1.0, 1.0).is_err());
        assert!(InnerLoopConfig::new(0.01, 1e-6, 1.0, 1.0).is_ok());
        assert!(InnerLoopConfig::new(0.01, 1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn chord_reaches_the_boundary() {
        let geom = LpGeometry::new(3, 1.5, 2.0).unwrap();
        let x = [0.3, -0.2, 0.1];
        let u = [0.6, 0.0, 0.8];
        let t = chord_end(&geom, &x, &u);
        let end: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b).collect();
        assert!((lp_norm_unchecked(&end, 1.5) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn hit_and_run_gaussian_variance() {
        let geom = ball(2, 5.0);
        let spec = LLTSpec::new(geom, 0.5).unwrap();
        let cfg = InnerLoopConfig::new(0.5, 1e-9, 1.0, 0.0).unwrap().with_hit_and_run(20, 0).unwrap();
        let mut rng = seeded(3);
        let n = 4000;
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let x = sample_gamma(&spec, cfg.eta, cfg.mu, &[0.0, 0.0], &cfg, &mut rng).unwrap();
            sq[0] += x[0] * x[0];
            sq[1] += x[1] * x[1];
        }
        // γ_0 ∝ exp(-‖x‖²/2) up to the negligible ημ factor.
        for s in sq {
            let v = s / n as f64;
            assert!((v - 1.0).abs() < 0.1, "variance {v}");
        }
    }

    #[test]
    fn constant_objective_accepts_half_the_time() {
        let geom = ball(1, 1.0);
        let inst = ProblemInstance::constant(geom, 3.0).unwrap();
        let mut rng = seeded(4);
        let n = 100_000;
        let acc = (0..n)
            .filter(|_| {
                let rho = rho_estimate(&inst, &[0.1], &[0.5], &mut rng);
                assert_eq!(rho, 1.0);
                accepts(rng.random(), rho)
            })
            .count() as f64
            / n as f64;
        assert!((acc - 0.5).abs() < 0.01);
    }

    #[test]
    fn queries_are_counted_once_per_evaluation() {
        let geom = ball(2, 1.0);
        let inst = ProblemInstance::linear(geom, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let shared = inst.scaled(2.0).unwrap();
        inst.value(0, &[0.5, 0.5]);
        assert_eq!(shared.value(1, &[0.5, 0.5]), 1.0);
        inst.mean_value(&[0.1, 0.1]);
        assert_eq!(inst.query_count(), 2);
        assert_eq!(shared.lipschitz(), 2.0);
    }

    #[test]
    fn secant_slopes_respect_lipschitz_bound() {
        let geom = LpGeometry::new(3, 1.25, 1.0).unwrap();
        let mut rng = seeded(6);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        for family in [
            Family::Linear { rows: rows.clone() },
            Family::Glm { rows: rows.clone(), link: Link::Logistic },
            Family::Glm { rows, link: Link::Hinge },
        ] {
            let inst = ProblemInstance::new(geom, family).unwrap();
            assert!(inst.max_secant_ratio(2000, &mut rng) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn rescaling_multiplies_rows() {
        let geom = LpGeometry::new(2, 2.0, 3.0).unwrap();
        let inst = ProblemInstance::linear(geom, vec![vec![1.0, 2.0]]).unwrap();
        let unit = inst.rescaled_to_unit_ball().unwrap();
        assert_eq!(unit.geometry().radius(), 1.0);
        assert!((unit.mean_value(&[0.1, 0.2]) - inst.mean_value(&[0.3, 0.6])).abs() < 1e-15);
        assert!((unit.lipschitz() - 3.0 * inst.lipschitz()).abs() < 1e-12);
    }
}
