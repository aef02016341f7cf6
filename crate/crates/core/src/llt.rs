//! The log-Laplace transform `ψ(x) = ln ∫ exp(⟨x, y⟩ - a‖y‖_q²) dy` of the
//! regularizer `φ(y) = a‖y‖_q²`, its induced densities
//! `D_x(y) ∝ exp(⟨x, y⟩ - φ(y))`, and Monte-Carlo cumulant estimates.
//!
//! For `q > 2` the integral is reduced to one dimension per coordinate with
//! the mixing identity
//! `exp(-a‖y‖_q²) = ∫_0^∞ exp(-λ a^{q/2} ‖y‖_q^q) μ_{2/q}(λ) dλ`,
//! where `μ_c` is the stable-count law of [`crate::stable`].

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::LpGeometry;
use crate::kernel::{kernel_table, KernelTable};
use crate::quad::{log_add_exp, log_integrate, log_sum_exp};
use crate::stable::StableCountLaw;

/// Quadrature controls for [`LLTSpec::value`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Relative tolerance of the λ-mixture (successive lattice refinements).
    pub rel_tol: f64,
    /// Relative tolerance of each one-dimensional integral on the forced
    /// quadrature path for `q = 2`. Larger `q` uses a shared interpolation
    /// table accurate to about `1e-11` relative.
    pub one_dim_rel_tol: f64,
    /// The integration range stops where the log-integrand has dropped this
    /// far below its peak.
    pub tail_drop: f64,
    /// Coarsest lattice spacing in `ln λ` is `2^-min_level`.
    pub min_level: u32,
    /// Finest lattice spacing in `ln λ` is `2^-max_level`.
    pub max_level: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rel_tol: 1e-8,
            one_dim_rel_tol: 1e-13,
            tail_drop: 40.0,
            min_level: 2,
            max_level: 10,
        }
    }
}

const VALUE_CACHE_CAPACITY: usize = 1 << 16;

#[derive(Debug, Default)]
struct Caches {
    values: HashMap<Vec<u64>, f64>,
    // ln μ_c at lattice nodes, keyed by the node's index on the finest lattice.
    mixing: HashMap<i64, f64>,
    tables: Vec<(Vec<u64>, Arc<LambdaTable>)>,
    envelope_violations: u64,
}

const TABLE_CACHE_CAPACITY: usize = 8;
/// Largest per-cell interpolation margin accepted in a λ sampling table.
const SAMPLING_MARGIN: f64 = 0.05;
/// Cells whose log-integrand is this far below the peak are not refined for
/// sampling; their mass is below `e^-20` of the total.
const SAMPLING_WINDOW: f64 = 20.0;

#[derive(Debug)]
struct Lattice {
    lo_u: f64,
    spacing: f64,
    values: Vec<f64>,
    // |g(mid) - chord| at nodes added by the last halving, zero elsewhere.
    discrepancy: Vec<f64>,
    estimate: f64,
    groups: Vec<(f64, f64)>,
}

/// Per-cell margin for the piecewise-linear interpolant of the log integrand.
/// The discrepancy of a midpoint against the chord of the coarser cell is
/// about four times the interpolation error of each half, and the largest
/// discrepancy among neighbouring cells is used to absorb curvature changes.
fn cell_margins(values: &[f64], discrepancy: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n.saturating_sub(1))
        .map(|j| {
            let from = j.saturating_sub(1);
            let to = (j + 2).min(n - 1);
            let local = discrepancy[from..=to].iter().fold(0.0f64, |m, v| m.max(*v));
            local + 1e-12 * values[j].abs().max(values[j + 1].abs()).min(1e6)
        })
        .collect()
}

/// Piecewise-exponential envelope for `ln λ | x` with cell margins.
#[derive(Debug)]
struct LambdaTable {
    lo_u: f64,
    spacing: f64,
    values: Vec<f64>,
    margins: Vec<f64>,
    cumulative: Vec<f64>,
    groups: Vec<(f64, f64)>,
}

impl LambdaTable {
    fn new(lattice: Lattice) -> Self {
        let margins = cell_margins(&lattice.values, &lattice.discrepancy);
        let v = &lattice.values;
        let ln_mass: Vec<f64> = (0..margins.len())
            .map(|j| {
                let (g0, g1) = (v[j], v[j + 1]);
                if !g0.is_finite() || !g1.is_finite() {
                    return f64::NEG_INFINITY;
                }
                let delta = g1 - g0;
                // ln ∫_0^1 e^{δs} ds
                let shape = if delta.abs() < 1e-10 {
                    0.0
                } else if delta > 0.0 {
                    delta + (-(-delta).exp_m1() / delta).ln()
                } else {
                    (delta.exp_m1() / delta).ln()
                };
                g0 + shape + margins[j]
            })
            .collect();
        let top = ln_mass.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mut acc = 0.0;
        let cumulative = ln_mass
            .iter()
            .map(|l| {
                acc += (l - top).exp();
                acc
            })
            .collect();
        LambdaTable {
            lo_u: lattice.lo_u,
            spacing: lattice.spacing,
            values: lattice.values,
            margins,
            cumulative,
            groups: lattice.groups,
        }
    }

    /// A draw `u` from the envelope, with the envelope's log height at `u`
    /// and the cell margin.
    fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64, f64) {
        let total = *self.cumulative.last().expect("lattice has at least one cell");
        let target = rng.random::<f64>() * total;
        let j = self.cumulative.partition_point(|c| *c <= target).min(self.cumulative.len() - 1);
        let (g0, g1) = (self.values[j], self.values[j + 1]);
        let delta = g1 - g0;
        let w: f64 = rng.random();
        let s = if delta.abs() < 1e-10 {
            w
        } else {
            (w * delta.exp_m1()).ln_1p() / delta
        };
        let s = s.clamp(0.0, 1.0);
        let u = self.lo_u + self.spacing * (j as f64 + s);
        (u, g0 + s * delta + self.margins[j], self.margins[j])
    }
}

/// `(|x_i|, multiplicity)` pairs; `I(θ) = I(-θ)`, so equal magnitudes share
/// one integral.
fn group_magnitudes(x: &[f64]) -> Vec<(f64, f64)> {
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    for m in mags {
        match groups.last_mut() {
            Some((v, count)) if *v == m => *count += 1.0,
            _ => groups.push((m, 1.0)),
        }
    }
    groups
}

/// The regularizer `φ(y) = a‖y‖_q²` on `R^d` together with the machinery to
/// evaluate its log-Laplace transform and sample its induced densities.
///
/// Clones share one evaluation cache.
#[derive(Debug, Clone)]
pub struct LLTSpec {
    geom: LpGeometry,
    q: f64,
    a: f64,
    law: Option<StableCountLaw>,
    kernel: Option<Arc<KernelTable>>,
    quad: QuadConfig,
    force_quadrature: bool,
    /// `(d/2) ln(π/a)`, the additive constant of the Gaussian closed form.
    gaussian_offset: f64,
    caches: Arc<Mutex<Caches>>,
}

impl LLTSpec {
    /// Builds the transform for the dual exponent of `geom`. A geometry with
    /// `p = 1` uses its effective exponent, since `q = ∞` has no mixing form.
    pub fn new(geom: LpGeometry, a: f64) -> Result<Self> {
        Self::with_quad(geom, a, QuadConfig::default())
    }

    pub fn with_quad(geom: LpGeometry, a: f64, quad: QuadConfig) -> Result<Self> {
        let q = if geom.q().is_finite() { geom.q() } else { geom.effective_q() };
        Self::with_exponent(geom, q, a, quad)
    }

    /// Builds `φ(y) = a‖y‖_q²` with an explicit finite `q ≥ 2`, independent of
    /// the domain's own exponent.
    pub fn with_exponent(geom: LpGeometry, q: f64, a: f64, quad: QuadConfig) -> Result<Self> {
        if !(q >= 2.0) || !q.is_finite() {
            return Err(Error::Domain(format!("LLT exponent q must be finite and at least 2, got {q}")));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Domain(format!("LLT scale a must be positive, got {a}")));
        }
        if !(quad.rel_tol > 0.0) || !(quad.one_dim_rel_tol > 0.0) || !(quad.tail_drop > 0.0) {
            return Err(Error::Config("quadrature tolerances must be positive".into()));
        }
        if quad.min_level > quad.max_level || quad.max_level > 30 {
            return Err(Error::Config(format!(
                "quadrature levels must satisfy min_level <= max_level <= 30, got {} and {}",
                quad.min_level, quad.max_level
            )));
        }
        let (law, kernel) = if q > 2.0 {
            (Some(StableCountLaw::for_dual_exponent(q)?), Some(kernel_table(q)?))
        } else {
            (None, None)
        };
        Ok(LLTSpec {
            geom,
            q,
            a,
            law,
            kernel,
            quad,
            force_quadrature: false,
            gaussian_offset: 0.5 * geom.dim() as f64 * (std::f64::consts::PI / a).ln(),
            caches: Arc::default(),
        })
    }

    /// Routes `q = 2` through the same quadrature as general `q` instead of
    /// the closed form. Used to cross-check the numerical path.
    pub fn forcing_quadrature(mut self, force: bool) -> Self {
        self.force_quadrature = force;
        self.caches = Arc::default();
        self
    }

    pub fn geometry(&self) -> &LpGeometry {
        &self.geom
    }

    pub fn dim(&self) -> usize {
        self.geom.dim()
    }

    /// The dual exponent actually used by `φ`.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn quad(&self) -> &QuadConfig {
        &self.quad
    }

    pub fn is_gaussian(&self) -> bool {
        self.q == 2.0
    }

    /// `φ(y) = a‖y‖_q²`.
    pub fn phi(&self, y: &[f64]) -> f64 {
        let n = crate::geometry::lp_norm_unchecked(y, self.q);
        self.a * n * n
    }

    /// `ψ(x)`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("LLT argument has non-finite entries".into()));
        }
        if self.is_gaussian() && !self.force_quadrature {
            let sq: f64 = x.iter().map(|v| v * v).sum();
            return Ok(sq / (4.0 * self.a) + self.gaussian_offset);
        }
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(&v) = self.caches.lock().values.get(&key) {
            return Ok(v);
        }
        let v = if self.is_gaussian() {
            let mut total = 0.0;
            for &xi in x {
                total += ln_one_dim_integral(xi, self.a, 2.0, self.quad.one_dim_rel_tol)?;
            }
            total
        } else {
            self.mixture_value(x)?
        };
        let mut caches = self.caches.lock();
        if caches.values.len() >= VALUE_CACHE_CAPACITY {
            caches.values.clear();
        }
        caches.values.insert(key, v);
        Ok(v)
    }

    /// Central finite-difference gradient of [`LLTSpec::value`] with step
    /// `1e-5 · max(1, ‖x‖_∞)`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let h = 1e-5 * scale;
        let mut probe = x.to_vec();
        let mut grad = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            probe[i] = x[i] + h;
            let up = self.value(&probe)?;
            probe[i] = x[i] - h;
            let down = self.value(&probe)?;
            probe[i] = x[i];
            grad.push((up - down) / (2.0 * h));
        }
        Ok(grad)
    }

    /// One exact draw from `D_x(y) ∝ exp(⟨x, y⟩ - φ(y))`.
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        if self.is_gaussian() {
            let sd = (0.5 / self.a).sqrt();
            return Ok(x
                .iter()
                .map(|&xi| {
                    let z: f64 = StandardNormal.sample(rng);
                    xi / (2.0 * self.a) + sd * z
                })
                .collect());
        }
        // λ is drawn from its conditional given x, not from μ_c itself: the
        // weight Π_i I(x_i, λ a^{q/2}) of each λ depends on x.
        let lambda = self.sample_log_lambda(x, rng)?.exp();
        let coef = lambda * self.a.powf(0.5 * self.q);
        x.iter()
            .map(|&xi| {
                sample_one_dim(xi, coef, self.q, rng).map_err(|e| {
                    Error::Numerical(format!(
                        "{e} (q = {}, a = {}, λ = {lambda}, θ = {xi}, d = {})",
                        self.q,
                        self.a,
                        self.dim()
                    ))
                })
            })
            .collect()
    }

    /// Monte-Carlo estimates of the mean, covariance and third directional
    /// moment of `D_x` from `n` draws.
    pub fn cumulants<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        h: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<CumulantEstimate> {
        check_dim(self.dim(), h.len())?;
        if n < 100 {
            return Err(Error::Domain(format!("cumulant estimates need at least 100 draws, got {n}")));
        }
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            draws.push(self.sample(x, rng)?);
        }
        Ok(CumulantEstimate::from_draws(&draws, h))
    }

    /// `ln ∫_0^∞ μ_c(λ) Π_i I(x_i, λ a^{q/2}) dλ` by the trapezoid rule on a
    /// lattice in `u = ln λ`, refined by halving until successive levels agree.
    fn mixture_value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.lattice(x, None)?.estimate)
    }

    /// The integrand of [`LLTSpec::mixture_value`] in `u = ln λ` at an
    /// arbitrary point.
    fn ln_mixture_integrand(&self, groups: &[(f64, f64)], u: f64) -> Result<f64> {
        let law = self.law.as_ref().expect("q > 2 carries a mixing law");
        let ln_mu = law.ln_density(u.exp())?;
        if ln_mu == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let coef = u.exp() * self.a.powf(0.5 * self.q);
        let kernel = self.kernel.as_ref().expect("q > 2 carries a kernel table");
        let mut total = ln_mu + u;
        for &(theta, count) in groups {
            total += count * kernel.ln_integral(theta, coef);
        }
        Ok(total)
    }

    /// Tabulates the mixture integrand on the lattice. With `margin_target`
    /// set, refinement continues until the interpolation margin of every cell
    /// within `SAMPLING_WINDOW` of the peak is below the target.
    fn lattice(&self, x: &[f64], margin_target: Option<f64>) -> Result<Lattice> {
        let groups = group_magnitudes(x);
        let finest = self.quad.max_level;
        let a_pow = self.a.powf(0.5 * self.q);
        let integrand = |node: i64| -> Result<f64> {
            let u = node as f64 / (1u64 << finest) as f64;
            let ln_mu = self.ln_mixing_density(node, u)?;
            if ln_mu == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            let coef = u.exp() * a_pow;
            let kernel = self.kernel.as_ref().expect("q > 2 carries a kernel table");
            let mut total = ln_mu + u;
            for &(theta, count) in &groups {
                total += count * kernel.ln_integral(theta, coef);
            }
            Ok(total)
        };

        // Walk uphill to the peak, first in strides of eight units and then on
        // the unit lattice, then outwards until the integrand has dropped by
        // `tail_drop` on both sides.
        let unit = 1i64 << finest;
        let mut peak = 0i64;
        let mut peak_val = integrand(0)?;
        for stride in [8 * unit, unit] {
            for dir in [1i64, -1] {
                let mut steps = 0;
                loop {
                    let v = integrand(peak + dir * stride)?;
                    if v > peak_val {
                        peak += dir * stride;
                        peak_val = v;
                        steps += 1;
                        if steps > 2000 {
                            return Err(Error::Numerical("λ-mixture peak search did not terminate".into()));
                        }
                    } else {
                        break;
                    }
                }
            }
        }
        if !peak_val.is_finite() {
            return Err(Error::Numerical(format!("λ-mixture integrand is {peak_val} at its peak")));
        }
        let floor = peak_val - self.quad.tail_drop;
        let mut ends = [peak, peak];
        for (k, dir) in [-1i64, 1].into_iter().enumerate() {
            let mut steps = 0;
            while integrand(ends[k])? > floor {
                ends[k] += dir * unit;
                steps += 1;
                if steps > 4000 {
                    return Err(Error::Numerical("λ-mixture range search did not terminate".into()));
                }
            }
        }
        let (lo, hi) = (ends[0], ends[1]);

        let mut level = 0u32;
        let mut stride = unit;
        let mut values = Vec::new();
        let mut node = lo;
        while node <= hi {
            values.push(integrand(node)?);
            node += stride;
        }
        let mut discrepancy = vec![0.0; values.len()];
        let mut estimate = log_sum_exp(&values);
        let mut converged = false;
        loop {
            if converged {
                let Some(target) = margin_target else { break };
                let window = peak_val - SAMPLING_WINDOW;
                let worst = cell_margins(&values, &discrepancy)
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| values[*j].max(values[*j + 1]) > window)
                    .fold(0.0f64, |m, (_, e)| m.max(*e));
                if level > 0 && worst <= target {
                    break;
                }
            }
            if level == finest {
                return Err(Error::Numerical(format!(
                    "λ-mixture did not reach relative tolerance {:e} at lattice spacing 2^-{finest}",
                    self.quad.rel_tol
                )));
            }
            level += 1;
            stride /= 2;
            let mut fresh = Vec::with_capacity(values.len() - 1);
            let mut node = lo + stride;
            while node < hi {
                fresh.push(integrand(node)?);
                node += 2 * stride;
            }
            // Trapezoid sum at the halved spacing; the tails are negligible.
            let refined = log_add_exp(estimate - std::f64::consts::LN_2, log_sum_exp(&fresh) - level as f64 * std::f64::consts::LN_2);
            let change = (refined - estimate).abs();
            estimate = refined;
            let mut merged = Vec::with_capacity(values.len() + fresh.len());
            let mut merged_disc = Vec::with_capacity(values.len() + fresh.len());
            for (i, &f) in fresh.iter().enumerate() {
                merged.push(values[i]);
                merged_disc.push(0.0);
                let chord = 0.5 * (values[i] + values[i + 1]);
                merged.push(f);
                merged_disc.push(if chord.is_finite() && f.is_finite() { (f - chord).abs() } else { 0.0 });
            }
            merged.push(values[values.len() - 1]);
            merged_disc.push(0.0);
            values = merged;
            discrepancy = merged_disc;
            if level >= self.quad.min_level && change <= self.quad.rel_tol {
                converged = true;
            }
        }
        Ok(Lattice {
            lo_u: lo as f64 / unit as f64,
            spacing: stride as f64 / unit as f64,
            values,
            discrepancy,
            estimate,
            groups,
        })
    }

    /// The sampling table for `λ | x`, from a small per-spec cache.
    fn lambda_table(&self, x: &[f64]) -> Result<Arc<LambdaTable>> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some((_, t)) = self.caches.lock().tables.iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(LambdaTable::new(self.lattice(x, Some(SAMPLING_MARGIN))?));
        let mut caches = self.caches.lock();
        if caches.tables.len() >= TABLE_CACHE_CAPACITY {
            caches.tables.remove(0);
        }
        caches.tables.push((key, Arc::clone(&table)));
        Ok(table)
    }

    /// Draws `ln λ` from its conditional law given `x`,
    /// `∝ μ_c(λ) Π_i I(x_i, λ a^{q/2})`.
    fn sample_log_lambda<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        let table = self.lambda_table(x)?;
        for _ in 0..10_000 {
            let (u, upper, margin) = table.propose(rng);
            let v: f64 = rng.random::<f64>().ln();
            // Squeeze: the integrand is at least `upper - 2·margin`.
            if v <= -2.0 * margin {
                return Ok(u);
            }
            let exact = self.ln_mixture_integrand(&table.groups, u)?;
            if exact > upper {
                self.caches.lock().envelope_violations += 1;
            }
            if v <= exact - upper {
                return Ok(u);
            }
        }
        Err(Error::Numerical("λ rejection sampler exhausted its retry budget".into()))
    }

    /// Number of times the tabulated λ envelope was observed below the exact
    /// integrand. Each occurrence biases one draw slightly; a nonzero count
    /// means the interpolation margins are too tight.
    pub fn envelope_violations(&self) -> u64 {
        self.caches.lock().envelope_violations
    }

    fn ln_mixing_density(&self, node: i64, u: f64) -> Result<f64> {
        if let Some(&v) = self.caches.lock().mixing.get(&node) {
            return Ok(v);
        }
        let law = self.law.as_ref().expect("q > 2 carries a mixing law");
        let v = law.ln_density(u.exp())?;
        self.caches.lock().mixing.insert(node, v);
        Ok(v)
    }
}

/// `ψ(x)` for `spec`.
pub fn llt_value(spec: &LLTSpec, x: &[f64]) -> Result<f64> {
    spec.value(x)
}

/// Reference gradient of `ψ` by central finite differences.
pub fn llt_gradient(spec: &LLTSpec, x: &[f64]) -> Result<Vec<f64>> {
    spec.gradient(x)
}

/// Exact draw from `D_x`.
pub fn sample_pix<R: Rng + ?Sized>(spec: &LLTSpec, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    spec.sample(x, rng)
}

/// Monte-Carlo cumulants of `D_x` in direction `h`.
pub fn cumulant_mc<R: Rng + ?Sized>(
    spec: &LLTSpec,
    x: &[f64],
    h: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<CumulantEstimate> {
    spec.cumulants(x, h, n, rng)
}

/// Sample moments of draws from `D_x`, with standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CumulantEstimate {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Third central moment of `⟨h, Y⟩`, estimating `∇³ψ(x)[h, h, h]`.
    pub third_directional: f64,
    /// Second central moment of `⟨h, Y⟩`, estimating `hᵀ∇²ψ(x)h`.
    pub directional_variance: f64,
    pub sample_count: usize,
    pub mean_se: Vec<f64>,
    pub covariance_se: Vec<Vec<f64>>,
    pub third_directional_se: f64,
    pub directional_variance_se: f64,
}

impl CumulantEstimate {
    pub fn from_draws(draws: &[Vec<f64>], h: &[f64]) -> Self {
        let n = draws.len();
        let d = h.len();
        let nf = n as f64;
        let mut mean = vec![0.0; d];
        for y in draws {
            for (m, v) in mean.iter_mut().zip(y) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);

        let mut cov = vec![vec![0.0; d]; d];
        let mut cov_sq = vec![vec![0.0; d]; d];
        let (mut m2, mut m2_sq, mut m3, mut m3_sq) = (0.0, 0.0, 0.0, 0.0);
        let mut centered = vec![0.0; d];
        for y in draws {
            for i in 0..d {
                centered[i] = y[i] - mean[i];
            }
            for i in 0..d {
                for j in i..d {
                    let p = centered[i] * centered[j];
                    cov[i][j] += p;
                    cov_sq[i][j] += p * p;
                }
            }
            let t: f64 = centered.iter().zip(h).map(|(c, hi)| c * hi).sum();
            let t2 = t * t;
            m2 += t2;
            m2_sq += t2 * t2;
            m3 += t2 * t;
            m3_sq += t2 * t2 * t2;
        }
        let se = |sum: f64, sum_sq: f64| -> f64 {
            let m = sum / nf;
            ((sum_sq / nf - m * m).max(0.0) / (nf - 1.0)).sqrt()
        };
        let mut covariance_se = vec![vec![0.0; d]; d];
        let mut mean_se = vec![0.0; d];
        for i in 0..d {
            for j in i..d {
                let s = se(cov[i][j], cov_sq[i][j]);
                covariance_se[i][j] = s;
                covariance_se[j][i] = s;
                let c = cov[i][j] / (nf - 1.0);
                cov[i][j] = c;
                cov[j][i] = c;
            }
            mean_se[i] = (cov[i][i] / nf).sqrt();
        }
        CumulantEstimate {
            mean,
            covariance: cov,
            third_directional: m3 / nf,
            directional_variance: m2 / nf,
            sample_count: n,
            mean_se,
            covariance_se,
            third_directional_se: se(m3, m3_sq),
            directional_variance_se: se(m2, m2_sq),
        }
    }
}

/// `h(t) = θt - coef|t|^q`.
#[inline]
fn log_kernel(theta: f64, coef: f64, q: f64, t: f64) -> f64 {
    theta * t - coef * t.abs().powf(q)
}

#[inline]
fn log_kernel_slope(theta: f64, coef: f64, q: f64, t: f64) -> f64 {
    theta - coef * q * t.abs().powf(q - 1.0) * t.signum()
}

/// The maximiser of `θt - coef|t|^q`.
fn kernel_mode(theta: f64, coef: f64, q: f64) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    theta.signum() * (theta.abs() / (coef * q)).powf(1.0 / (q - 1.0))
}

/// Distance `δ > 0` from the mode `m` in direction `dir` at which the log
/// kernel has dropped by `drop` below its peak.
fn drop_distance(theta: f64, coef: f64, q: f64, m: f64, dir: f64, drop: f64) -> Result<f64> {
    let top = log_kernel(theta, coef, q, m);
    let phi = |delta: f64| top - log_kernel(theta, coef, q, m + dir * delta) - drop;
    // Start from the curvature-free scale coef^{-1/q} and the local scale.
    let mut delta = coef.powf(-1.0 / q).max(f64::MIN_POSITIVE);
    let mut guard = 0;
    while phi(delta) <= 0.0 {
        delta *= 2.0;
        guard += 1;
        if guard > 2100 || !delta.is_finite() {
            return Err(Error::Numerical("envelope construction failed: density is numerically flat".into()));
        }
    }
    // φ is convex and increasing in δ, so Newton from the right converges
    // monotonically.
    for _ in 0..200 {
        let f = phi(delta);
        let slope = -dir * log_kernel_slope(theta, coef, q, m + dir * delta);
        if !(slope > 0.0) {
            break;
        }
        let next = delta - f / slope;
        if !(next > 0.0) || (delta - next).abs() <= 1e-14 * delta {
            delta = next.max(delta * 0.5);
            break;
        }
        delta = next;
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Numerical("envelope construction failed: no tangent point".into()));
    }
    Ok(delta)
}

/// `ln ∫ exp(θt - coef|t|^q) dt` by adaptive log-space quadrature between
/// points where the integrand has fallen by `e^-46` from its mode.
pub fn ln_one_dim_integral(theta: f64, coef: f64, q: f64, rel_tol: f64) -> Result<f64> {
    if !(coef > 0.0) || !coef.is_finite() || !theta.is_finite() {
        return Err(Error::Domain(format!("one-dimensional integral needs coef > 0 and finite θ, got coef = {coef}, θ = {theta}")));
    }
    if !(q >= 2.0) || !q.is_finite() {
        return Err(Error::Domain(format!("one-dimensional integral needs finite q >= 2, got {q}")));
    }
    let m = kernel_mode(theta, coef, q);
    let top = log_kernel(theta, coef, q, m);
    let left = m - drop_distance(theta, coef, q, m, -1.0, 46.0)?;
    let right = m + drop_distance(theta, coef, q, m, 1.0, 46.0)?;
    let mut breaks = vec![left];
    // |t|^q is not analytic at 0.
    if left < 0.0 && 0.0 < right && m != 0.0 {
        breaks.push(0.0);
    }
    breaks.push(m);
    breaks.push(right);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    // Terms of size |θm| cancel in the exponent, leaving an absolute rounding
    // error that no quadrature can beat.
    let magnitude = (theta * m).abs() + coef * m.abs().powf(q);
    let tol = rel_tol.max(64.0 * f64::EPSILON * magnitude);
    let r = log_integrate(|t| log_kernel(theta, coef, q, t) - top, &breaks, tol, 2000)?;
    Ok(r.log_value + top)
}

/// `∫ exp(θt - coef|t|^q) dt`.
pub fn one_dim_integral(theta: f64, coef: f64, q: f64) -> Result<f64> {
    Ok(ln_one_dim_integral(theta, coef, q, QuadConfig::default().one_dim_rel_tol)?.exp())
}

/// Exact draw from the density proportional to `exp(θt - coef|t|^q)`.
///
/// The envelope is the minimum of the two tangent lines of the log density at
/// the points on either side of the mode where it has dropped by one; by
/// concavity this dominates the log density everywhere.
pub fn sample_one_dim<R: Rng + ?Sized>(theta: f64, coef: f64, q: f64, rng: &mut R) -> Result<f64> {
    if q == 2.0 {
        let z: f64 = StandardNormal.sample(rng);
        return Ok(theta / (2.0 * coef) + z / (2.0 * coef).sqrt());
    }
    let m = kernel_mode(theta, coef, q);
    let l = m - drop_distance(theta, coef, q, m, -1.0, 1.0)?;
    let r = m + drop_distance(theta, coef, q, m, 1.0, 1.0)?;
    let (hl, hr) = (log_kernel(theta, coef, q, l), log_kernel(theta, coef, q, r));
    let (sl, sr) = (log_kernel_slope(theta, coef, q, l), log_kernel_slope(theta, coef, q, r));
    if !(sl > 0.0) || !(sr < 0.0) {
        return Err(Error::Numerical(format!(
            "envelope construction failed: tangent slopes {sl} and {sr} at {l} and {r}"
        )));
    }
    // The two tangents meet at z.
    let z = (hr - hl - sr * r + sl * l) / (sl - sr);
    let hz = hl + sl * (z - l);
    let p_left = (1.0 / sl) / (1.0 / sl - 1.0 / sr);
    for _ in 0..100_000 {
        let e: f64 = Exp1.sample(rng);
        let t = if rng.random::<f64>() < p_left { z - e / sl } else { z + e / -sr };
        let envelope = hz - e;
        let accept_log = log_kernel(theta, coef, q, t) - envelope;
        let u: f64 = rng.random();
        if u.ln() <= accept_log {
            return Ok(t);
        }
    }
    Err(Error::Numerical("one-dimensional rejection sampler exhausted its retry budget".into()))
}

/// Draws the first coordinate of `y ~ D_0` for `φ(y) = a‖y‖_∞²`.
///
/// The radius `r = ‖y‖_∞` has density `∝ r^{d-1} e^{-a r²}`, and given `r`
/// the point is uniform on the boundary of the cube `[-r, r]^d`: one uniformly
/// chosen coordinate sits at `±r`, the others are uniform on `[-r, r]`.
pub fn sample_linf_first_coordinate<R: Rng + ?Sized>(d: usize, a: f64, rng: &mut R) -> Result<f64> {
    if d == 0 || !(a > 0.0) {
        return Err(Error::Domain(format!("need d >= 1 and a > 0, got d = {d}, a = {a}")));
    }
    let shape = Gamma::new(0.5 * d as f64, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let g: f64 = shape.sample(rng);
    let r = (g / a).sqrt();
    if rng.random_range(0..d) == 0 {
        Ok(if rng.random::<bool>() { r } else { -r })
    } else {
        Ok(r * rng.random_range(-1.0..1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::ln_gamma;
    use crate::rng::seeded;
    use std::f64::consts::PI;

    fn spec(d: usize, p: f64, a: f64) -> LLTSpec {
        LLTSpec::new(LpGeometry::new(d, p, 1.0).unwrap(), a).unwrap()
    }

    #[test]
    fn one_dim_examples() {
        assert!((one_dim_integral(0.0, 1.0, 2.0).unwrap() - PI.sqrt()).abs() < 1e-12);
        assert!((one_dim_integral(1.0, 1.0, 2.0).unwrap() - PI.sqrt() * 0.25f64.exp()).abs() < 1e-12);
        let want = ln_gamma(0.25).exp() / 2.0;
        assert!((one_dim_integral(0.0, 1.0, 4.0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn one_dim_extreme_scales() {
        // ∫ exp(θt - c t²) = √(π/c) e^{θ²/4c}.
        for &(theta, c) in &[(50.0, 1e-3), (-3.0, 1e6), (1e3, 1.0), (0.0, 1e-12)] {
            let got = ln_one_dim_integral(theta, c, 2.0, 1e-13).unwrap();
            let want = 0.5 * (PI / c).ln() + theta * theta / (4.0 * c);
            assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "{theta} {c}: {got} vs {want}");
        }
    }

    #[test]
    fn closed_form_examples() {
        assert!((spec(2, 2.0, 1.0).value(&[0.0, 0.0]).unwrap() - PI.ln()).abs() < 1e-14);
        let v = spec(3, 2.0, 0.5).value(&[1.0, 0.0, 0.0]).unwrap();
        assert!((v - 3.256815599614018).abs() < 1e-12);
    }

    #[test]
    fn forced_quadrature_matches_closed_form() {
        let s = spec(3, 2.0, 0.5);
        let f = s.clone().forcing_quadrature(true);
        let x = [1.0, -0.3, 2.5];
        let (a, b) = (s.value(&x).unwrap(), f.value(&x).unwrap());
        assert!((a - b).abs() < 1e-10 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn mixture_in_one_dimension_is_gaussian() {
        // In d = 1, ‖y‖_q = |y| for every q, so ψ(x) = x²/(4a) + ½ln(π/a).
        for &q in &[3.0, 4.0, 6.0] {
            let p = q / (q - 1.0);
            for &(x, a) in &[(0.0, 1.0), (1.5, 0.7), (-4.0, 2.0)] {
                let s = spec(1, p, a);
                let got = s.value(&[x]).unwrap();
                let want = x * x / (4.0 * a) + 0.5 * (PI / a).ln();
                assert!((got - want).abs() < 1e-8, "q={q} x={x} a={a}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn mixture_at_origin_matches_ball_volume() {
        // ∫ e^{-a‖y‖_q²} dy = V_q d Γ(d/2) / (2 a^{d/2}) with V_q the unit-ball volume.
        for &(d, q) in &[(2usize, 4.0), (3, 3.0), (5, 4.0)] {
            let p = q / (q - 1.0);
            let a = 0.8;
            let s = spec(d, p, a);
            let df = d as f64;
            let ln_vol = df * (2.0f64.ln() + ln_gamma(1.0 + 1.0 / q)) - ln_gamma(1.0 + df / q);
            let want = ln_vol + df.ln() + ln_gamma(df / 2.0) - 2.0f64.ln() - 0.5 * df * a.ln();
            let got = s.value(&vec![0.0; d]).unwrap();
            assert!((got - want).abs() < 1e-8, "d={d} q={q}: {got} vs {want}");
        }
    }

    #[test]
    fn cache_returns_identical_values() {
        let s = spec(2, 4.0 / 3.0, 1.0);
        let x = [0.3, -1.1];
        assert_eq!(s.value(&x).unwrap().to_bits(), s.value(&x).unwrap().to_bits());
    }

    #[test]
    fn gradient_examples() {
        let s = spec(3, 4.0 / 3.0, 1.0);
        for g in s.gradient(&[0.0; 3]).unwrap() {
            assert!(g.abs() < 1e-6);
        }
        let s = spec(3, 2.0, 0.5);
        let x = [0.4, -2.0, 1.0];
        for (g, xi) in s.gradient(&x).unwrap().iter().zip(x) {
            assert!((g - xi).abs() < 1e-8);
        }
    }

    #[test]
    fn one_dim_sampler_matches_moments() {
        // Compare the empirical mean of exp(θt - |t|^4) with quadrature.
        let mut rng = seeded(5);
        let (theta, coef, q) = (1.3, 0.7, 4.0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_one_dim(theta, coef, q, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n as f64;
        let z = ln_one_dim_integral(theta, coef, q, 1e-13).unwrap();
        let h = 1e-5;
        let want = (ln_one_dim_integral(theta + h, coef, q, 1e-13).unwrap()
            - ln_one_dim_integral(theta - h, coef, q, 1e-13).unwrap())
            / (2.0 * h);
        assert!(z.is_finite());
        assert!((mean - want).abs() < 4.0 * (var / n as f64).sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn sample_pix_gaussian_mean() {
        let s = spec(2, 2.0, 0.5);
        let mut rng = seeded(9);
        let x = [1.0, -2.0];
        let est = s.cumulants(&x, &[1.0, 0.0], 20_000, &mut rng).unwrap();
        for i in 0..2 {
            assert!((est.mean[i] - x[i]).abs() < 4.0 * est.mean_se[i]);
            assert!((est.covariance[i][i] - 1.0).abs() < 4.0 * est.covariance_se[i][i]);
        }
    }

    #[test]
    fn sample_pix_mean_matches_brute_force_at_q4() {
        // Mean of exp(0.3y₁ + 0.5y₂ - ½‖y‖₄²) from a 4001² grid on [-40, 40]².
        let want = [0.372_236_101_964, 0.601_375_310_514];
        let s = spec(2, 4.0 / 3.0, 0.5);
        let mut rng = seeded(4);
        let est = s.cumulants(&[0.3, 0.5], &[1.0, 0.0], 40_000, &mut rng).unwrap();
        for i in 0..2 {
            assert!((est.mean[i] - want[i]).abs() < 4.0 * est.mean_se[i], "{:?}", est.mean);
        }
        assert_eq!(s.envelope_violations(), 0);
        let zero = s.cumulants(&[0.0, 0.0], &[1.0, 0.0], 20_000, &mut rng).unwrap();
        for i in 0..2 {
            assert!(zero.mean[i].abs() < 4.0 * zero.mean_se[i]);
        }
    }

    #[test]
    fn linf_first_coordinate_is_symmetric() {
        let mut rng = seeded(2);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| sample_linf_first_coordinate(4, 1.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05);
    }
}
