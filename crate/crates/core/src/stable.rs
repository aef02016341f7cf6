//! One-sided stable ("stable-count") mixing laws.
//!
//! `μ_c` is the law of the positive random variable `S` with
//! `E[e^{-tS}] = e^{-t^c}` for `c ∈ (0, 1]`. Mixing `e^{-λ t}` over `λ ~ μ_c`
//! turns the light-tailed kernel into the heavy-tailed `e^{-t^c}`, which is how
//! `e^{-a‖y‖_q²}` factorizes over coordinates with `c = 2/q`.
//!
//! * `c = 1` is the point mass at 1 (sampling only).
//! * `c = 1/2` is the Lévy law `λ^{-3/2} e^{-1/(4λ)} / (2√π)`.
//! * other `c` use Kanter's representation for sampling and Zolotarev's
//!   integral for the density and distribution function.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{log_add_exp, log_integrate, normal_cdf};

/// Relative tolerance of the Zolotarev integrals.
const ZOLOTAREV_RTOL: f64 = 1e-11;
const ZOLOTAREV_MAX_PANELS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StableKind {
    /// `c = 1`: all mass at `λ = 1`.
    PointMass,
    /// `c = 1/2`: closed-form Lévy law.
    Levy,
    /// Any other `c ∈ (0, 1)`.
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableCountLaw {
    c: f64,
    kind: StableKind,
}

impl StableCountLaw {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::Domain(format!("stable index must lie in (0, 1], got {c}")));
        }
        let kind = if c == 1.0 {
            StableKind::PointMass
        } else if c == 0.5 {
            StableKind::Levy
        } else {
            StableKind::Generic
        };
        Ok(Self { c, kind })
    }

    /// Law mixing `e^{-λ a^{q/2} |t|^q}` into `e^{-a‖·‖_q²}`, i.e. `c = 2/q`.
    pub fn for_dual_exponent(q: f64) -> Result<Self> {
        if !(q >= 2.0) || !q.is_finite() {
            return Err(Error::Domain(format!("dual exponent must be finite and >= 2, got {q}")));
        }
        Self::new(2.0 / q)
    }

    pub fn index(&self) -> f64 {
        self.c
    }

    pub fn kind(&self) -> StableKind {
        self.kind
    }

    /// `ln μ_c(λ)`; `-inf` where the density underflows.
    pub fn ln_density(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("density argument must be positive, got {lambda}")));
        }
        match self.kind {
            StableKind::PointMass => Err(Error::DegenerateLaw(
                "c = 1 is a point mass at 1; use sample() instead of density()".into(),
            )),
            StableKind::Levy => Ok(-(2.0 * PI.sqrt()).ln() - 1.5 * lambda.ln() - 0.25 / lambda),
            StableKind::Generic => self.zolotarev_ln_density(lambda),
        }
    }

    /// `μ_c(λ)`, clipped at zero.
    pub fn density(&self, lambda: f64) -> Result<f64> {
        Ok(self.ln_density(lambda)?.exp().max(0.0))
    }

    /// `Pr[S ≤ λ]`.
    pub fn cdf(&self, lambda: f64) -> Result<f64> {
        if lambda <= 0.0 {
            return Ok(0.0);
        }
        match self.kind {
            StableKind::PointMass => Ok(if lambda >= 1.0 { 1.0 } else { 0.0 }),
            // S = 1/(2Z²) so S ≤ λ iff |Z| ≥ 1/√(2λ).
            StableKind::Levy => Ok(2.0 * normal_cdf(-1.0 / (2.0 * lambda).sqrt())),
            StableKind::Generic => {
                let s = lambda.powf(-self.ratio());
                let v = self.zolotarev_log_integral(|lk| -lk.exp() * s, s)?;
                Ok((v - PI.ln()).exp().clamp(0.0, 1.0))
            }
        }
    }
    /// `ln ∫_0^∞ e^{-λt} μ_c(λ) dλ` by quadrature in `u = ln λ`; should equal
    /// `-t^c`.
    pub fn ln_laplace_transform(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("Laplace argument must be finite and nonnegative, got {t}")));
        }
        if self.kind == StableKind::PointMass {
            return Ok(-t);
        }
        let hi = if t > 0.0 { (200.0 / t).ln() } else { 60.0 / self.c };
        let breaks: Vec<f64> = (0..=((hi + 40.0) / 2.0) as usize).map(|k| -40.0 + 2.0 * k as f64).collect();
        let mut failure = None;
        let out = log_integrate(
            |u| {
                let l = u.exp();
                match self.ln_density(l) {
                    Ok(v) => v + u - l * t,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NEG_INFINITY
                    }
                }
            },
            &breaks,
            1e-8,
            10_000,
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(out.log_value),
        }
    }


    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            StableKind::PointMass => 1.0,
            StableKind::Levy => loop {
                let z: f64 = StandardNormal.sample(rng);
                if z != 0.0 {
                    break 0.5 / (z * z);
                }
            },
            StableKind::Generic => {
                let c = self.c;
                let u01: f64 = Open01.sample(rng);
                let u = PI * u01;
                let e: f64 = Exp1.sample(rng);
                let ln_s = (c * u).sin().ln() - (u.sin().ln()) / c
                    + (1.0 - c) / c * (((1.0 - c) * u).sin().ln() - e.ln());
                ln_s.exp()
            }
        }
    }

    /// `c / (1 - c)`.
    fn ratio(&self) -> f64 {
        self.c / (1.0 - self.c)
    }

    /// `ln K(u)` for Zolotarev's function
    /// `K(u) = sin(cu)^{c/(1-c)} sin((1-c)u) / sin(u)^{1/(1-c)}`, which is
    /// increasing on `(0, π)` from `c^{c/(1-c)} (1-c)` to `∞`.
    ///
    /// `near_pi` selects the parametrisation `u = π - t`, which keeps full
    /// relative precision where `K` blows up.
    fn ln_k(&self, t: f64, near_pi: bool) -> f64 {
        let c = self.c;
        let w = 1.0 / (1.0 - c);
        let (sin_cu, sin_dcu) = if near_pi {
            ((c * PI - c * t).sin(), ((1.0 - c) * PI - (1.0 - c) * t).sin())
        } else {
            ((c * t).sin(), ((1.0 - c) * t).sin())
        };
        c * w * sin_cu.ln() - w * t.sin().ln() + sin_dcu.ln()
    }

    /// `ln ∫_0^π exp(h(ln K(u))) du`. The range is split at `π/2`; the upper
    /// half is integrated in `t = π - u`. A break is placed where `K = 1/s`,
    /// the peak of `K e^{-Ks}`.
    fn zolotarev_log_integral<H: Fn(f64) -> f64>(&self, h: H, s: f64) -> Result<f64> {
        let half = 0.5 * PI;
        let target = -s.ln();
        let mut halves = Vec::with_capacity(2);
        for near_pi in [false, true] {
            let mut breaks = vec![0.0];
            // ln K is increasing in u, so decreasing in t on the upper half.
            let at_zero = self.ln_k(1e-300, near_pi);
            let at_half = self.ln_k(half, near_pi);
            let crosses = if near_pi {
                at_half < target && target < at_zero
            } else {
                at_zero < target && target < at_half
            };
            if crosses {
                let (mut lo, mut hi) = (0.0, half);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let below = self.ln_k(mid, near_pi) < target;
                    if below != near_pi {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                let peak = 0.5 * (lo + hi);
                if peak > 0.0 && peak < half {
                    // The peak can be many orders of magnitude narrower than
                    // the half-range; geometric breaks keep every panel at a
                    // width comparable to its distance from the peak.
                    breaks.extend((1..=8).rev().map(|k| peak * 0.5f64.powi(k)));
                    let mut b = peak;
                    while b < half {
                        breaks.push(b);
                        b *= 2.0;
                    }
                }
            }
            breaks.push(half);
            // For extreme `s` the exponent itself is huge and carries an
            // absolute rounding error of about `|h| eps` near its maximum, which bounds the
            // attainable accuracy.
            let peak_h = breaks
                .iter()
                .map(|&t| h(self.ln_k(t.max(1e-9), near_pi)))
                .filter(|v| v.is_finite())
                .fold(f64::NEG_INFINITY, f64::max);
            let scale = if peak_h.is_finite() { peak_h.abs().max(1.0) } else { 1.0 };
            let rel_tol = ZOLOTAREV_RTOL.max(64.0 * f64::EPSILON * scale);
            let r = log_integrate(
                |t| {
                    let lk = self.ln_k(t, near_pi);
                    if lk.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        h(lk)
                    }
                },
                &breaks,
                rel_tol,
                ZOLOTAREV_MAX_PANELS,
            )?;
            halves.push(r.log_value);
        }
        Ok(log_add_exp(halves[0], halves[1]))
    }

    fn zolotarev_ln_density(&self, lambda: f64) -> Result<f64> {
        // Given U = u, S = (K(u)/E)^{(1-c)/c}, so Pr[S ≤ x | u] = exp(-K x^{-r});
        // differentiate and average over u ~ Unif(0, π).
        let r = self.ratio();
        let ln_x = lambda.ln();
        let s = (-r * ln_x).exp();
        if s == f64::INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let v = self.zolotarev_log_integral(|lk| lk - lk.exp() * s, s)?;
        Ok((r / PI).ln() - (r + 1.0) * ln_x + v)
    }
}
