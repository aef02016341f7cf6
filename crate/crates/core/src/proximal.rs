//! The alternating proximal chain for `π(x) ∝ exp(-F(x) - ημψ(x))` on the
//! ℓ_p ball: `y ~ π_x` exactly through the LLT sampler, then `x ~ π_y` through
//! the randomized rejection loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditional::{hit_and_run, inner_loop, InnerLoopConfig, ProblemInstance, DEFAULT_HR_STEPS};
use crate::error::{check_dim, Error, Result};
use crate::llt::LLTSpec;

pub const DEFAULT_MIXING_CONSTANT: f64 = 64.0;
pub const DEFAULT_MAX_ROUNDS: u64 = 100_000_000;

/// Controls for [`alternate_sample`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub eta: f64,
    pub mu: f64,
    pub delta: f64,
    /// Warmness of the start relative to the target.
    pub beta: f64,
    pub mixing_constant: f64,
    /// Replaces the derived round count when set.
    pub rounds_override: Option<u64>,
    pub seed: u64,
    pub hr_steps: usize,
    pub hr_burn: usize,
    /// Runs whose round count exceeds this are refused.
    pub max_rounds: u64,
}

impl SamplerConfig {
    pub fn new(eta: f64, mu: f64, delta: f64, beta: f64) -> Result<Self> {
        let cfg = SamplerConfig {
            eta,
            mu,
            delta,
            beta,
            mixing_constant: DEFAULT_MIXING_CONSTANT,
            rounds_override: None,
            seed: 0,
            hr_steps: DEFAULT_HR_STEPS,
            hr_burn: 0,
            max_rounds: DEFAULT_MAX_ROUNDS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uses the warmness `β = exp(G·diam)` of the `F`-free start.
    pub fn for_instance(instance: &ProblemInstance, eta: f64, mu: f64, delta: f64) -> Result<Self> {
        let beta = (instance.lipschitz() * instance.geometry().diameter()).exp();
        Self::new(eta, mu, delta, beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !(self.mu > 0.0) || !self.eta.is_finite() || !self.mu.is_finite() {
            return Err(Error::Domain(format!("need η > 0 and μ > 0, got η = {}, μ = {}", self.eta, self.mu)));
        }
        if self.eta * self.mu > 1.0 {
            return Err(Error::Precondition(format!("need ημ <= 1, got {}", self.eta * self.mu)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain(format!("δ must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.beta >= 1.0) {
            return Err(Error::Domain(format!("warmness β must be at least 1, got {}", self.beta)));
        }
        if !(self.mixing_constant > 0.0) {
            return Err(Error::Config(format!("mixing constant must be positive, got {}", self.mixing_constant)));
        }
        if self.hr_steps == 0 {
            return Err(Error::Config("hit-and-run needs at least one step".into()));
        }
        Ok(())
    }

    /// Round count: the override, or [`mixing_time`].
    pub fn rounds(&self) -> Result<u64> {
        match self.rounds_override {
            Some(0) => Err(Error::Config("round override must be at least 1".into())),
            Some(t) => Ok(t),
            None => mixing_time(self.eta, self.mu, self.beta, self.delta, self.mixing_constant),
        }
    }

    /// Inner-loop settings for a run of `rounds` rounds: TV budget `δ/(2T)`.
    pub fn inner(&self, rounds: u64, lipschitz: f64) -> Result<InnerLoopConfig> {
        InnerLoopConfig::new(self.delta / (2.0 * rounds as f64), self.eta, self.mu, lipschitz)?
            .with_hit_and_run(self.hr_steps, self.hr_burn)
    }
}

/// `T = ⌈C_T ln(β/δ) / (ημ)⌉`, at least 1 (a start with `β ≤ δ` is
/// already mixed).
pub fn mixing_time(eta: f64, mu: f64, beta: f64, delta: f64, c_t: f64) -> Result<u64> {
    if !(eta > 0.0) || !(mu > 0.0) {
        return Err(Error::Domain(format!("need η > 0 and μ > 0, got η = {eta}, μ = {mu}")));
    }
    if eta * mu > 1.0 {
        return Err(Error::Precondition(format!("mixing time needs ημ <= 1, got {}", eta * mu)));
    }
    if !(beta > 0.0) || !(delta > 0.0 && delta < 1.0) || !(c_t > 0.0) {
        return Err(Error::Domain(format!(
            "need β > 0, δ in (0, 1) and C_T > 0, got β = {beta}, δ = {delta}, C_T = {c_t}"
        )));
    }
    let t = (c_t * (beta / delta).ln().max(0.0) / (eta * mu)).ceil();
    if !(t < 1.8e19) {
        return Err(Error::Precondition(format!("mixing time {t:e} does not fit in 64 bits")));
    }
    Ok((t as u64).max(1))
}

/// Approximate draw from `ν(x) ∝ exp(-ημψ(x))` on the ball by `steps`
/// hit-and-run steps from the origin. `F` is never queried.
pub fn warm_start<R: Rng + ?Sized>(spec: &LLTSpec, eta: f64, mu: f64, steps: usize, rng: &mut R) -> Result<Vec<f64>> {
    let weight = eta * mu;
    let start = vec![0.0; spec.dim()];
    hit_and_run(spec.geometry(), &start, steps, |x| Ok(-weight * spec.value(x)?), rng)
}

/// Summary of one chain run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRun {
    pub x: Vec<f64>,
    pub rounds: u64,
    pub inner_iterations: u64,
    pub queries: u64,
}

/// Runs `T` rounds of the alternating chain from `x0` and returns `x_T`.
pub fn alternate_sample<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    spec: &LLTSpec,
    cfg: &SamplerConfig,
    x0: &[f64],
    rng: &mut R,
) -> Result<ChainRun> {
    alternate_sample_observed(instance, spec, cfg, x0, rng, |_, _| {})
}

/// [`alternate_sample`], calling `observe(k, x_k)` after every round.
pub fn alternate_sample_observed<R, O>(
    instance: &ProblemInstance,
    spec: &LLTSpec,
    cfg: &SamplerConfig,
    x0: &[f64],
    rng: &mut R,
    mut observe: O,
) -> Result<ChainRun>
where
    R: Rng + ?Sized,
    O: FnMut(u64, &[f64]),
{
    cfg.validate()?;
    check_dim(spec.dim(), x0.len())?;
    check_dim(spec.dim(), instance.geometry().dim())?;
    if !instance.geometry().contains(x0)? {
        return Err(Error::Domain("chain start lies outside the domain".into()));
    }
    let rounds = cfg.rounds()?;
    if rounds > cfg.max_rounds {
        return Err(Error::Precondition(format!(
            "chain needs {rounds} rounds, above the configured limit of {}",
            cfg.max_rounds
        )));
    }
    let inner = cfg.inner(rounds, instance.lipschitz())?;
    let start_queries = instance.query_count();
    let mut x = x0.to_vec();
    let mut inner_iterations = 0u64;
    for k in 1..=rounds {
        let step = (|| -> Result<usize> {
            let y = spec.sample(&x, rng)?;
            let out = inner_loop(instance, spec, &inner, &y, rng)?;
            x = out.x;
            Ok(out.iterations)
        })();
        inner_iterations += step.map_err(|e| e.at_round(k))? as u64;
        observe(k, &x);
    }
    Ok(ChainRun {
        x,
        rounds,
        inner_iterations,
        queries: instance.query_count() - start_queries,
    })
}
