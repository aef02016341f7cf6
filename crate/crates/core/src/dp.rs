//! Differentially private empirical and population risk minimization over
//! ℓ_p balls by sampling from `exp(-k(F + μ·ηψ))` with the proximal chain.

use std::io::Read;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditional::{Family, Link, ProblemInstance, DEFAULT_HR_STEPS};
use crate::error::{Error, Result};
use crate::geometry::{conjugate, exponent_floor, lp_norm_unchecked, LpGeometry, MEMBERSHIP_RTOL};
use crate::llt::{LLTSpec, QuadConfig};
use crate::proximal::{alternate_sample, mixing_time, warm_start, SamplerConfig, DEFAULT_MAX_ROUNDS, DEFAULT_MIXING_CONSTANT};

/// Which risk the mechanism targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Erm,
    Sco,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s.to_ascii_lowercase().as_str() {
            "erm" => Ok(Mode::Erm),
            "sco" => Ok(Mode::Sco),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected erm or sco)"))),
        }
    }
}

fn check_privacy_inputs(n: f64, eps: f64, delta: f64, g: f64, d: f64, theta: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Domain(format!("ε must lie in (0, 1], got {eps}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Domain(format!("δ must lie in (0, 1/2), got {delta}")));
    }
    for (name, v) in [("n", n), ("G", g), ("d", d), ("Θ", theta)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok(())
}

/// Inverse temperature and regularization weight for empirical risk:
/// `k = √d nε / (G √(2Θ ln(1/2δ)))`, `μ = 2G²k ln(1/2δ) / (n²ε²)`.
pub fn dp_params_erm(n: f64, eps: f64, delta: f64, g: f64, d: f64, theta: f64) -> Result<(f64, f64)> {
    check_privacy_inputs(n, eps, delta, g, d, theta)?;
    let l = (1.0 / (2.0 * delta)).ln();
    let k = d.sqrt() * n * eps / (g * (2.0 * theta * l).sqrt());
    let mu = 2.0 * g * g * k * l / (n * n * eps * eps);
    Ok((k, mu))
}

/// Inverse temperature and regularization weight for population risk:
/// `k = √(d ln(1/2δ)/(ε²n²) + 1/n) · min(ε²n²/ln(1/2δ), nd) / (G√Θ)`,
/// `μ = G²k · max(ln(1/2δ)/(n²ε²), 1/(nd))`.
pub fn dp_params_sco(n: f64, eps: f64, delta: f64, g: f64, d: f64, theta: f64) -> Result<(f64, f64)> {
    check_privacy_inputs(n, eps, delta, g, d, theta)?;
    let l = (1.0 / (2.0 * delta)).ln();
    let e2n2 = eps * eps * n * n;
    let k = (d * l / e2n2 + 1.0 / n).sqrt() * (e2n2 / l).min(n * d) / (g * theta.sqrt());
    let mu = g * g * k * (l / e2n2).max(1.0 / (n * d));
    Ok((k, mu))
}

/// Rows `s_i` of a loss family, each satisfying `‖s_i‖_q ≤ G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    /// `None` for linear losses `⟨s, x⟩`.
    pub link: Option<Link>,
    /// The Lipschitz bound every row was validated against.
    pub lipschitz: f64,
}

impl Dataset {
    /// Validates every row against `‖s‖_q ≤ G` (relative slack `1e-12`) and
    /// rejects the whole set, listing offending rows, if any fail.
    pub fn new(rows: Vec<Vec<f64>>, link: Option<Link>, lipschitz: f64, q: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Ingestion("dataset has no rows".into()));
        }
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::Domain(format!("Lipschitz bound G must be positive, got {lipschitz}")));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::Ingestion("dataset rows are empty".into()));
        }
        let mut bad = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Ingestion(format!("row {} has {} columns, expected {d}", i + 1, row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Ingestion(format!("row {} has non-finite entries", i + 1)));
            }
            if lp_norm_unchecked(row, q) > lipschitz * (1.0 + MEMBERSHIP_RTOL) {
                bad.push(i + 1);
            }
        }
        if !bad.is_empty() {
            let shown: Vec<String> = bad.iter().take(20).map(|r| r.to_string()).collect();
            let more = if bad.len() > 20 { format!(" and {} more", bad.len() - 20) } else { String::new() };
            return Err(Error::Ingestion(format!(
                "{} row(s) exceed the ℓ_{q} norm bound G = {lipschitz}: rows {}{more}",
                bad.len(),
                shown.join(", ")
            )));
        }
        Ok(Dataset { rows, link, lipschitz })
    }

    /// Reads a headerless (or, with `has_header`, headed) numeric CSV.
    pub fn from_csv<R: Read>(reader: R, has_header: bool, link: Option<Link>, lipschitz: f64, q: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Ingestion(format!("row {}: cannot parse `{f}`: {e}", i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(rows, link, lipschitz, q)
    }

    pub fn from_path(path: &Path, has_header: bool, link: Option<Link>, lipschitz: f64, q: f64) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Ingestion(format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv(file, has_header, link, lipschitz, q)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn family(&self) -> Family {
        match self.link {
            None => Family::Linear { rows: self.rows.clone() },
            Some(link) => Family::Glm {
                rows: self.rows.clone(),
                link,
            },
        }
    }

    /// The empirical objective over `geom`.
    pub fn instance(&self, geom: LpGeometry) -> Result<ProblemInstance> {
        ProblemInstance::new(geom, self.family())
    }
}

/// Tunable constants of the mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    /// `c_η` in `η = c_η / (k²G² ln((1+nε) ln β / δ))`.
    pub c_eta: f64,
    /// Multiplier on `min(1/(p-1), ln d)` giving the regularizer range `Θ`.
    pub theta_constant: f64,
    pub mixing_constant: f64,
    /// Sampler TV budget; defaults to `δ_dp`.
    pub delta_tv: Option<f64>,
    /// Warmness override; defaults to `exp(kG·2)` after rescaling.
    pub beta: Option<f64>,
    pub rounds_override: Option<u64>,
    pub max_rounds: u64,
    pub hr_steps: usize,
    pub warm_steps: usize,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        MechanismConfig {
            c_eta: 1.0 / 2e4,
            theta_constant: 4.0,
            mixing_constant: DEFAULT_MIXING_CONSTANT,
            delta_tv: None,
            beta: None,
            rounds_override: None,
            max_rounds: DEFAULT_MAX_ROUNDS,
            hr_steps: DEFAULT_HR_STEPS,
            warm_steps: DEFAULT_HR_STEPS,
        }
    }
}

/// Every parameter derived by the pipeline before sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismPlan {
    pub mode: Mode,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta_dp: f64,
    pub delta_tv: f64,
    /// Original radius `D`.
    pub radius: f64,
    /// Lipschitz bound after rescaling to the unit ball (`G·D`).
    pub lipschitz: f64,
    pub p: f64,
    pub p_effective: f64,
    pub q_effective: f64,
    pub theta: f64,
    pub k: f64,
    pub mu: f64,
    pub eta: f64,
    pub a: f64,
    pub beta: f64,
    pub rounds: u64,
    /// Sampler weight on `ψ`: `η·kμ`.
    pub sampler_mu: f64,
    /// Pipeline steps taken, in order.
    pub stages: Vec<String>,
}

impl MechanismPlan {
    /// `(1 + n²ε²/ln(1/δ_dp)) · ln((1+nε) ln β/δ) · ln(β/δ)`, the shape of the
    /// expected number of component queries.
    pub fn complexity(&self) -> f64 {
        let n = self.n as f64;
        let ne = n * self.epsilon;
        let ln_beta = self.beta.ln();
        (1.0 + ne * ne / (1.0 / self.delta_dp).ln())
            * (((1.0 + ne) * ln_beta / self.delta_tv).ln()).max(1.0)
            * ((self.beta / self.delta_tv).ln()).max(1.0)
    }
}

/// Derives all mechanism parameters without sampling.
pub fn plan_mechanism(
    dataset: &Dataset,
    geom: &LpGeometry,
    epsilon: f64,
    delta_dp: f64,
    mode: Mode,
    cfg: &MechanismConfig,
) -> Result<MechanismPlan> {
    let d = geom.dim();
    if dataset.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: dataset.dim(),
        });
    }
    if d < 2 {
        return Err(Error::Config("the mechanism needs d >= 2 (the range bound uses ln d)".into()));
    }
    if !(cfg.c_eta > 0.0) || !(cfg.theta_constant > 0.0) {
        return Err(Error::Config("c_η and the Θ constant must be positive".into()));
    }
    let n = dataset.len();
    let delta_tv = cfg.delta_tv.unwrap_or(delta_dp);
    if !(delta_tv > 0.0 && delta_tv < 1.0) {
        return Err(Error::Domain(format!("sampler δ must lie in (0, 1), got {delta_tv}")));
    }
    let mut stages = Vec::new();

    // Rescale the domain to the unit ball; losses become f(D·x; s).
    stages.push("rescale".to_string());
    let radius = geom.radius();
    let g = dataset.lipschitz * radius;

    let floor = exponent_floor(d);
    let p_effective = if geom.p() <= floor {
        stages.push("p-substitution".to_string());
        floor
    } else {
        geom.p()
    };
    let q_effective = conjugate(p_effective);

    let df = d as f64;
    let range = if p_effective > 1.0 { (1.0 / (p_effective - 1.0)).min(df.ln()) } else { df.ln() };
    let theta = cfg.theta_constant * range;
    stages.push("theta".to_string());

    let (k, mu) = match mode {
        Mode::Erm => {
            stages.push("params-erm".to_string());
            dp_params_erm(n as f64, epsilon, delta_dp, g, df, theta)?
        }
        Mode::Sco => {
            stages.push("params-sco".to_string());
            dp_params_sco(n as f64, epsilon, delta_dp, g, df, theta)?
        }
    };
    let kg = k * g;
    let sampler_mu = k * mu;
    let beta = match cfg.beta {
        Some(b) if b >= 1.0 => b,
        Some(b) => return Err(Error::Domain(format!("warmness β must be at least 1, got {b}"))),
        None => (kg * 2.0).exp(),
    };
    if !beta.is_finite() {
        return Err(Error::Config(format!("warmness exp(2kG) overflows (kG = {kg})")));
    }

    stages.push("eta".to_string());
    let ne = n as f64 * epsilon;
    let log_term = ((1.0 + ne) * beta.ln() / delta_tv).ln().max(1.0);
    let mut eta = cfg.c_eta / (kg * kg * log_term);

    if eta * sampler_mu > 1.0 {
        stages.push("eta-shrink-mixing".to_string());
        eta = 1.0 / sampler_mu;
    }

    // The inner loop needs 1/η ≥ 1e4 (kG)² ln(2T/δ) with T itself growing
    // like 1/η; a short fixed-point iteration finds a compliant η if the
    // formula above falls short.
    let rounds_for = |eta: f64| -> Result<u64> {
        match cfg.rounds_override {
            Some(t) => Ok(t.max(1)),
            None => mixing_time(eta, sampler_mu, beta, delta_tv, cfg.mixing_constant),
        }
    };
    let required = |eta: f64| -> Result<f64> {
        let t = rounds_for(eta)? as f64;
        Ok(1e4 * kg * kg * (2.0 * t / delta_tv).ln())
    };
    if 1.0 / eta < required(eta)? {
        stages.push("eta-shrink-inner".to_string());
        let mut converged = false;
        for _ in 0..60 {
            let need = required(eta)?;
            if 1.0 / eta >= need {
                converged = true;
                break;
            }
            eta = 1.0 / (need * (1.0 + 1e-9));
        }
        if !converged {
            return Err(Error::Config(
                "no step size satisfies the inner-loop precondition for these parameters".into(),
            ));
        }
    }
    let a = eta * (p_effective - 1.0) / 2.0;
    stages.push("a".to_string());
    let rounds = rounds_for(eta)?;
    stages.push("sample".to_string());
    stages.push("unscale".to_string());

    Ok(MechanismPlan {
        mode,
        n,
        d,
        epsilon,
        delta_dp,
        delta_tv,
        radius,
        lipschitz: g,
        p: geom.p(),
        p_effective,
        q_effective,
        theta,
        k,
        mu,
        eta,
        a,
        beta,
        rounds,
        sampler_mu,
        stages,
    })
}

/// Outcome of [`run_mechanism`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismReport {
    pub solution: Vec<f64>,
    pub plan: MechanismPlan,
    pub queries: u64,
    pub inner_iterations: u64,
    /// `(ε, δ_dp + δ_tv)`: the sampler's TV error added to the slack.
    pub effective_privacy: (f64, f64),
    /// Empirical risk `F(x)` of the returned point.
    pub empirical_risk: f64,
    /// Queries divided by [`MechanismPlan::complexity`].
    pub query_constant: f64,
    pub wall_seconds: f64,
}

/// The shared objective, regularizer and sampler settings for a plan.
pub fn build_sampler(
    dataset: &Dataset,
    geom: &LpGeometry,
    plan: &MechanismPlan,
    cfg: &MechanismConfig,
) -> Result<(ProblemInstance, LLTSpec, SamplerConfig)> {
    let instance = dataset.instance(*geom)?.rescaled_to_unit_ball()?.scaled(plan.k)?;
    let unit = geom.with_radius(1.0)?;
    let spec = LLTSpec::with_exponent(unit, plan.q_effective, plan.a, QuadConfig::default())?;
    let mut sampler = SamplerConfig::new(plan.eta, plan.sampler_mu, plan.delta_tv, plan.beta)?;
    sampler.mixing_constant = cfg.mixing_constant;
    sampler.rounds_override = cfg.rounds_override;
    sampler.max_rounds = cfg.max_rounds;
    sampler.hr_steps = cfg.hr_steps;
    Ok((instance, spec, sampler))
}

/// Runs the full pipeline: rescale, derive parameters, warm start, sample,
/// and map the sample back to the original ball.
pub fn run_mechanism<R: Rng + ?Sized>(
    dataset: &Dataset,
    geom: &LpGeometry,
    epsilon: f64,
    delta_dp: f64,
    mode: Mode,
    cfg: &MechanismConfig,
    rng: &mut R,
) -> Result<MechanismReport> {
    let started = Instant::now();
    let plan = plan_mechanism(dataset, geom, epsilon, delta_dp, mode, cfg)?;
    if plan.rounds > cfg.max_rounds {
        return Err(Error::Precondition(format!(
            "mechanism needs {} chain rounds, above the configured limit of {}",
            plan.rounds, cfg.max_rounds
        )));
    }
    let (instance, spec, sampler) = build_sampler(dataset, geom, &plan, cfg)?;
    let x0 = warm_start(&spec, plan.eta, plan.sampler_mu, cfg.warm_steps, rng)?;
    let run = alternate_sample(&instance, &spec, &sampler, &x0, rng)?;
    let solution: Vec<f64> = run.x.iter().map(|v| v * plan.radius).collect();
    let empirical_risk = dataset.instance(*geom)?.mean_value(&solution);
    let complexity = plan.complexity();
    Ok(MechanismReport {
        solution,
        queries: run.queries,
        inner_iterations: run.inner_iterations,
        effective_privacy: (epsilon, delta_dp + plan.delta_tv),
        empirical_risk,
        query_constant: run.queries as f64 / complexity,
        wall_seconds: started.elapsed().as_secs_f64(),
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erm_parameters() {
        let (k, mu) = dp_params_erm(1000.0, 1.0, 1e-6, 1.0, 10.0, 1.0).unwrap();
        assert!((k - 617.2754038111133).abs() < 1e-9 * k);
        assert!((mu - 0.01620022430548684).abs() < 1e-9 * mu);
        let (k2, _) = dp_params_erm(2000.0, 1.0, 1e-6, 1.0, 10.0, 1.0).unwrap();
        assert!((k2 / k - 2.0).abs() < 1e-12);
        let (k4, _) = dp_params_erm(1000.0, 1.0, 1e-6, 1.0, 10.0, 4.0).unwrap();
        assert!((k / k4 - 2.0).abs() < 1e-12);
        assert!(dp_params_erm(1000.0, 0.0, 1e-6, 1.0, 10.0, 1.0).is_err());
        assert!(dp_params_erm(1000.0, 1.0, 1e-6, -1.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn sco_branches() {
        let (k, mu) = dp_params_sco(1.0, 1.0, 1e-2, 1.0, 1.0, 1.0).unwrap();
        assert!(k > 0.0 && mu > 0.0);
        // nd = 10 < ε²n²/ln(1/2δ) ≈ 1.9e3: the nd branch.
        let (n, d, eps, delta) = (1000.0, 0.01, 0.5, 1e-3);
        let l: f64 = (1.0 / (2.0 * delta) as f64).ln();
        assert!(n * d < eps * eps * n * n / l);
        let (k, mu) = dp_params_sco(n, eps, delta, 2.0, d, 3.0).unwrap();
        let want_k = (d * l / (eps * eps * n * n) + 1.0 / n).sqrt() * n * d / (2.0 * 3f64.sqrt());
        assert!((k - want_k).abs() < 1e-12 * want_k);
        // μ/k is independent of Θ.
        let (k9, mu9) = dp_params_sco(n, eps, delta, 2.0, d, 9.0).unwrap();
        assert!((mu / k - mu9 / k9).abs() < 1e-15);
    }

    #[test]
    fn ingestion_rejects_rows_over_the_bound() {
        let csv = "0.5,0.5\n1.0,1.0\n0.1,-0.2\n3,0\n";
        let err = Dataset::from_csv(csv.as_bytes(), false, None, 1.0, 2.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rows 2, 4"), "{msg}");
        let ok = Dataset::from_csv("x,y\n0.5,0.5\n".as_bytes(), true, None, 1.0, 2.0).unwrap();
        assert_eq!(ok.len(), 1);
        assert!(Dataset::from_csv("".as_bytes(), false, None, 1.0, 2.0).is_err());
    }

    #[test]
    fn plan_satisfies_invariants() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![((i as f64) * 0.37).sin() * 0.4; 5]).collect();
        let data = Dataset::new(rows, None, 1.0, 2.0).unwrap();
        let geom = LpGeometry::new(5, 1.0, 2.0).unwrap();
        let plan = plan_mechanism(&data, &geom, 1.0, 1e-6, Mode::Erm, &MechanismConfig::default()).unwrap();
        assert!((plan.a - plan.eta * (plan.p_effective - 1.0) / 2.0).abs() < 1e-18);
        assert!(plan.eta * plan.sampler_mu <= 1.0);
        assert!((plan.lipschitz - 2.0).abs() < 1e-15);
        assert!(plan.stages.contains(&"p-substitution".to_string()));
        let sco = plan_mechanism(&data, &geom, 1.0, 1e-6, Mode::Sco, &MechanismConfig::default()).unwrap();
        let strip = |s: &[String]| s.iter().filter(|t| !t.starts_with("params")).cloned().collect::<Vec<_>>();
        assert_eq!(strip(&plan.stages), strip(&sco.stages));
    }
}
