use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use llt_core::conditional::DEFAULT_HR_STEPS;
use llt_core::proximal::{alternate_sample_observed, mixing_time, DEFAULT_MAX_ROUNDS, DEFAULT_MIXING_CONSTANT};
use llt_core::{split, Dataset, Error, LLTSpec, Link, LpGeometry, ProblemInstance, Result, SamplerConfig};

use crate::manifest::{fmt_f64, RunManifest};
use crate::settings::FileSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// `F ≡ 0`: the chain targets `exp(-ημψ)` on the ball.
    Zero,
    /// Mean of `⟨s_i, x⟩` over the dataset rows.
    Linear,
    /// Mean of `ℓ(⟨s_i, x⟩)` for the chosen link.
    Glm,
}

impl std::str::FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Objective as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Ball radius D.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, value_enum)]
    pub objective: Option<Objective>,
    /// CSV of loss rows for the linear and glm objectives.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub link: Option<String>,
    /// Row norm bound G; rows above it are rejected. Defaults to no bound.
    #[arg(long)]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Weight on ψ; defaults to 1/η.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Scale of φ; defaults to η(p-1)/2.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Burn-in rounds per chain; defaults to the mixing time.
    #[arg(long)]
    pub rounds: Option<u64>,
    #[arg(long)]
    pub mixing_constant: Option<f64>,
    #[arg(long)]
    pub hr_steps: Option<usize>,
    #[arg(long)]
    pub max_rounds: Option<u64>,
    /// Rows to write.
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Independent chains; retained rows are split evenly between them.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Rounds between retained states after burn-in.
    #[arg(long)]
    pub thin: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Fully resolved `sample` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub d: usize,
    pub p: f64,
    pub radius: f64,
    pub objective: Objective,
    pub data: Option<PathBuf>,
    pub header: bool,
    pub link: Option<String>,
    pub lipschitz: Option<f64>,
    pub eta: f64,
    pub mu: f64,
    pub a: f64,
    pub delta: f64,
    pub burn_in: u64,
    pub mixing_constant: f64,
    pub hr_steps: usize,
    pub max_rounds: u64,
    pub n_samples: usize,
    pub chains: usize,
    pub thin: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub fn resolve(args: SampleArgs, file: &FileSettings, out_dir: Option<PathBuf>) -> Result<SampleConfig> {
    let d = file.get(args.d, "d", 2)?;
    let p = file.get(args.p, "p", 2.0)?;
    let radius = file.get(args.radius, "radius", 1.0)?;
    let objective = file.get(args.objective, "objective", Objective::Zero)?;
    let data = file.opt(args.data, "data")?;
    let header = file.switch(args.header, "header")?;
    let link = file.opt(args.link, "link")?;
    let lipschitz = file.opt(args.lipschitz, "lipschitz")?;
    let delta = file.get(args.delta, "delta", 0.1)?;
    let mixing_constant = file.get(args.mixing_constant, "mixing-constant", DEFAULT_MIXING_CONSTANT)?;
    let hr_steps = file.get(args.hr_steps, "hr-steps", DEFAULT_HR_STEPS)?;
    let max_rounds = file.get(args.max_rounds, "max-rounds", DEFAULT_MAX_ROUNDS)?;
    let n_samples = file.get(args.n_samples, "n-samples", 1000)?;
    let chains = file.get(args.chains, "chains", 1)?;
    let thin = file.get(args.thin, "thin", 1)?;
    let seed = file.get(args.seed, "seed", 0)?;
    let eta_flag = file.opt(args.eta, "eta")?;
    let mu_flag = file.opt(args.mu, "mu")?;
    let a_flag = file.opt(args.a, "a")?;
    let rounds_flag = file.opt(args.rounds, "rounds")?;
    let out_dir = file.out_dir(out_dir)?;

    let geom = LpGeometry::new(d, p, radius)?;
    if objective != Objective::Zero && data.is_none() {
        return Err(Error::Config(format!("objective `{objective:?}` needs --data").to_lowercase()));
    }
    if objective == Objective::Glm && link.is_none() {
        return Err(Error::Config("objective `glm` needs --link".into()));
    }
    if n_samples == 0 || chains == 0 || thin == 0 {
        return Err(Error::Config("n-samples, chains and thin must be positive".into()));
    }
    if n_samples % chains != 0 {
        return Err(Error::Config(format!("n-samples ({n_samples}) must be a multiple of chains ({chains})")));
    }
    let lipschitz_bound = objective_lipschitz(objective, data.as_deref(), header, link.as_deref(), lipschitz, &geom)?;
    let beta = (lipschitz_bound * geom.diameter()).exp();
    let (eta, mu, burn_in) = match eta_flag {
        Some(eta) => {
            let mu = mu_flag.unwrap_or(1.0 / eta);
            let burn = match rounds_flag {
                Some(t) => t,
                None => mixing_time(eta, mu, beta, delta, mixing_constant)?,
            };
            (eta, mu, burn)
        }
        None => {
            // With μ = 1/η the burn-in does not depend on η, so a compliant
            // default η can be read off the inner-loop precondition directly.
            let burn = match rounds_flag {
                Some(t) => t,
                None => mixing_time(1.0, 1.0, beta, delta, mixing_constant)?,
            };
            let total = burn + (n_samples / chains) as u64 * thin;
            let budget = delta / (2.0 * total as f64);
            let g2 = lipschitz_bound * lipschitz_bound;
            let eta = if g2 == 0.0 { 1.0 } else { (1.0 / (1e4 * g2 * (1.0 / budget).ln())).min(1.0) };
            (eta, mu_flag.unwrap_or(1.0 / eta), burn)
        }
    };
    // The regularizer keeps the raw exponent unless it is infinite.
    let p_reg = if geom.q().is_finite() { geom.p() } else { geom.effective_p() };
    let a = a_flag.unwrap_or(eta * (p_reg - 1.0) / 2.0);
    Ok(SampleConfig {
        d,
        p,
        radius,
        objective,
        data,
        header,
        link,
        lipschitz,
        eta,
        mu,
        a,
        delta,
        burn_in,
        mixing_constant,
        hr_steps,
        max_rounds,
        n_samples,
        chains,
        thin,
        seed,
        out_dir,
    })
}

fn objective_lipschitz(
    objective: Objective,
    data: Option<&Path>,
    header: bool,
    link: Option<&str>,
    lipschitz: Option<f64>,
    geom: &LpGeometry,
) -> Result<f64> {
    Ok(build_instance(objective, data, header, link, lipschitz, geom)?.lipschitz())
}

fn build_instance(
    objective: Objective,
    data: Option<&Path>,
    header: bool,
    link: Option<&str>,
    lipschitz: Option<f64>,
    geom: &LpGeometry,
) -> Result<ProblemInstance> {
    if objective == Objective::Zero {
        return ProblemInstance::constant(*geom, 0.0);
    }
    let path = data.ok_or_else(|| Error::Config("missing --data".into()))?;
    let link = match objective {
        Objective::Glm => Some(Link::parse(link.unwrap_or_default())?),
        _ => None,
    };
    let data = Dataset::from_path(path, header, link, lipschitz.unwrap_or(f64::MAX), geom.q())?;
    if data.dim() != geom.dim() {
        return Err(Error::DimensionMismatch {
            expected: geom.dim(),
            got: data.dim(),
        });
    }
    data.instance(*geom)
}

pub fn run(cfg: &SampleConfig) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("sample", cfg, cfg.seed)?;
    let geom = LpGeometry::new(cfg.d, cfg.p, cfg.radius)?;
    let instance = build_instance(cfg.objective, cfg.data.as_deref(), cfg.header, cfg.link.as_deref(), cfg.lipschitz, &geom)?;
    let spec = LLTSpec::new(geom, cfg.a)?;
    let per_chain = cfg.n_samples / cfg.chains;
    let total_rounds = cfg.burn_in + per_chain as u64 * cfg.thin;
    let mut sampler = SamplerConfig::for_instance(&instance, cfg.eta, cfg.mu, cfg.delta)?;
    sampler.mixing_constant = cfg.mixing_constant;
    sampler.rounds_override = Some(total_rounds);
    sampler.hr_steps = cfg.hr_steps;
    sampler.max_rounds = cfg.max_rounds;

    let chains: Vec<Result<Vec<Vec<f64>>>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = split(cfg.seed, c as u64);
            let mut kept = Vec::with_capacity(per_chain);
            let start = vec![0.0; cfg.d];
            alternate_sample_observed(&instance, &spec, &sampler, &start, &mut rng, |k, x| {
                if k > cfg.burn_in && (k - cfg.burn_in) % cfg.thin == 0 {
                    kept.push(x.to_vec());
                }
            })?;
            Ok(kept)
        })
        .collect();

    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("samples.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record((1..=cfg.d).map(|i| format!("x{i}")))?;
    for chain in chains {
        for row in chain? {
            w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
        }
    }
    w.flush()?;
    manifest.inputs.extend(cfg.data.clone());
    manifest.outputs.push(path);
    Ok(manifest)
}
