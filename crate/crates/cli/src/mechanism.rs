use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use llt_core::dp::{plan_mechanism, run_mechanism};
use llt_core::{seeded, Dataset, Error, Link, LpGeometry, MechanismConfig, Mode, Result};

use crate::manifest::{write_json, RunManifest};
use crate::settings::FileSettings;

#[derive(Debug, Args)]
pub struct DpArgs {
    /// CSV of loss rows `s_i`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub header: bool,
    /// Link for GLM losses `ℓ(⟨s, x⟩)`; linear losses when omitted.
    #[arg(long)]
    pub link: Option<String>,
    /// Bound G on every row's dual norm.
    #[arg(long)]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// erm or sco.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub c_eta: Option<f64>,
    #[arg(long)]
    pub theta_constant: Option<f64>,
    #[arg(long)]
    pub mixing_constant: Option<f64>,
    /// Sampler TV budget; defaults to δ.
    #[arg(long)]
    pub delta_tv: Option<f64>,
    /// Replaces the derived round count.
    #[arg(long)]
    pub rounds: Option<u64>,
    #[arg(long)]
    pub max_rounds: Option<u64>,
    #[arg(long)]
    pub hr_steps: Option<usize>,
    #[arg(long)]
    pub warm_steps: Option<usize>,
    /// Derive and report parameters without sampling.
    #[arg(long)]
    pub plan_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub data: PathBuf,
    pub header: bool,
    pub link: Option<String>,
    pub lipschitz: f64,
    pub p: f64,
    pub radius: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub mode: Mode,
    pub seed: u64,
    pub mechanism: MechanismConfig,
    pub plan_only: bool,
    pub out_dir: PathBuf,
}

pub fn resolve(args: DpArgs, file: &FileSettings, out_dir: Option<PathBuf>) -> Result<DpConfig> {
    let defaults = MechanismConfig::default();
    let data = file.opt(args.data, "data")?;
    let header = file.switch(args.header, "header")?;
    let link = file.opt(args.link, "link")?;
    let lipschitz = file.get(args.lipschitz, "lipschitz", 1.0)?;
    let p = file.get(args.p, "p", 2.0)?;
    let radius = file.get(args.radius, "radius", 1.0)?;
    let epsilon = file.opt(args.epsilon, "epsilon")?;
    let delta = file.opt(args.delta, "delta")?;
    let mode = file.get(args.mode, "mode", "erm".to_string())?;
    let seed = file.get(args.seed, "seed", 0)?;
    let mechanism = MechanismConfig {
        c_eta: file.get(args.c_eta, "c-eta", defaults.c_eta)?,
        theta_constant: file.get(args.theta_constant, "theta-constant", defaults.theta_constant)?,
        mixing_constant: file.get(args.mixing_constant, "mixing-constant", defaults.mixing_constant)?,
        delta_tv: file.opt(args.delta_tv, "delta-tv")?,
        beta: None,
        rounds_override: file.opt(args.rounds, "rounds")?,
        max_rounds: file.get(args.max_rounds, "max-rounds", defaults.max_rounds)?,
        hr_steps: file.get(args.hr_steps, "hr-steps", defaults.hr_steps)?,
        warm_steps: file.get(args.warm_steps, "warm-steps", defaults.warm_steps)?,
    };
    let plan_only = file.switch(args.plan_only, "plan-only")?;
    let out_dir = file.out_dir(out_dir)?;
    Ok(DpConfig {
        data: data.ok_or_else(|| Error::Config("dp needs --data".into()))?,
        header,
        link,
        lipschitz,
        p,
        radius,
        epsilon: epsilon.ok_or_else(|| Error::Config("dp needs --epsilon".into()))?,
        delta: delta.ok_or_else(|| Error::Config("dp needs --delta".into()))?,
        mode: Mode::parse(&mode)?,
        seed,
        mechanism,
        plan_only,
        out_dir,
    })
}

/// Report written by `dp --plan-only`.
#[derive(Debug, Serialize)]
struct PlanReport<'a> {
    plan: &'a llt_core::MechanismPlan,
    complexity: f64,
}

pub fn run(cfg: &DpConfig) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("dp", cfg, cfg.seed)?;
    let link = cfg.link.as_deref().map(Link::parse).transpose()?;
    let probe = LpGeometry::new(1, cfg.p, cfg.radius)?;
    let data = Dataset::from_path(&cfg.data, cfg.header, link, cfg.lipschitz, probe.q())?;
    let geom = LpGeometry::new(data.dim(), cfg.p, cfg.radius)?;
    let path = cfg.out_dir.join("dp_report.json");
    let json = if cfg.plan_only {
        let plan = plan_mechanism(&data, &geom, cfg.epsilon, cfg.delta, cfg.mode, &cfg.mechanism)?;
        let report = PlanReport {
            complexity: plan.complexity(),
            plan: &plan,
        };
        write_json(&path, &report)?;
        serde_json::to_string_pretty(&report)
    } else {
        let mut rng = seeded(cfg.seed);
        let report = run_mechanism(&data, &geom, cfg.epsilon, cfg.delta, cfg.mode, &cfg.mechanism, &mut rng)?;
        write_json(&path, &report)?;
        serde_json::to_string_pretty(&report)
    }
    .map_err(|e| Error::Config(format!("cannot encode report: {e}")))?;
    println!("{json}");
    manifest.inputs.push(cfg.data.clone());
    manifest.outputs.push(path);
    Ok(manifest)
}
