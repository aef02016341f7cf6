use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use llt_core::dp::run_mechanism;
use llt_core::hard_instance::{erm_solution, risk_table};
use llt_core::{seeded, Dataset, Error, LpGeometry, MechanismConfig, Mode, Result};

use crate::manifest::{fmt_f64, RunManifest};
use crate::settings::FileSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Exact empirical risk minimizer of the drawn linear losses.
    Erm,
    /// The private mechanism in ERM mode on the truncated draws.
    Mechanism,
}

impl std::str::FromStr for Solver {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Solver as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub lipschitz: Option<f64>,
    /// Comma-separated sample budgets; defaults to d, 4d, 16d, 64d.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    /// Mechanism privacy parameters.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Mechanism round override.
    #[arg(long)]
    pub rounds: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub d: usize,
    pub p: f64,
    pub radius: f64,
    pub lipschitz: f64,
    pub budgets: Vec<usize>,
    pub reps: usize,
    pub solver: Solver,
    pub epsilon: f64,
    pub delta: f64,
    pub rounds: Option<u64>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub fn resolve(args: BenchArgs, file: &FileSettings, out_dir: Option<PathBuf>) -> Result<BenchConfig> {
    let d = file.get(args.d, "d", 8)?;
    let budgets = file.list(args.budgets, "budgets")?.unwrap_or_else(|| vec![d, 4 * d, 16 * d, 64 * d]);
    if budgets.is_empty() || budgets.contains(&0) {
        return Err(Error::Config("budgets must be positive".into()));
    }
    Ok(BenchConfig {
        d,
        p: file.get(args.p, "p", 2.0)?,
        radius: file.get(args.radius, "radius", 1.0)?,
        lipschitz: file.get(args.lipschitz, "lipschitz", 1.0)?,
        budgets,
        reps: file.get(args.reps, "reps", 50)?,
        solver: file.get(args.solver, "solver", Solver::Erm)?,
        epsilon: file.get(args.epsilon, "epsilon", 1.0)?,
        delta: file.get(args.delta, "delta", 1e-6)?,
        rounds: file.opt(args.rounds, "rounds")?,
        seed: file.get(args.seed, "seed", 0)?,
        out_dir: file.out_dir(out_dir)?,
    })
}

pub fn run(cfg: &BenchConfig) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("bench", cfg, cfg.seed)?;
    let geom = LpGeometry::new(cfg.d, cfg.p, cfg.radius)?;
    let mut rng = seeded(cfg.seed);
    let rows = match cfg.solver {
        Solver::Erm => risk_table(&geom, cfg.lipschitz, &cfg.budgets, cfg.reps, false, &mut rng, |_, s, _| {
            Ok(erm_solution(s, &geom))
        })?,
        Solver::Mechanism => {
            let mech = MechanismConfig {
                rounds_override: cfg.rounds,
                ..MechanismConfig::default()
            };
            risk_table(&geom, cfg.lipschitz, &cfg.budgets, cfg.reps, true, &mut rng, |inst, s, rng| {
                let data = Dataset::new(s.to_vec(), None, cfg.lipschitz, inst.q)?;
                Ok(run_mechanism(&data, &geom, cfg.epsilon, cfg.delta, Mode::Erm, &mech, rng)?.solution)
            })?
        }
    };
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("bench_risk.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["k", "mean_excess_risk", "risk_se", "reference_curve", "ratio"])?;
    for r in &rows {
        w.write_record([
            r.k.to_string(),
            fmt_f64(r.mean_risk),
            fmt_f64(r.risk_se),
            fmt_f64(r.lower_bound),
            fmt_f64(r.mean_risk / r.lower_bound),
        ])?;
    }
    w.flush()?;
    manifest.outputs.push(path);
    Ok(manifest)
}
