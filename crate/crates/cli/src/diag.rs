use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use llt_core::{diagnostics_suite, DiagnosticsConfig, DiagnosticsReport, Result};

use crate::manifest::{write_json, RunManifest};
use crate::settings::FileSettings;

#[derive(Debug, Args)]
pub struct DiagArgs {
    /// Print the check names and exit.
    #[arg(long)]
    pub list: bool,
    /// Run only this check; repeatable.
    #[arg(long = "check")]
    pub checks: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub directions: Option<usize>,
    #[arg(long)]
    pub concordance_pairs: Option<usize>,
    #[arg(long)]
    pub range_points: Option<usize>,
    #[arg(long)]
    pub growth_samples: Option<usize>,
    #[arg(long)]
    pub closed_form_cases: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagConfig {
    pub checks: Vec<String>,
    pub suite: DiagnosticsConfig,
    pub out_dir: PathBuf,
}

pub fn resolve(args: DiagArgs, file: &FileSettings, out_dir: Option<PathBuf>) -> Result<DiagConfig> {
    let d = DiagnosticsConfig::default();
    let flag_checks = (!args.checks.is_empty()).then_some(args.checks);
    Ok(DiagConfig {
        checks: file.list(flag_checks, "check")?.unwrap_or_default(),
        suite: DiagnosticsConfig {
            seed: file.get(args.seed, "seed", d.seed)?,
            mc_samples: file.get(args.mc_samples, "mc-samples", d.mc_samples)?,
            directions: file.get(args.directions, "directions", d.directions)?,
            concordance_pairs: file.get(args.concordance_pairs, "concordance-pairs", d.concordance_pairs)?,
            range_points: file.get(args.range_points, "range-points", d.range_points)?,
            growth_samples: file.get(args.growth_samples, "growth-samples", d.growth_samples)?,
            closed_form_cases: file.get(args.closed_form_cases, "closed-form-cases", d.closed_form_cases)?,
        },
        out_dir: file.out_dir(out_dir)?,
    })
}

pub fn run(cfg: &DiagConfig) -> Result<(RunManifest, DiagnosticsReport)> {
    let mut manifest = RunManifest::new("diag", cfg, cfg.suite.seed)?;
    let report = diagnostics_suite(&cfg.suite, &cfg.checks)?;
    let path = cfg.out_dir.join("diag_report.json");
    write_json(&path, &report)?;
    for c in &report.checks {
        println!("{}", serde_json::to_string(c).expect("check records serialize"));
    }
    manifest.outputs.push(path);
    Ok((manifest, report))
}
