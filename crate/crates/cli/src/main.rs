//! `llt`: proximal sampling, private optimization, diagnostics and
//! lower-bound benchmarks from the command line.
//!
//! Exit codes: 0 success, 1 failed diagnostics or I/O trouble, 2 invalid
//! configuration or input, 3 numerical failure.

mod bench;
mod diag;
mod manifest;
mod mechanism;
mod sample;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use llt_core::{Error, CHECK_NAMES};
use manifest::{RunManifest, BUILD_ID};
use settings::FileSettings;

#[derive(Debug, Parser)]
#[command(name = "llt", version = BUILD_ID, args_conflicts_with_subcommands = true, about = "Proximal sampling in l_p geometry and private convex optimization")]
struct Cli {
    /// `key = value` file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (else the config file, else $LLT_OUTPUT_DIR, else ./llt-out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Re-run the command recorded in a manifest.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the alternating proximal chain and write retained states as CSV.
    Sample(sample::SampleArgs),
    /// Run the private ERM/SCO mechanism on a CSV dataset.
    Dp(mechanism::DpArgs),
    /// Run numerical checks and report them as JSON.
    Diag(diag::DiagArgs),
    /// Tabulate excess risk against sample budget on hard instances.
    Bench(bench::BenchArgs),
}

/// Resolved configuration of any subcommand.
enum Resolved {
    Sample(sample::SampleConfig),
    Dp(mechanism::DpConfig),
    Diag(diag::DiagConfig),
    Bench(bench::BenchConfig),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 1,
        e if e.is_config() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> llt_core::Result<ExitCode> {
    let resolved = if let Some(path) = &cli.from_manifest {
        from_manifest(&RunManifest::read(path)?, cli.out_dir)?
    } else {
        let file = FileSettings::load(cli.config.as_deref())?;
        let resolved = match cli.command {
            None => return Err(Error::Config("a subcommand or --from-manifest is required".into())),
            Some(Command::Diag(args)) if args.list => {
                for name in CHECK_NAMES {
                    println!("{name}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            Some(Command::Sample(args)) => Resolved::Sample(sample::resolve(args, &file, cli.out_dir)?),
            Some(Command::Dp(args)) => Resolved::Dp(mechanism::resolve(args, &file, cli.out_dir)?),
            Some(Command::Diag(args)) => Resolved::Diag(diag::resolve(args, &file, cli.out_dir)?),
            Some(Command::Bench(args)) => Resolved::Bench(bench::resolve(args, &file, cli.out_dir)?),
        };
        file.finish()?;
        resolved
    };
    execute(resolved)
}

fn from_manifest(m: &RunManifest, out_dir: Option<PathBuf>) -> llt_core::Result<Resolved> {
    let resolved = match m.subcommand.as_str() {
        "sample" => {
            let mut c: sample::SampleConfig = m.config()?;
            c.out_dir = out_dir.unwrap_or(c.out_dir);
            Resolved::Sample(c)
        }
        "dp" => {
            let mut c: mechanism::DpConfig = m.config()?;
            c.out_dir = out_dir.unwrap_or(c.out_dir);
            Resolved::Dp(c)
        }
        "diag" => {
            let mut c: diag::DiagConfig = m.config()?;
            c.out_dir = out_dir.unwrap_or(c.out_dir);
            Resolved::Diag(c)
        }
        "bench" => {
            let mut c: bench::BenchConfig = m.config()?;
            c.out_dir = out_dir.unwrap_or(c.out_dir);
            Resolved::Bench(c)
        }
        other => return Err(Error::Config(format!("manifest has unknown subcommand `{other}`"))),
    };
    Ok(resolved)
}

fn execute(resolved: Resolved) -> llt_core::Result<ExitCode> {
    let (mut manifest, dir, name, code) = match resolved {
        Resolved::Sample(c) => (sample::run(&c)?, c.out_dir, "sample_manifest.json", ExitCode::SUCCESS),
        Resolved::Dp(c) => (mechanism::run(&c)?, c.out_dir, "dp_manifest.json", ExitCode::SUCCESS),
        Resolved::Diag(c) => {
            let (m, report) = diag::run(&c)?;
            let code = if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(1) };
            (m, c.out_dir, "diag_manifest.json", code)
        }
        Resolved::Bench(c) => (bench::run(&c)?, c.out_dir, "bench_manifest.json", ExitCode::SUCCESS),
    };
    let path = manifest.write(&dir, name)?;
    eprintln!("manifest: {}", path.display());
    Ok(code)
}
