mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::RunManifest;
use config::{resolve, Algo, BenchConfig, EvalConfig, FitConfig, GenConfig};

/// Constrained K-Means with size bounds and pairwise links.
#[derive(Parser)]
#[command(name = "bckm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-blob instance.
    Gen(GenArgs),
    /// Cluster a data set.
    Fit(FitArgs),
    /// Score a labeling.
    Eval(EvalArgs),
    /// Sweep k and algorithms over generated instances.
    Bench(BenchArgs),
    /// Rerun a command from its manifest.json.
    Replay(ReplayArgs),
}

// Unset flags serialize as null and fall through to the config file.

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct GenArgs {
    /// JSON file whose keys mirror the flag names
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Points per cluster
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    link_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct FitArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// CSV with one point per row
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Defaults to the number of bounds in the constraint file
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    algo: Option<Algo>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eps_c: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Iteration limit of the penalty loop
    #[arg(long)]
    assign_max_iter: Option<usize>,
    #[arg(long)]
    eps_s: Option<f64>,
    #[arg(long)]
    rho_cap: Option<f64>,
    /// Retry an unconverged assignment with kappa squared
    #[arg(long)]
    retry: Option<bool>,
    /// Round a fractional assignment by sequential fixing
    #[arg(long)]
    dive: Option<bool>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the relaxed assignment LP at the final centroids (MPS)
    #[arg(long)]
    dump_lp: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Enables the WCSS column
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct BenchArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_enum)]
    algos: Option<Vec<Algo>>,
    /// Points per cluster
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    link_fraction: Option<f64>,
    /// Number of seeds, counting up from --seed
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Write to this directory instead of the recorded one
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status of a successful command: 0, or 2 for an unconverged fit.
fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Gen(a) => {
            commands::gen(&resolve(GenConfig::defaults(), a.config.as_deref(), &a)?)?;
        }
        Command::Fit(a) => {
            let cfg: FitConfig = resolve(FitConfig::defaults(), a.config.as_deref(), &a)?;
            return Ok(if commands::fit_cmd(&cfg)? { 0 } else { 2 });
        }
        Command::Eval(a) => {
            let report = commands::eval(&resolve(EvalConfig::defaults(), a.config.as_deref(), &a)?)?;
            println!("{}", bckm_core::metrics::EvalReport::CSV_HEADER);
            println!("{}", report.csv_row());
        }
        Command::Bench(a) => {
            commands::bench(&resolve(BenchConfig::defaults(), a.config.as_deref(), &a)?)?;
        }
        Command::Replay(a) => return replay(&a),
    }
    Ok(0)
}

fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).context("manifest config does not match its command")
}

fn replay(a: &ReplayArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&a.manifest)
        .with_context(|| format!("reading {}", a.manifest.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let mut config = manifest.config;
    if let Some(out) = &a.out {
        config["out"] = serde_json::to_value(out)?;
    }
    match manifest.command.as_str() {
        "gen" => commands::gen(&parse(config)?)?,
        "fit" => return Ok(if commands::fit_cmd(&parse(config)?)? { 0 } else { 2 }),
        "eval" => {
            commands::eval(&parse(config)?)?;
        }
        "bench" => {
            commands::bench(&parse(config)?)?;
        }
        other => bail!("unknown command {other:?} in manifest"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
