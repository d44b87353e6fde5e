//! Settings for each command. Values come from flags, then an optional JSON
//! config file whose keys mirror the flag names, then defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Bckm,
    Lloyd,
    LpRound,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Bckm => "bckm",
            Algo::Lloyd => "lloyd",
            Algo::LpRound => "lp-round",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GenConfig {
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub link_fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl GenConfig {
    pub fn defaults() -> Value {
        json!({"k": 3, "n": 50, "d": 2, "sigma": 0.1, "link-fraction": 0.2, "seed": 0})
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitConfig {
    pub data: PathBuf,
    pub constraints: Option<PathBuf>,
    pub k: Option<usize>,
    pub algo: Algo,
    pub lambda: f64,
    pub eps_c: f64,
    pub max_iter: usize,
    pub rho0: f64,
    pub kappa: f64,
    pub assign_max_iter: usize,
    pub eps_s: f64,
    pub rho_cap: f64,
    pub retry: bool,
    pub dive: bool,
    pub restarts: usize,
    pub seed: u64,
    pub dump_lp: Option<PathBuf>,
    pub out: PathBuf,
}

impl FitConfig {
    pub fn defaults() -> Value {
        json!({
            "constraints": null, "k": null, "algo": "bckm",
            "lambda": 1e-4, "eps-c": 1e-6, "max-iter": 100,
            "rho0": 0.5, "kappa": 1.1, "assign-max-iter": 100, "eps-s": 1e-6, "rho-cap": 1e12,
            "retry": true, "dive": true, "restarts": 10, "seed": 0, "dump-lp": null,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvalConfig {
    pub labels: PathBuf,
    pub truth: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub constraints: Option<PathBuf>,
    pub k: Option<usize>,
    pub out: PathBuf,
}

impl EvalConfig {
    pub fn defaults() -> Value {
        json!({"truth": null, "data": null, "constraints": null, "k": null})
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BenchConfig {
    pub k_list: Vec<usize>,
    pub algos: Vec<Algo>,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub link_fraction: f64,
    pub seeds: usize,
    pub seed: u64,
    pub lambda: f64,
    pub out: PathBuf,
}

impl BenchConfig {
    pub fn defaults() -> Value {
        json!({
            "k-list": [2, 5, 10], "algos": ["bckm", "lloyd", "lp-round"],
            "n": 50, "d": 2, "sigma": 0.1, "link-fraction": 0.2,
            "seeds": 3, "seed": 0, "lambda": 1e-4,
        })
    }
}

fn overlay(base: &mut Map<String, Value>, top: Value, source: &str) -> Result<()> {
    let Value::Object(top) = top else {
        bail!("{source} must be a JSON object");
    };
    for (key, value) in top {
        if !value.is_null() {
            base.insert(key, value);
        }
    }
    Ok(())
}

/// Merges `defaults`, the config file and the flags, later sources winning.
/// Flags left unset serialize as `null` and are skipped.
pub fn resolve<T: DeserializeOwned>(
    defaults: Value,
    config: Option<&Path>,
    flags: &impl Serialize,
) -> Result<T> {
    let mut merged = Map::new();
    overlay(&mut merged, defaults, "defaults")?;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        overlay(&mut merged, value, "config file")?;
    }
    overlay(&mut merged, serde_json::to_value(flags)?, "flags")?;
    serde_json::from_value(Value::Object(merged)).context("invalid settings")
}
