use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bckm_core::baselines::{lloyd, lp_relax_round, LloydConfig};
use bckm_core::bckm::{fit, BckmConfig, FitResult};
use bckm_core::constraints::{ConstraintFile, ConstraintSet};
use bckm_core::csv_io::{load_csv, load_labels, save_columns, save_csv, save_labels, write_atomic};
use bckm_core::data::{compute_distance_matrix, DataMatrix, LabelVector};
use bckm_core::lp::{build_relaxed_lp, write_mps};
use bckm_core::metrics::{evaluate_labels, nmi, EvalReport};
use bckm_core::penalty::AssignmentConfig;
use bckm_core::synth::{generate_instance, SynthSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Algo, BenchConfig, EvalConfig, FitConfig, GenConfig};

/// Written next to the outputs of every command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub version: String,
}

impl RunManifest {
    fn write(
        command: &str,
        config: &impl Serialize,
        seed: Option<u64>,
        inputs: Vec<PathBuf>,
        mut outputs: Vec<PathBuf>,
        out: &Path,
        start: Instant,
    ) -> Result<()> {
        let path = out.join("manifest.json");
        outputs.push(path.clone());
        let manifest = RunManifest {
            command: command.into(),
            config: serde_json::to_value(config)?,
            seed,
            inputs,
            outputs,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").into(),
        };
        write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(())
    }
}

fn ensure_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

pub fn gen(cfg: &GenConfig) -> Result<()> {
    let start = Instant::now();
    ensure_dir(&cfg.out)?;
    let spec = SynthSpec {
        k: cfg.k,
        n: cfg.n,
        d: cfg.d,
        sigma: cfg.sigma,
        link_fraction: cfg.link_fraction,
        seed: cfg.seed,
    };
    let (x, truth, cs) = generate_instance(&spec)?;
    let outputs = vec![
        cfg.out.join("data.csv"),
        cfg.out.join("truth.csv"),
        cfg.out.join("constraints.json"),
    ];
    save_csv(&outputs[0], &x)?;
    save_labels(&outputs[1], &truth)?;
    cs.save_json(&outputs[2])?;
    RunManifest::write("gen", cfg, Some(cfg.seed), vec![], outputs, &cfg.out, start)
}

/// `k` from the flag, else from the bounds in the constraint file.
fn resolve_k(k: Option<usize>, constraints: Option<&Path>) -> Result<Option<usize>> {
    if k.is_some() {
        return Ok(k);
    }
    let Some(path) = constraints else { return Ok(None) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ConstraintFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(file
        .lower
        .as_ref()
        .map(Vec::len)
        .or(file.upper.as_ref().map(Vec::len)))
}

fn load_constraints(path: Option<&Path>, k: usize) -> Result<ConstraintSet> {
    match path {
        Some(p) => Ok(ConstraintSet::load_json(p, k)?),
        None => Ok(ConstraintSet::unconstrained(k)),
    }
}

fn bckm_config(cfg: &FitConfig) -> BckmConfig {
    BckmConfig {
        lambda: cfg.lambda,
        eps_c: cfg.eps_c,
        max_iter: cfg.max_iter,
        assignment: AssignmentConfig {
            rho0: cfg.rho0,
            kappa: cfg.kappa,
            max_iter: cfg.assign_max_iter,
            eps_s: cfg.eps_s,
            rho_cap: cfg.rho_cap,
            retry_with_squared_kappa: cfg.retry,
            dive: cfg.dive,
            ..Default::default()
        },
        seed: cfg.seed,
        init_restarts: cfg.restarts,
        ..Default::default()
    }
}

fn run_algo(algo: Algo, x: &DataMatrix, cs: &ConstraintSet, cfg: &BckmConfig) -> Result<FitResult> {
    Ok(match algo {
        Algo::Bckm => fit(x, cs, cfg)?,
        Algo::Lloyd => {
            let lc = LloydConfig {
                restarts: cfg.init_restarts,
                max_iter: cfg.max_iter,
                seed: cfg.seed,
            };
            let mut res = lloyd(x, cs.k(), &lc)?;
            res.audit_against(cs)?;
            res
        }
        Algo::LpRound => lp_relax_round(x, cs.k(), cs, cfg)?,
    })
}

/// Returns whether the fit converged.
pub fn fit_cmd(cfg: &FitConfig) -> Result<bool> {
    let start = Instant::now();
    ensure_dir(&cfg.out)?;
    let x = load_csv(&cfg.data)?;
    let Some(k) = resolve_k(cfg.k, cfg.constraints.as_deref())? else {
        bail!("the number of clusters is unknown: pass --k or a constraint file with bounds");
    };
    let cs = load_constraints(cfg.constraints.as_deref(), k)?;
    let res = run_algo(cfg.algo, &x, &cs, &bckm_config(cfg))?;

    let mut outputs = vec![
        cfg.out.join("labels.csv"),
        cfg.out.join("centroids.csv"),
        cfg.out.join("result.json"),
    ];
    save_labels(&outputs[0], &res.labels)?;
    save_columns(&outputs[1], res.centroids.as_matrix())?;
    write_atomic(&outputs[2], res.to_json()?.as_bytes())?;
    if let Some(path) = &cfg.dump_lp {
        // relaxed assignment program at the final centroids
        let y = compute_distance_matrix(&x, &res.centroids)?;
        let lp = build_relaxed_lp(&y, &cs)?;
        write_atomic(path, write_mps(&lp, "ASSIGN").as_bytes())?;
        outputs.push(path.clone());
    }
    let mut inputs = vec![cfg.data.clone()];
    inputs.extend(cfg.constraints.clone());
    RunManifest::write("fit", cfg, Some(cfg.seed), inputs, outputs, &cfg.out, start)?;

    if !res.violations.is_empty() {
        eprintln!(
            "{}: {} constraint violations (see result.json)",
            cfg.algo.name(),
            res.violations.total()
        );
    }
    Ok(res.converged)
}

pub fn eval(cfg: &EvalConfig) -> Result<EvalReport> {
    let start = Instant::now();
    ensure_dir(&cfg.out)?;
    let raw = load_labels(&cfg.labels)?;
    let k = resolve_k(cfg.k, cfg.constraints.as_deref())?.unwrap_or(raw.n_clusters());
    let labels = LabelVector::new(raw.as_slice().to_vec(), k)?;
    let cs = load_constraints(cfg.constraints.as_deref(), k)?;
    let truth = cfg.truth.as_ref().map(load_labels).transpose()?;
    let x = cfg.data.as_ref().map(load_csv).transpose()?;
    let report = evaluate_labels(&labels, x.as_ref(), truth.as_ref(), &cs)?;

    let outputs = vec![cfg.out.join("eval.json"), cfg.out.join("eval.csv")];
    write_atomic(&outputs[0], serde_json::to_string_pretty(&report)?.as_bytes())?;
    let csv = format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row());
    write_atomic(&outputs[1], csv.as_bytes())?;
    let mut inputs = vec![cfg.labels.clone()];
    inputs.extend(cfg.truth.clone());
    inputs.extend(cfg.data.clone());
    inputs.extend(cfg.constraints.clone());
    RunManifest::write("eval", cfg, None, inputs, outputs, &cfg.out, start)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub k: usize,
    pub algo: &'static str,
    pub seed: u64,
    pub nmi: f64,
    pub seconds: f64,
    pub feasible: bool,
}

pub const BENCH_HEADER: &str = "k,algo,seed,nmi,seconds,feasible";

pub fn bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let start = Instant::now();
    if cfg.k_list.is_empty() || cfg.algos.is_empty() || cfg.seeds == 0 {
        bail!("bench needs at least one k, one algorithm and one seed");
    }
    let cells = cfg.out.join("cells");
    ensure_dir(&cells)?;
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for &k in &cfg.k_list {
        for seed in cfg.seed..cfg.seed + cfg.seeds as u64 {
            let mut spec = SynthSpec::new(k, cfg.n, cfg.d, cfg.sigma, seed);
            spec.link_fraction = cfg.link_fraction;
            let (x, truth, cs) = generate_instance(&spec)?;
            let fit_cfg = BckmConfig {
                lambda: cfg.lambda,
                seed,
                ..Default::default()
            };
            for &algo in &cfg.algos {
                let res = run_algo(algo, &x, &cs, &fit_cfg)?;
                let dir = cells.join(format!("k{k}-{}-seed{seed}", algo.name()));
                ensure_dir(&dir)?;
                save_labels(dir.join("labels.csv"), &res.labels)?;
                save_labels(dir.join("truth.csv"), &truth)?;
                outputs.push(dir);
                rows.push(BenchRow {
                    k,
                    algo: algo.name(),
                    seed,
                    nmi: nmi(res.labels.as_slice(), truth.as_slice())?,
                    seconds: res.runtime_seconds,
                    feasible: res.violations.is_empty(),
                });
            }
        }
    }
    let mut csv = String::from(BENCH_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{},{}\n", r.k, r.algo, r.seed, r.nmi, r.seconds, r.feasible));
    }
    let table = cfg.out.join("bench.csv");
    write_atomic(&table, csv.as_bytes())?;
    outputs.insert(0, table);
    RunManifest::write("bench", cfg, Some(cfg.seed), vec![], outputs, &cfg.out, start)?;
    Ok(rows)
}
