//! Reference algorithms: Lloyd's K-Means with K-Means++ seeding, and an
//! LP-relax-then-round constrained baseline.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bckm::{argmax_labels, update_centroids, BckmConfig, FitResult};
use crate::constraints::{audit, precheck_feasibility, ConstraintSet, ViolationReport};
use crate::data::{
    compute_distance_matrix, AssignmentMatrix, CentroidMatrix, DataMatrix, DistanceMatrix,
    LabelVector,
};
use crate::error::{Error, Result};
use crate::lp::{build_relaxed_lp, extract_assignment, LpSolver, SolverOptions};
use crate::metrics::{cluster_means, wcss_labels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LloydConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LloydConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 100,
            seed: 0,
        }
    }
}

fn check_k(x: &DataMatrix, k: usize) -> Result<()> {
    if k == 0 || k > x.n_points() {
        return Err(Error::InvalidInput(format!(
            "k = {k} must lie in [1, N = {}]",
            x.n_points()
        )));
    }
    Ok(())
}

fn kmeanspp_indices(x: &DataMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.n_points();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|j| (x.point(j) - x.point(chosen[0])).norm_squared())
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (j, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(j);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // Every point coincides with a chosen one; keep indices distinct.
            let free: Vec<usize> = (0..n).filter(|j| !chosen.contains(j)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (j, w) in d2.iter_mut().enumerate() {
            *w = w.min((x.point(j) - x.point(next)).norm_squared());
        }
    }
    chosen
}

/// K-Means++ seeding: `k` distinct data columns, each drawn with probability
/// proportional to its squared distance from the nearest earlier pick.
pub fn kmeanspp_seed(x: &DataMatrix, k: usize, seed: u64) -> Result<CentroidMatrix> {
    check_k(x, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = kmeanspp_indices(x, k, &mut rng);
    CentroidMatrix::from_centroids(&idx.iter().map(|&j| x.point(j).iter().copied().collect()).collect::<Vec<_>>())
}

fn nearest_labels(y: &DistanceMatrix) -> Vec<usize> {
    argmax_labels(&(-y.as_matrix())).as_slice().to_vec()
}

/// One Lloyd run from fixed initial centroids.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub centroids: CentroidMatrix,
    pub labels: LabelVector,
    pub wcss: f64,
    /// WCSS of the initial centroids with nearest-centroid labels.
    pub initial_wcss: f64,
    /// WCSS after each mean update.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn lloyd_from(x: &DataMatrix, init: &CentroidMatrix, max_iter: usize) -> Result<LloydRun> {
    let k = init.n_clusters();
    check_k(x, k)?;
    let y = compute_distance_matrix(x, init)?;
    let mut labels = nearest_labels(&y);
    let initial_wcss = labels.iter().enumerate().map(|(j, &l)| y.get(l, j)).sum();
    let mut centroids = init.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        reseed_empty(x, &centroids, &mut labels, k);
        let lv = LabelVector::new(labels.clone(), k)?;
        centroids = cluster_means(x, &lv)?;
        trace.push(wcss_labels(x, &centroids, &lv)?);
        let next = nearest_labels(&compute_distance_matrix(x, &centroids)?);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    let labels = LabelVector::new(labels, k)?;
    let wcss = wcss_labels(x, &centroids, &labels)?;
    Ok(LloydRun {
        centroids,
        labels,
        wcss,
        initial_wcss,
        trace,
        iterations,
        converged,
    })
}

/// Moves the point farthest from its centroid, among clusters with more
/// than one member, into each empty cluster.
fn reseed_empty(x: &DataMatrix, c: &CentroidMatrix, labels: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for e in 0..k {
        if sizes[e] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&j| sizes[labels[j]] > 1)
            .map(|j| (j, (x.point(j) - c.centroid(labels[j])).norm_squared()))
            .fold(None::<(usize, f64)>, |best, (j, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((j, d)),
            });
        if let Some((j, _)) = far {
            sizes[labels[j]] -= 1;
            labels[j] = e;
            sizes[e] = 1;
        }
    }
}

/// Best of `cfg.restarts` K-Means++-seeded Lloyd runs (lowest WCSS, ties to
/// the earliest restart). Restart `r` seeds from stream `r` of `cfg.seed`.
pub fn lloyd(x: &DataMatrix, k: usize, cfg: &LloydConfig) -> Result<FitResult> {
    let start = Instant::now();
    check_k(x, k)?;
    if cfg.restarts == 0 {
        return Err(Error::InvalidInput("restarts must be >= 1".into()));
    }
    let mut best: Option<LloydRun> = None;
    for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let idx = kmeanspp_indices(x, k, &mut rng);
        let init = CentroidMatrix::new(x.as_matrix().select_columns(&idx))?;
        let run = lloyd_from(x, &init, cfg.max_iter)?;
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    Ok(FitResult {
        algorithm: "lloyd".into(),
        assignment: AssignmentMatrix::from_labels(&run.labels),
        centroids: run.centroids,
        labels: run.labels,
        wcss: run.wcss,
        outer_iterations: run.iterations,
        converged: run.converged,
        surrogate_monotone: true,
        violations: ViolationReport::default(),
        history: Vec::new(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Greedily moves single points, cheapest cost change first, until every
/// size bound holds or no admissible move remains. Links are not repaired.
pub fn repair_sizes(labels: &mut [usize], y: &DistanceMatrix, cs: &ConstraintSet) {
    let (k, n) = (cs.k(), labels.len());
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    let upper: Vec<usize> = (0..k).map(|i| cs.effective_upper(i, n)).collect();
    loop {
        let under = (0..k).find(|&i| sizes[i] < cs.lower()[i]);
        let over = (0..k).find(|&i| sizes[i] > upper[i]);
        let candidate = if let Some(a) = under {
            // pull the cheapest point from a cluster that can spare one
            (0..n)
                .filter(|&j| labels[j] != a && sizes[labels[j]] > cs.lower()[labels[j]])
                .map(|j| (j, a, y.get(a, j) - y.get(labels[j], j)))
                .min_by(|p, q| p.2.total_cmp(&q.2))
        } else if let Some(a) = over {
            (0..n)
                .filter(|&j| labels[j] == a)
                .flat_map(|j| {
                    (0..k)
                        .filter(|&b| b != a && sizes[b] < upper[b])
                        .map(move |b| (j, b, y.get(b, j) - y.get(a, j)))
                })
                .min_by(|p, q| p.2.total_cmp(&q.2))
        } else {
            return;
        };
        let Some((j, to, _)) = candidate else { return };
        sizes[labels[j]] -= 1;
        sizes[to] += 1;
        labels[j] = to;
    }
}

/// Alternates the centroid update with the relaxed assignment LP, rounding
/// each LP solution by column argmax followed by [`repair_sizes`].
pub fn lp_relax_round(
    x: &DataMatrix,
    k: usize,
    cs: &ConstraintSet,
    cfg: &BckmConfig,
) -> Result<FitResult> {
    let start = Instant::now();
    cfg.validate()?;
    if k != cs.k() {
        return Err(Error::InvalidInput(format!(
            "k = {k} but constraints describe {} clusters",
            cs.k()
        )));
    }
    let n = x.n_points();
    check_k(x, k)?;
    precheck_feasibility(cs, n, k).into_result()?;
    let init = lloyd(x, k, &cfg.lloyd_config())?;
    let mut s = init.assignment;
    let mut c_prev = Some(init.centroids);
    let mut solver = LpSolver::new(SolverOptions::default());
    let mut converged = false;
    let mut iterations = 0;
    let mut centroids = None;
    while iterations < cfg.max_iter {
        iterations += 1;
        let c = update_centroids(x, &s, cfg.lambda)?;
        let y = compute_distance_matrix(x, &c)?;
        let lp = build_relaxed_lp(&y, cs)?;
        let out = solver.solve(&lp)?.into_optimal()?;
        let relaxed = extract_assignment(&out, k, n);
        let mut labels = argmax_labels(&relaxed).as_slice().to_vec();
        repair_sizes(&mut labels, &y, cs);
        s = AssignmentMatrix::from_labels(&LabelVector::new(labels, k)?);
        let shift = c_prev.as_ref().map(|p| c.frobenius_sq_diff(p));
        c_prev = Some(c.clone());
        centroids = Some(c);
        if shift.is_some_and(|d| d <= cfg.eps_c) {
            converged = true;
            break;
        }
    }
    let centroids = centroids.expect("at least one iteration");
    let labels = crate::data::labels_from_assignment(&s)?;
    let violations = audit(&s, cs, cfg.assignment.binary_tol)?;
    Ok(FitResult {
        algorithm: "lp-round".into(),
        wcss: wcss_labels(x, &centroids, &labels)?,
        centroids,
        assignment: s,
        labels,
        outer_iterations: iterations,
        converged,
        surrogate_monotone: true,
        violations,
        history: Vec::new(),
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}
