//! Constrained K-Means by alternating a regularized centroid update with the
//! penalty assignment step.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::{lloyd, LloydConfig};
use crate::constraints::{audit, precheck_feasibility, ConstraintSet, ViolationReport};
use crate::data::{
    compute_distance_matrix, labels_from_assignment, AssignmentMatrix, CentroidMatrix,
    DataMatrix, LabelVector,
};
use crate::error::{Error, Result};
use crate::lp::{LpSolver, SolverOptions};
use crate::metrics::wcss_labels;
use crate::penalty::{assign_with_solver, AssignmentConfig, AssignmentDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BckmConfig {
    pub lambda: f64,
    pub eps_c: f64,
    pub max_iter: usize,
    pub assignment: AssignmentConfig,
    pub seed: u64,
    /// Lloyd restarts used to build the initial assignment.
    pub init_restarts: usize,
    pub init_max_iter: usize,
}

impl Default for BckmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            eps_c: 1e-6,
            max_iter: 100,
            assignment: AssignmentConfig::default(),
            seed: 0,
            init_restarts: 10,
            init_max_iter: 100,
        }
    }
}

impl BckmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.eps_c >= 0.0) || self.max_iter == 0 || self.init_restarts == 0 {
            return Err(Error::InvalidInput(format!("invalid configuration {self:?}")));
        }
        self.assignment.validate()
    }

    pub(crate) fn lloyd_config(&self) -> LloydConfig {
        LloydConfig {
            restarts: self.init_restarts,
            max_iter: self.init_max_iter,
            seed: self.seed,
        }
    }
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterIteration {
    pub iteration: usize,
    /// `||C^t - C^{t-1}||_F^2`, absent when there is no previous centroid.
    pub centroid_shift: Option<f64>,
    /// `<Y^t, S^t>` after the assignment step.
    pub surrogate: f64,
    pub assignment: AssignmentDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub algorithm: String,
    pub centroids: CentroidMatrix,
    #[serde(skip)]
    pub assignment: AssignmentMatrix,
    pub labels: LabelVector,
    pub wcss: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub surrogate_monotone: bool,
    pub violations: ViolationReport,
    pub history: Vec<OuterIteration>,
    pub runtime_seconds: f64,
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Re-audits the assignment against `cs`.
    pub fn audit_against(&mut self, cs: &ConstraintSet) -> Result<()> {
        self.violations = audit(&self.assignment, cs, crate::data::BINARY_TOL)?;
        Ok(())
    }

    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Minimizer of `||X - C S||_F^2 + lambda ||C||_F^2`:
/// `C = X S^T (S S^T + lambda I)^{-1}`.
pub fn update_centroids(x: &DataMatrix, s: &AssignmentMatrix, lambda: f64) -> Result<CentroidMatrix> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be > 0, got {lambda}")));
    }
    if s.n_points() != x.n_points() {
        return Err(Error::DimensionMismatch {
            what: "assignment vs data",
            left: (s.n_clusters(), s.n_points()),
            right: (x.dim(), x.n_points()),
        });
    }
    let s = s.as_matrix();
    let k = s.nrows();
    let gram = s * s.transpose() + DMatrix::identity(k, k) * lambda;
    let rhs = s * x.as_matrix().transpose();
    // Binary assignments give a diagonal Gram matrix; divide directly.
    let diagonal = (0..k).all(|i| (0..k).all(|j| i == j || gram[(i, j)] == 0.0));
    if diagonal {
        let mut c = rhs.transpose();
        for i in 0..k {
            let g = gram[(i, i)];
            c.column_mut(i).apply(|v| *v /= g);
        }
        return CentroidMatrix::new(c);
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("S S^T + lambda I is not positive definite".into()))?;
    CentroidMatrix::new(chol.solve(&rhs).transpose())
}

/// Index of the largest entry of each column, lowest index on ties.
pub(crate) fn argmax_labels(s: &DMatrix<f64>) -> LabelVector {
    let labels = s
        .column_iter()
        .map(|c| {
            let mut best = 0;
            for i in 1..c.len() {
                if c[i] > c[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    LabelVector::new(labels, s.nrows()).expect("argmax within range")
}

/// Fits with the Lloyd initialization.
pub fn fit(x: &DataMatrix, cs: &ConstraintSet, cfg: &BckmConfig) -> Result<FitResult> {
    fit_from(x, cs, cfg, None)
}

/// Fits from `s0` when given, otherwise from the best Lloyd run.
pub fn fit_from(
    x: &DataMatrix,
    cs: &ConstraintSet,
    cfg: &BckmConfig,
    s0: Option<&AssignmentMatrix>,
) -> Result<FitResult> {
    let start = Instant::now();
    cfg.validate()?;
    let (k, n) = (cs.k(), x.n_points());
    if k > n {
        return Err(Error::InvalidInput(format!("k = {k} exceeds N = {n}")));
    }
    precheck_feasibility(cs, n, k).into_result()?;

    let (mut s, mut c_prev) = match s0 {
        Some(s0) => {
            if (s0.n_clusters(), s0.n_points()) != (k, n) {
                return Err(Error::DimensionMismatch {
                    what: "initial assignment",
                    left: (s0.n_clusters(), s0.n_points()),
                    right: (k, n),
                });
            }
            (s0.clone(), None)
        }
        None => {
            let init = lloyd(x, k, &cfg.lloyd_config())?;
            (init.assignment, Some(init.centroids))
        }
    };

    let mut solver = LpSolver::new(SolverOptions {
        warm_start: cfg.assignment.warm_start,
        ..Default::default()
    });
    let mut history: Vec<OuterIteration> = Vec::new();
    let mut monotone = true;
    let mut outer_converged = false;
    let mut centroids = None;
    for t in 1..=cfg.max_iter {
        let c = update_centroids(x, &s, cfg.lambda)?;
        let y = compute_distance_matrix(x, &c)?;
        let out = assign_with_solver(&mut solver, &y, s.as_matrix(), cs, &cfg.assignment)?;
        let surrogate = out.diagnostics.objective;
        if out.diagnostics.converged {
            let prev = history
                .iter()
                .rev()
                .find(|h| h.assignment.converged)
                .map(|h| h.surrogate);
            if let Some(prev) = prev {
                if surrogate > prev + 1e-7 * prev.abs().max(1.0) {
                    monotone = false;
                }
            }
        }
        let shift = c_prev.as_ref().map(|p| c.frobenius_sq_diff(p));
        history.push(OuterIteration {
            iteration: t,
            centroid_shift: shift,
            surrogate,
            assignment: out.diagnostics,
        });
        s = out.assignment;
        c_prev = Some(c.clone());
        centroids = Some(c);
        if shift.is_some_and(|d| d <= cfg.eps_c) {
            outer_converged = true;
            break;
        }
    }
    let centroids = centroids.expect("at least one outer iteration");

    let last_ok = history.last().is_some_and(|h| h.assignment.converged);
    let assignment = if s.is_binary() {
        s
    } else {
        AssignmentMatrix::from_labels(&argmax_labels(s.as_matrix()))
    };
    let labels = labels_from_assignment(&assignment)?;
    let violations = audit(&assignment, cs, cfg.assignment.binary_tol)?;
    let converged = outer_converged && last_ok && monotone && violations.is_empty();
    Ok(FitResult {
        algorithm: "bckm".into(),
        wcss: wcss_labels(x, &centroids, &labels)?,
        centroids,
        assignment,
        labels,
        outer_iterations: history.len(),
        converged,
        surrogate_monotone: monotone,
        violations,
        history,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}
