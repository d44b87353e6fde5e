//! Linear programs for the assignment step.
//!
//! [`LinearProgram`] is a backend-neutral model. The default backend is an
//! in-tree bounded-variable revised simplex ([`simplex`]) that returns basic
//! (vertex) solutions, preceded by a small presolve ([`presolve`]).

mod mps;
mod presolve;
mod simplex;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constraints::{emit_lp_rows, precheck_feasibility, ConstraintSet};
use crate::data::DistanceMatrix;
use crate::error::{Error, Result};

pub use mps::write_mps;
use presolve::Presolved;
use simplex::{Simplex, SimplexStatus};

/// Absolute tolerance used when verifying optimal outcomes.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    /// Assignment entry `S[i, j]`.
    Assign,
    /// Slack of `V - S <= gamma_plus`.
    GammaPlus,
    /// Slack of `S - V <= gamma_minus`.
    GammaMinus,
    /// Anything else; `i` and `j` are free-form.
    Aux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarKey {
    pub kind: VarKind,
    pub i: usize,
    pub j: usize,
}

impl VarKey {
    pub fn aux(i: usize) -> Self {
        Self {
            kind: VarKind::Aux,
            i,
            j: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub key: VarKey,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Eq => (lhs - self.rhs).abs(),
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
        }
    }
}

/// Minimize `c^T x + offset` subject to rows and per-variable bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    vars: Vec<Variable>,
    rows: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, key: VarKey, lower: f64, upper: f64, cost: f64) -> usize {
        self.vars.push(Variable {
            key,
            lower,
            upper,
            cost,
        });
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Constraint { terms, sense, rhs });
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.vars[var].cost = cost;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.vars[var].lower = lower;
        self.vars[var].upper = upper;
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, x)| v.cost * x).sum()
    }

    /// Largest row or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x));
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        for (idx, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper || !v.cost.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "variable {idx} has bounds [{}, {}] and cost {}",
                    v.lower, v.upper, v.cost
                )));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(Error::InvalidInput(format!("variable {idx} has an empty domain")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidInput(format!("row {r} has rhs {}", row.rhs)));
            }
            if let Some(&(v, a)) = row
                .terms
                .iter()
                .find(|&&(v, a)| v >= self.vars.len() || !a.is_finite())
            {
                return Err(Error::InvalidInput(format!(
                    "row {r} references variable {v} with coefficient {a}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// One value per variable of the original program.
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub pivots: usize,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Converts non-optimal outcomes into errors.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            LpStatus::Infeasible => Err(Error::Infeasible(
                "the assignment linear program has no feasible point".into(),
            )),
            LpStatus::Unbounded => Err(Error::Unbounded),
            LpStatus::IterationLimit => Err(Error::IterationLimit(self.pivots)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Pivot cap; `None` scales with problem size.
    pub max_pivots: Option<usize>,
    /// Reuse the previous basis when the presolved structure is unchanged.
    pub warm_start: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_pivots: None,
            warm_start: true,
        }
    }
}

/// A reusable solver. Successive programs that differ only in their
/// objective are warm-started from the previous optimal basis.
#[derive(Debug, Default)]
pub struct LpSolver {
    options: SolverOptions,
    state: Option<(Presolved, Simplex)>,
}

impl LpSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self {
            options,
            state: None,
        }
    }

    pub fn solve(&mut self, lp: &LinearProgram) -> Result<LpOutcome> {
        lp.validate()?;
        let pre = match Presolved::new(lp) {
            Ok(p) => p,
            Err(presolve::PresolveInfeasible) => {
                return Ok(LpOutcome {
                    status: LpStatus::Infeasible,
                    values: vec![0.0; lp.n_vars()],
                    objective_value: f64::NAN,
                    pivots: 0,
                });
            }
        };
        let warm = self.options.warm_start
            && self
                .state
                .as_ref()
                .is_some_and(|(old, _)| old.same_structure(&pre));
        let mut simplex = match self.state.take() {
            Some((_, mut s)) if warm => {
                s.set_costs(pre.reduced_costs());
                s
            }
            _ => Simplex::new(&pre),
        };
        let cap = self
            .options
            .max_pivots
            .unwrap_or(50 * (pre.n_rows() + pre.n_cols()) + 1000);
        let status = simplex.run(cap);
        let reduced = simplex.structural_values();
        let values = pre.postsolve(&reduced);
        let mut outcome = LpOutcome {
            status: match status {
                SimplexStatus::Optimal => LpStatus::Optimal,
                SimplexStatus::Infeasible => LpStatus::Infeasible,
                SimplexStatus::Unbounded => LpStatus::Unbounded,
                SimplexStatus::IterationLimit => LpStatus::IterationLimit,
            },
            objective_value: lp.objective_at(&values),
            values,
            pivots: simplex.pivots(),
        };
        if outcome.is_optimal() {
            let viol = lp.max_violation(&outcome.values);
            if viol > FEASIBILITY_TOL {
                return Err(Error::InvalidInput(format!(
                    "simplex returned a point violating the program by {viol:e}"
                )));
            }
            self.state = Some((pre, simplex));
        } else {
            outcome.objective_value = f64::NAN;
        }
        Ok(outcome)
    }
}

/// Solves a program from scratch with default options.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    LpSolver::new(SolverOptions::default()).solve(lp)
}

/// Variable index of `S[i, j]` in programs built by this module.
pub fn assign_var(k: usize, i: usize, j: usize) -> usize {
    j * k + i
}

fn check_shapes(y: &DistanceMatrix, cs: &ConstraintSet) -> Result<()> {
    if y.n_clusters() != cs.k() {
        return Err(Error::DimensionMismatch {
            what: "distance rows vs constraint clusters",
            left: (y.n_clusters(), y.n_points()),
            right: (cs.k(), y.n_points()),
        });
    }
    precheck_feasibility(cs, y.n_points(), cs.k()).into_result()
}

fn add_assignment_vars(lp: &mut LinearProgram, y: &DistanceMatrix) {
    let (k, n) = (y.n_clusters(), y.n_points());
    for j in 0..n {
        for i in 0..k {
            lp.add_var(
                VarKey {
                    kind: VarKind::Assign,
                    i,
                    j,
                },
                0.0,
                1.0,
                y.get(i, j),
            );
        }
    }
}

fn add_polytope_rows(lp: &mut LinearProgram, cs: &ConstraintSet, k: usize, n: usize) {
    for row in emit_lp_rows(cs, n, k) {
        let terms = row
            .terms
            .iter()
            .map(|&((i, j), a)| (assign_var(k, i, j), a))
            .collect();
        lp.add_row(terms, row.sense, row.rhs);
    }
}

/// The relaxed assignment program: minimize `<Y, S>` over the constraint
/// polytope intersected with `[0, 1]^{k x N}`.
pub fn build_relaxed_lp(y: &DistanceMatrix, cs: &ConstraintSet) -> Result<LinearProgram> {
    check_shapes(y, cs)?;
    let mut lp = LinearProgram::new();
    add_assignment_vars(&mut lp, y);
    add_polytope_rows(&mut lp, cs, y.n_clusters(), y.n_points());
    Ok(lp)
}

/// The l1-penalty program for a fixed binary `V`:
/// minimize `<Y, S> + sum rho_plus * gamma_plus + sum rho_minus * gamma_minus`
/// with `V - S <= gamma_plus`, `S - V <= gamma_minus`, `gamma >= 0`, plus the
/// polytope rows.
pub fn build_penalty_lp(
    y: &DistanceMatrix,
    cs: &ConstraintSet,
    v: &DMatrix<f64>,
    rho_plus: &DMatrix<f64>,
    rho_minus: &DMatrix<f64>,
) -> Result<LinearProgram> {
    check_shapes(y, cs)?;
    let (k, n) = (y.n_clusters(), y.n_points());
    for (name, m) in [("V", v), ("rho_plus", rho_plus), ("rho_minus", rho_minus)] {
        if m.shape() != (k, n) {
            return Err(Error::DimensionMismatch {
                what: name,
                left: m.shape(),
                right: (k, n),
            });
        }
    }
    if v.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::NotBinary);
    }
    if let Some(r) = rho_plus
        .iter()
        .chain(rho_minus.iter())
        .find(|r| !(r.is_finite() && **r > 0.0))
    {
        return Err(Error::InvalidInput(format!(
            "penalty weights must be positive and finite, found {r}"
        )));
    }
    let mut lp = LinearProgram::new();
    add_assignment_vars(&mut lp, y);
    let kn = k * n;
    for (kind, rho) in [(VarKind::GammaPlus, rho_plus), (VarKind::GammaMinus, rho_minus)] {
        for j in 0..n {
            for i in 0..k {
                lp.add_var(VarKey { kind, i, j }, 0.0, f64::INFINITY, rho[(i, j)]);
            }
        }
    }
    for j in 0..n {
        for i in 0..k {
            let s = assign_var(k, i, j);
            let vij = v[(i, j)];
            // V - S <= gamma_plus  <=>  -S - gamma_plus <= -V
            lp.add_row(vec![(s, -1.0), (kn + s, -1.0)], Sense::Le, -vij);
            // S - V <= gamma_minus  <=>  S - gamma_minus <= V
            lp.add_row(vec![(s, 1.0), (2 * kn + s, -1.0)], Sense::Le, vij);
        }
    }
    add_polytope_rows(&mut lp, cs, k, n);
    Ok(lp)
}

/// Reads the `k x N` assignment block out of an outcome, clamped to `[0, 1]`.
pub fn extract_assignment(outcome: &LpOutcome, k: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, n, |i, j| {
        outcome.values[assign_var(k, i, j)].clamp(0.0, 1.0)
    })
}
