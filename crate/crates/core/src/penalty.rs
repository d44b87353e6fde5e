//! The l1-penalty assignment step.
//!
//! Starting from `V = round(S0)` and uniform penalties, each iteration
//!
//! 1. solves the penalty linear program for `S` with `V` and the penalties
//!    fixed (`S` always stays inside the constraint polytope),
//! 2. sets every `V_ij` to whichever of 0 or 1 costs less given `S_ij`,
//! 3. multiplies `rho_minus_ij` by `kappa` where `V_ij = 0` and
//!    `rho_plus_ij` where `V_ij = 1`,
//!
//! until the squared Frobenius change of `(S, V)` drops below `eps_s` and `S`
//! agrees with `V`. A loop that ends on a fractional `S` is finished by a
//! short rounding dive.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constraints::{audit, precheck_feasibility, ConstraintSet, ViolationReport};
use crate::data::{
    compute_distance_matrix, AssignmentMatrix, CentroidMatrix, DataMatrix, DistanceMatrix,
    BINARY_TOL,
};
use crate::error::{Error, Result};
use crate::lp::{assign_var, build_penalty_lp, extract_assignment, LpSolver, LpStatus, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignmentConfig {
    pub rho0: f64,
    pub kappa: f64,
    pub max_iter: usize,
    pub eps_s: f64,
    pub binary_tol: f64,
    /// Penalties above this value end the loop as unconverged.
    pub rho_cap: f64,
    /// On non-convergence, run once more with `kappa^2`.
    pub retry_with_squared_kappa: bool,
    /// Warm-start each linear program from the previous basis.
    pub warm_start: bool,
    /// Also require `max |S - V| <= binary_tol` before stopping, so a
    /// fractional stationary `S` does not end the loop.
    pub require_agreement: bool,
    /// Round a fractional end point by sequential fixing (see [`dive`]).
    pub dive: bool,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        Self {
            rho0: 0.5,
            kappa: 1.1,
            max_iter: 100,
            eps_s: 1e-6,
            binary_tol: BINARY_TOL,
            rho_cap: 1e12,
            retry_with_squared_kappa: false,
            warm_start: true,
            require_agreement: true,
            dive: true,
        }
    }
}

impl AssignmentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho0 > 0.0
            && self.rho0.is_finite()
            && self.kappa > 1.0
            && self.kappa.is_finite()
            && self.max_iter >= 1
            && self.eps_s >= 0.0
            && self.binary_tol >= 0.0
            && self.rho_cap > self.rho0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid assignment configuration {self:?}"
            )))
        }
    }
}

/// Penalty weights and the binary auxiliary matrix.
///
/// Weights are stored as integer escalation counts so that every entry is
/// exactly `rho0 * kappa^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    rho0: f64,
    kappa: f64,
    steps_plus: DMatrix<u32>,
    steps_minus: DMatrix<u32>,
    rho_plus: DMatrix<f64>,
    rho_minus: DMatrix<f64>,
    v: DMatrix<f64>,
    iteration: usize,
}

impl PenaltyState {
    /// Uniform penalties `rho0` and `V` = elementwise rounding of `s0`.
    pub fn new(s0: &DMatrix<f64>, rho0: f64, kappa: f64) -> Self {
        let (k, n) = s0.shape();
        Self {
            rho0,
            kappa,
            steps_plus: DMatrix::zeros(k, n),
            steps_minus: DMatrix::zeros(k, n),
            rho_plus: DMatrix::from_element(k, n, rho0),
            rho_minus: DMatrix::from_element(k, n, rho0),
            v: s0.map(|x| x.round().clamp(0.0, 1.0)),
            iteration: 0,
        }
    }

    pub fn rho_plus(&self) -> &DMatrix<f64> {
        &self.rho_plus
    }

    pub fn rho_minus(&self) -> &DMatrix<f64> {
        &self.rho_minus
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Escalation counts `t` with `rho_plus = rho0 * kappa^t`.
    pub fn steps_plus(&self) -> &DMatrix<u32> {
        &self.steps_plus
    }

    pub fn steps_minus(&self) -> &DMatrix<u32> {
        &self.steps_minus
    }

    pub fn max_penalty(&self) -> f64 {
        self.rho_plus.max().max(self.rho_minus.max())
    }
}

/// Solves the penalty program for `S` with `V` and the penalties fixed.
pub fn update_s(
    y: &DistanceMatrix,
    cs: &ConstraintSet,
    state: &PenaltyState,
    cfg: &AssignmentConfig,
) -> Result<AssignmentMatrix> {
    let mut solver = LpSolver::new(SolverOptions {
        warm_start: cfg.warm_start,
        ..Default::default()
    });
    solve_s_step(&mut solver, y, cs, state)
}

fn solve_s_step(
    solver: &mut LpSolver,
    y: &DistanceMatrix,
    cs: &ConstraintSet,
    state: &PenaltyState,
) -> Result<AssignmentMatrix> {
    let lp = build_penalty_lp(y, cs, &state.v, &state.rho_plus, &state.rho_minus)?;
    let outcome = solver.solve(&lp)?.into_optimal()?;
    AssignmentMatrix::relaxed(extract_assignment(&outcome, y.n_clusters(), y.n_points()))
}

/// Elementwise binary minimizer of the penalty given `S`; ties go to 0.
pub fn update_v(s: &DMatrix<f64>, state: &PenaltyState) -> DMatrix<f64> {
    DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
        let sij = s[(i, j)];
        if state.rho_minus[(i, j)] * sij <= state.rho_plus[(i, j)] * (1.0 - sij) {
            0.0
        } else {
            1.0
        }
    })
}

/// Escalates `rho_minus` where `V = 0` and `rho_plus` where `V = 1`, and
/// stores `v_new` as the current auxiliary matrix.
pub fn update_penalties(mut state: PenaltyState, v_new: DMatrix<f64>) -> PenaltyState {
    for idx in 0..v_new.len() {
        if v_new[idx] == 0.0 {
            state.steps_minus[idx] += 1;
            state.rho_minus[idx] = state.rho0 * state.kappa.powi(state.steps_minus[idx] as i32);
        } else {
            state.steps_plus[idx] += 1;
            state.rho_plus[idx] = state.rho0 * state.kappa.powi(state.steps_plus[idx] as i32);
        }
    }
    state.v = v_new;
    state.iteration += 1;
    state
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDiagnostics {
    /// The returned `S` is a binary point of the constraint polytope.
    pub converged: bool,
    /// The penalty loop itself met its stopping test.
    pub pump_converged: bool,
    pub iterations: usize,
    /// Entries of the final `S` farther than the binary tolerance from {0, 1}.
    pub nonbinary: usize,
    pub violations: ViolationReport,
    /// `<Y, S>` at the final `S`.
    pub objective: f64,
    pub lp_pivots: usize,
    pub hit_penalty_cap: bool,
    pub retried: bool,
    /// Entries fixed by the rounding dive, when it ran and succeeded.
    pub dive_fixings: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct AssignmentOutcome {
    /// Binary when `diagnostics.converged`, otherwise the last relaxed `S`.
    pub assignment: AssignmentMatrix,
    pub diagnostics: AssignmentDiagnostics,
}

/// Runs the penalty loop for centroids `c`, starting from `s0`.
pub fn update_cluster_assignment(
    x: &DataMatrix,
    c: &CentroidMatrix,
    s0: &DMatrix<f64>,
    cs: &ConstraintSet,
    cfg: &AssignmentConfig,
) -> Result<AssignmentOutcome> {
    let y = compute_distance_matrix(x, c)?;
    assign_with_costs(&y, s0, cs, cfg)
}

/// Same as [`update_cluster_assignment`] with the distance matrix given.
pub fn assign_with_costs(
    y: &DistanceMatrix,
    s0: &DMatrix<f64>,
    cs: &ConstraintSet,
    cfg: &AssignmentConfig,
) -> Result<AssignmentOutcome> {
    let mut solver = LpSolver::new(SolverOptions {
        warm_start: cfg.warm_start,
        ..Default::default()
    });
    assign_with_solver(&mut solver, y, s0, cs, cfg)
}

pub(crate) fn assign_with_solver(
    solver: &mut LpSolver,
    y: &DistanceMatrix,
    s0: &DMatrix<f64>,
    cs: &ConstraintSet,
    cfg: &AssignmentConfig,
) -> Result<AssignmentOutcome> {
    cfg.validate()?;
    let (k, n) = (y.n_clusters(), y.n_points());
    if s0.shape() != (k, n) {
        return Err(Error::DimensionMismatch {
            what: "initial assignment vs distance matrix",
            left: s0.shape(),
            right: (k, n),
        });
    }
    if s0.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput(
            "initial assignment entries must lie in [0, 1]".into(),
        ));
    }
    precheck_feasibility(cs, n, k).into_result()?;

    let mut run = pump(solver, y, s0, cs, cfg)?;
    let mut retried = false;
    if !binary_feasible(&run.s, cs, cfg.binary_tol)? && cfg.retry_with_squared_kappa {
        let retry_cfg = AssignmentConfig {
            kappa: cfg.kappa * cfg.kappa,
            ..*cfg
        };
        let earlier = run.pivots;
        run = pump(solver, y, s0, cs, &retry_cfg)?;
        run.pivots += earlier;
        retried = true;
    }
    let pump_converged = run.stopped;
    let mut dive_fixings = None;
    if cfg.dive && !binary_feasible(&run.s, cs, cfg.binary_tol)? {
        if let Some((s, fixings)) = dive(solver, y, cs, &run, cfg.binary_tol)? {
            run.s = s;
            dive_fixings = Some(fixings);
        }
    }

    let relaxed = AssignmentMatrix::relaxed(run.s)?;
    let nonbinary = relaxed.nonbinary_count(cfg.binary_tol);
    let (assignment, violations) = match relaxed.snap_to_binary(cfg.binary_tol) {
        Some(b) => {
            let report = audit(&b, cs, cfg.binary_tol)?;
            if report.is_empty() {
                (b, report)
            } else {
                (relaxed.clone(), audit(&relaxed, cs, cfg.binary_tol)?)
            }
        }
        None => {
            let report = audit(&relaxed, cs, cfg.binary_tol)?;
            (relaxed, report)
        }
    };
    let converged = assignment.is_binary() && violations.is_empty();
    let objective = y.inner(&assignment);
    Ok(AssignmentOutcome {
        assignment,
        diagnostics: AssignmentDiagnostics {
            converged,
            pump_converged,
            iterations: run.iterations,
            nonbinary,
            violations,
            objective,
            lp_pivots: run.pivots,
            hit_penalty_cap: run.hit_cap,
            retried,
            dive_fixings,
        },
    })
}

fn binary_feasible(s: &DMatrix<f64>, cs: &ConstraintSet, tol: f64) -> Result<bool> {
    match AssignmentMatrix::relaxed(s.clone())?.snap_to_binary(tol) {
        Some(b) => Ok(audit(&b, cs, tol)?.is_empty()),
        None => Ok(false),
    }
}

struct PumpRun {
    s: DMatrix<f64>,
    state: PenaltyState,
    stopped: bool,
    hit_cap: bool,
    iterations: usize,
    pivots: usize,
}

fn pump(
    solver: &mut LpSolver,
    y: &DistanceMatrix,
    s0: &DMatrix<f64>,
    cs: &ConstraintSet,
    cfg: &AssignmentConfig,
) -> Result<PumpRun> {
    let mut state = PenaltyState::new(s0, cfg.rho0, cfg.kappa);
    let mut s_prev = s0.clone();
    let mut s = s0.clone();
    let mut stopped = false;
    let mut hit_cap = false;
    let mut iterations = 0;
    let mut pivots = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let lp = build_penalty_lp(y, cs, state.v(), state.rho_plus(), state.rho_minus())?;
        let outcome = solver.solve(&lp)?;
        pivots += outcome.pivots;
        let outcome = outcome.into_optimal()?;
        s = extract_assignment(&outcome, y.n_clusters(), y.n_points());
        let v_prev = state.v().clone();
        let v_new = update_v(&s, &state);
        let delta = (&s - &s_prev).norm_squared() + (&v_new - &v_prev).norm_squared();
        let agree = !cfg.require_agreement || (&s - &v_new).amax() <= cfg.binary_tol;
        state = update_penalties(state, v_new);
        s_prev.copy_from(&s);
        if delta <= cfg.eps_s && agree {
            stopped = true;
            break;
        }
        if state.max_penalty() > cfg.rho_cap {
            hit_cap = true;
            break;
        }
    }
    Ok(PumpRun {
        s,
        state,
        stopped,
        hit_cap,
        iterations,
        pivots,
    })
}

/// Rounds a fractional end point by fixing one entry at a time in the last
/// penalty program: the largest fractional entry goes to 1, or to 0 when 1
/// is infeasible, and the program is re-solved. Returns the binary point and
/// the number of fixings, or `None` if both values of some entry are
/// infeasible given the earlier fixings.
fn dive(
    solver: &mut LpSolver,
    y: &DistanceMatrix,
    cs: &ConstraintSet,
    run: &PumpRun,
    tol: f64,
) -> Result<Option<(DMatrix<f64>, usize)>> {
    let (k, n) = (y.n_clusters(), y.n_points());
    let st = &run.state;
    let mut lp = build_penalty_lp(y, cs, st.v(), st.rho_plus(), st.rho_minus())?;
    let mut s = run.s.clone();
    for fixings in 0..=k * n {
        let pick = (0..k * n)
            .filter(|&idx| s[idx] > tol && s[idx] < 1.0 - tol)
            .max_by(|&a, &b| s[a].total_cmp(&s[b]).then(b.cmp(&a)));
        let Some(idx) = pick else {
            return Ok(Some((s, fixings)));
        };
        let var = assign_var(k, idx % k, idx / k);
        let mut next = None;
        for value in [1.0, 0.0] {
            let mut trial = lp.clone();
            trial.set_bounds(var, value, value);
            let out = solver.solve(&trial)?;
            match out.status {
                LpStatus::Optimal => {
                    next = Some((trial, out));
                    break;
                }
                LpStatus::Infeasible => continue,
                _ => {
                    out.into_optimal()?;
                }
            }
        }
        let Some((trial, out)) = next else {
            return Ok(None);
        };
        lp = trial;
        s = extract_assignment(&out, k, n);
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn costs(rows: &[&[f64]]) -> DistanceMatrix {
        let k = rows.len();
        let n = rows[0].len();
        DistanceMatrix::from_raw(DMatrix::from_fn(k, n, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn v_step_examples() {
        let state = PenaltyState::new(&DMatrix::zeros(1, 3), 0.5, 1.1);
        let s = DMatrix::from_row_slice(1, 3, &[0.7, 0.0, 0.5]);
        let v = update_v(&s, &state);
        // 0.5 * 0.7 = 0.35 > 0.5 * 0.3 = 0.15 -> 1; S = 0 -> 0; tie -> 0.
        assert_eq!(v.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn penalty_escalation() {
        let state = PenaltyState::new(&DMatrix::zeros(1, 2), 0.5, 1.1);
        let state = update_penalties(state, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        assert_eq!(state.rho_minus()[(0, 0)], 0.55);
        assert_eq!(state.rho_plus()[(0, 0)], 0.5);
        assert_eq!(state.rho_plus()[(0, 1)], 0.55);
        assert_eq!(state.rho_minus()[(0, 1)], 0.5);
        let mut state = state;
        for _ in 0..4 {
            state = update_penalties(state, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        }
        assert_eq!(state.rho_minus()[(0, 0)], 0.5 * 1.1f64.powi(5));
        assert_eq!(state.steps_minus()[(0, 0)], 5);
        assert_eq!(state.iteration(), 5);
    }

    #[test]
    fn v0_is_rounded_s0() {
        let s0 = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.4, 0.6]);
        let state = PenaltyState::new(&s0, 0.5, 1.1);
        assert_eq!(state.v(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn s_step_aligned_with_objective() {
        let y = costs(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let cs = ConstraintSet::with_sizes(vec![1, 1], vec![Some(1), Some(1)]).unwrap();
        let state = PenaltyState::new(&DMatrix::identity(2, 2), 0.5, 1.1);
        let s = update_s(&y, &cs, &state, &AssignmentConfig::default()).unwrap();
        assert_eq!(s.as_matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn dominant_penalties_pin_s_to_v() {
        // V is feasible but costly; huge penalties keep S on it.
        let y = costs(&[&[5.0, 0.0, 0.0], &[0.0, 5.0, 5.0]]);
        let cs = ConstraintSet::with_sizes(vec![1, 1], vec![None, None]).unwrap();
        let v = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let state = PenaltyState::new(&v, 1e3, 1.1);
        let s = update_s(&y, &cs, &state, &AssignmentConfig::default()).unwrap();
        assert_eq!(s.as_matrix(), &v);
    }

    #[test]
    fn fixed_point_converges_immediately() {
        let y = costs(&[&[0.0, 1.0, 4.0], &[4.0, 1.5, 0.0]]);
        let cs = ConstraintSet::with_sizes(vec![1, 1], vec![None, None]).unwrap();
        let s0 = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let out = assign_with_costs(&y, &s0, &cs, &AssignmentConfig::default()).unwrap();
        assert!(out.diagnostics.converged);
        assert!(out.diagnostics.iterations <= 2);
        assert_eq!(out.assignment.as_matrix(), &s0);
    }

    #[test]
    fn infeasible_constraints_error() {
        let y = costs(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let cs = ConstraintSet::with_sizes(vec![2, 2], vec![None, None]).unwrap();
        let err = assign_with_costs(&y, &DMatrix::identity(2, 2), &cs, &AssignmentConfig::default());
        assert!(matches!(err, Err(Error::Infeasible(_))));
    }

    #[test]
    fn rejects_bad_configuration() {
        let cfg = AssignmentConfig {
            kappa: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
