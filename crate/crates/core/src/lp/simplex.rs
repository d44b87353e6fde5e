//! Bounded-variable primal revised simplex.
//!
//! Every row `i` gets a logical variable `z_i = a_i x` carrying the row range
//! as its bounds, so the working system is `A x - z = 0` and the all-logical
//! basis is always available. Phase 1 minimizes the sum of bound
//! infeasibilities of the basic variables; phase 2 minimizes the cost.
//!
//! The basis inverse is kept explicitly (dense, row-major) and updated in
//! product form; only rows touched by the entering column change, which keeps
//! pivots cheap on the sparse assignment polytopes this crate builds.
//! Pricing is Dantzig's rule, switching to Bland's rule after a stall.

use super::presolve::Presolved;

/// Bound violation up to which a basic variable counts as feasible.
const PRIMAL_TOL: f64 = 1e-7;
/// Feasibility tolerance used once phase 1 stalls on rounding residue.
const LOOSE_PRIMAL_TOL: f64 = 1e-6;
/// Slack granted by the first pass of the Harris ratio test; kept well
/// below `PRIMAL_TOL` so a step never makes a basic variable infeasible.
const HARRIS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const STALL_LIMIT: usize = 50;
const DUAL_REFRESH: usize = 64;
const SMALL_REFACTOR_DIM: usize = 400;
const SMALL_REFACTOR_EVERY: usize = 100;
const MAX_TERMINAL_REFACTORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum SimplexStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Zero,
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Flip,
    Pivot { row: usize, to_upper: bool },
    Unbounded,
}

#[derive(Debug, Clone)]
pub(super) struct Simplex {
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    /// Bounds and costs of structurals followed by logicals.
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    head: Vec<usize>,
    binv: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
    feas_tol: f64,
}

impl Simplex {
    pub fn new(pre: &Presolved) -> Self {
        let n = pre.n_cols();
        let m = pre.n_rows();
        let mut counts = vec![0usize; n + 1];
        for row in pre.rows() {
            for &(c, _) in &row.terms {
                counts[c + 1] += 1;
            }
        }
        for c in 0..n {
            counts[c + 1] += counts[c];
        }
        let col_start = counts.clone();
        let nnz = col_start[n];
        let mut fill = counts;
        let mut col_row = vec![0; nnz];
        let mut col_val = vec![0.0; nnz];
        for (r, row) in pre.rows().iter().enumerate() {
            for &(c, a) in &row.terms {
                col_row[fill[c]] = r;
                col_val[fill[c]] = a;
                fill[c] += 1;
            }
        }
        let (clo, chi) = pre.col_bounds();
        let mut lo = clo.to_vec();
        let mut hi = chi.to_vec();
        lo.extend(pre.rows().iter().map(|r| r.lo));
        hi.extend(pre.rows().iter().map(|r| r.hi));
        let mut cost = pre.reduced_costs().to_vec();
        cost.resize(n + m, 0.0);

        let mut s = Self {
            m,
            n,
            col_start,
            col_row,
            col_val,
            lo,
            hi,
            cost,
            x: vec![0.0; n + m],
            state: vec![VarState::Basic; n + m],
            head: (n..n + m).collect(),
            binv: Vec::new(),
            pivots: 0,
            since_refactor: 0,
            feas_tol: PRIMAL_TOL,
        };
        s.reset_to_logical_basis();
        s
    }

    fn reset_to_logical_basis(&mut self) {
        let (n, m) = (self.n, self.m);
        for j in 0..n {
            let (state, value) = resting_bound(self.lo[j], self.hi[j]);
            self.state[j] = state;
            self.x[j] = value;
        }
        for i in 0..m {
            self.state[n + i] = VarState::Basic;
            self.head[i] = n + i;
        }
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = -1.0;
        }
        self.recompute_basics();
        self.since_refactor = 0;
    }

    pub fn set_costs(&mut self, costs: &[f64]) {
        self.cost[..self.n].copy_from_slice(costs);
    }

    pub fn pivots(&self) -> usize {
        self.pivots
    }

    pub fn structural_values(&self) -> Vec<f64> {
        self.x[..self.n].to_vec()
    }

    /// Calls `f(row, coef)` for every nonzero of column `j` of `[A | -I]`.
    #[inline]
    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for p in self.col_start[j]..self.col_start[j + 1] {
                f(self.col_row[p], self.col_val[p]);
            }
        } else {
            f(j - self.n, -1.0);
        }
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_col(j, |r, a| acc += a * y[r]);
        acc
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_col(j, |k, a| {
            for (i, out) in alpha.iter_mut().enumerate() {
                *out += a * self.binv[i * m + k];
            }
        });
        alpha
    }

    /// `c_B^T B^{-1}` for basic costs `cb`.
    fn btran(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &c) in cb.iter().enumerate() {
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &b) in y.iter_mut().zip(row) {
                    *yk += c * b;
                }
            }
        }
        y
    }

    /// Recomputes basic values from the nonbasic ones: `x_B = -B^{-1} N x_N`.
    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n + self.m {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_col(j, |r, a| rhs[r] += a * xj);
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(b, r)| b * r).sum();
            self.x[self.head[i]] = -v;
        }
    }

    /// Largest `|A x - z|` over rows.
    fn residual(&self) -> f64 {
        let mut act = vec![0.0; self.m];
        for j in 0..self.n {
            let xj = self.x[j];
            if xj != 0.0 {
                self.for_col(j, |r, a| act[r] += a * xj);
            }
        }
        act.iter()
            .enumerate()
            .map(|(i, a)| (a - self.x[self.n + i]).abs())
            .fold(0.0, f64::max)
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination. Falls back to
    /// the logical basis if the current basis is numerically singular.
    fn refactor(&mut self) {
        let m = self.m;
        let mut b = vec![0.0; m * m];
        for (p, &j) in self.head.iter().enumerate() {
            self.for_col(j, |r, a| b[r * m + p] = a);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&a, &c| b[a * m + col].abs().total_cmp(&b[c * m + col].abs()))
                .expect("non-empty range");
            if b[piv * m + col].abs() < 1e-11 {
                self.reset_to_logical_basis();
                return;
            }
            if piv != col {
                for k in 0..m {
                    b.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let d = b[col * m + col];
            for k in 0..m {
                b[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for r in 0..m {
                let f = b[r * m + col];
                if r != col && f != 0.0 {
                    for k in 0..m {
                        b[r * m + k] -= f * b[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        // B = A_B with columns in basis order, so B^{-1} rows follow basis order.
        self.binv = inv;
        self.recompute_basics();
        self.since_refactor = 0;
    }

    /// Phase-1 costs per basis position and the total infeasibility.
    fn phase_one_costs(&self) -> (Vec<f64>, f64) {
        let mut total = 0.0;
        let cb = self
            .head
            .iter()
            .map(|&j| {
                let v = self.x[j];
                if v < self.lo[j] - self.feas_tol {
                    total += self.lo[j] - v;
                    -1.0
                } else if v > self.hi[j] + self.feas_tol {
                    total += v - self.hi[j];
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        (cb, total)
    }

    /// Chooses an entering variable and its direction (+1 increase, -1 decrease).
    fn price(&self, y: &[f64], phase_one: bool, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.n + self.m {
            let state = self.state[j];
            if state == VarState::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let c = if phase_one { 0.0 } else { self.cost[j] };
            let d = c - self.col_dot(j, y);
            let dir = match state {
                VarState::AtLower if d < -DUAL_TOL => 1.0,
                VarState::AtUpper if d > DUAL_TOL => -1.0,
                VarState::Zero if d.abs() > DUAL_TOL => -d.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, bd)| d.abs() > bd) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Bounded ratio test with Harris' two-pass tie breaking.
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> (f64, Step) {
        let flip = self.hi[q] - self.lo[q];
        // (position, gap to the blocking bound, |rate|, heading to upper)
        let mut cands: Vec<(usize, f64, f64, bool)> = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            if a.abs() < PIVOT_TOL {
                continue;
            }
            let var = self.head[i];
            let rate = -dir * a;
            let v = self.x[var];
            let (lo, hi) = (self.lo[var], self.hi[var]);
            if rate < 0.0 {
                if v > hi + self.feas_tol {
                    cands.push((i, v - hi, -rate, true));
                } else if lo > f64::NEG_INFINITY && v >= lo - self.feas_tol {
                    cands.push((i, (v - lo).max(0.0), -rate, false));
                }
            } else if v < lo - self.feas_tol {
                cands.push((i, lo - v, rate, false));
            } else if hi < f64::INFINITY && v <= hi + self.feas_tol {
                cands.push((i, (hi - v).max(0.0), rate, true));
            }
        }
        if cands.is_empty() {
            return if flip.is_finite() {
                (flip, Step::Flip)
            } else {
                (f64::INFINITY, Step::Unbounded)
            };
        }
        let chosen = if bland {
            let min = cands
                .iter()
                .map(|c| c.1 / c.2)
                .fold(f64::INFINITY, f64::min);
            cands
                .iter()
                .filter(|c| c.1 / c.2 <= min + 1e-12)
                .min_by_key(|c| self.head[c.0])
                .copied()
        } else {
            let bound = cands
                .iter()
                .map(|c| (c.1 + HARRIS_TOL) / c.2)
                .fold(f64::INFINITY, f64::min);
            cands
                .iter()
                .filter(|c| c.1 / c.2 <= bound)
                .max_by(|a, b| alpha[a.0].abs().total_cmp(&alpha[b.0].abs()))
                .copied()
        }
        .expect("at least one candidate");
        let t = chosen.1 / chosen.2;
        if flip.is_finite() && flip <= t {
            return (flip, Step::Flip);
        }
        (
            t,
            Step::Pivot {
                row: chosen.0,
                to_upper: chosen.3,
            },
        )
    }

    fn update_inverse(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        for v in pivot_row.iter_mut() {
            *v /= piv;
        }
        for (i, &a) in alpha.iter().enumerate() {
            if i == r || a == 0.0 {
                continue;
            }
            let row = if i < r {
                &mut before[i * m..(i + 1) * m]
            } else {
                &mut after[(i - r - 1) * m..(i - r) * m]
            };
            for (v, &p) in row.iter_mut().zip(pivot_row.iter()) {
                *v -= a * p;
            }
        }
    }

    fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    pub fn run(&mut self, max_pivots: usize) -> SimplexStatus {
        let start = self.pivots;
        let mut bland = false;
        let mut stall = 0usize;
        let mut best_obj = f64::INFINITY;
        let mut last_phase_one = None;
        let mut terminal_refactors = 0;
        let mut y: Vec<f64> = Vec::new();
        let mut y_age = usize::MAX;
        let mut cleaned = false;
        self.feas_tol = PRIMAL_TOL;

        loop {
            if self.pivots - start >= max_pivots {
                return SimplexStatus::IterationLimit;
            }
            if self.m <= SMALL_REFACTOR_DIM && self.since_refactor >= SMALL_REFACTOR_EVERY {
                self.refactor();
                y_age = usize::MAX;
            }
            let (cb1, infeas) = self.phase_one_costs();
            let phase_one = infeas > 0.0;
            if last_phase_one != Some(phase_one) {
                last_phase_one = Some(phase_one);
                best_obj = f64::INFINITY;
                stall = 0;
                bland = false;
                y_age = usize::MAX;
            }
            if phase_one {
                y = self.btran(&cb1);
            } else if y_age >= DUAL_REFRESH {
                let cb: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
                y = self.btran(&cb);
                y_age = 0;
            }
            let obj = if phase_one { infeas } else { self.objective() };
            if phase_one && stall >= STALL_LIMIT && infeas < 1e-6 {
                // Residue from accumulated rounding rather than a real
                // infeasibility: rebuild the inverse, then relax the tolerance.
                if !cleaned {
                    cleaned = true;
                    self.refactor();
                } else {
                    self.feas_tol = LOOSE_PRIMAL_TOL;
                }
                stall = 0;
                best_obj = f64::INFINITY;
                y_age = usize::MAX;
                continue;
            }
            if obj < best_obj - 1e-11 * (1.0 + best_obj.abs().min(obj.abs())) {
                best_obj = obj;
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall >= STALL_LIMIT {
                    bland = true;
                }
            }

            let Some((q, dir)) = self.price(&y, phase_one, bland) else {
                if self.residual() > 1e-9 && terminal_refactors < MAX_TERMINAL_REFACTORS {
                    terminal_refactors += 1;
                    self.refactor();
                    y_age = usize::MAX;
                    last_phase_one = None;
                    continue;
                }
                return if phase_one {
                    SimplexStatus::Infeasible
                } else {
                    SimplexStatus::Optimal
                };
            };

            let alpha = self.ftran(q);
            let (t, step) = self.ratio_test(q, dir, &alpha, bland);
            if let Step::Unbounded = step {
                if phase_one {
                    // Cannot happen for a correct phase-1 pricing; recover.
                    self.refactor();
                    last_phase_one = None;
                    continue;
                }
                return SimplexStatus::Unbounded;
            }
            if t > 0.0 {
                self.x[q] += dir * t;
                for (i, &a) in alpha.iter().enumerate() {
                    if a != 0.0 {
                        self.x[self.head[i]] -= dir * t * a;
                    }
                }
            }
            self.pivots += 1;
            match step {
                Step::Flip => {
                    let to_upper = dir > 0.0;
                    self.state[q] = if to_upper {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.x[q] = if to_upper { self.hi[q] } else { self.lo[q] };
                }
                Step::Pivot { row, to_upper } => {
                    if !phase_one {
                        // Incremental dual update with the old row of B^{-1}.
                        let d_q = self.cost[q] - self.col_dot(q, &y);
                        let theta = d_q / alpha[row];
                        let m = self.m;
                        for (yk, &b) in y.iter_mut().zip(&self.binv[row * m..(row + 1) * m]) {
                            *yk += theta * b;
                        }
                        y_age += 1;
                    }
                    let leaving = self.head[row];
                    self.state[leaving] = if to_upper {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.x[leaving] = if to_upper {
                        self.hi[leaving]
                    } else {
                        self.lo[leaving]
                    };
                    self.state[q] = VarState::Basic;
                    self.head[row] = q;
                    self.update_inverse(row, &alpha);
                    self.since_refactor += 1;
                }
                Step::Unbounded => unreachable!(),
            }
        }
    }
}

fn resting_bound(lo: f64, hi: f64) -> (VarState, f64) {
    if lo.is_finite() {
        (VarState::AtLower, lo)
    } else if hi.is_finite() {
        (VarState::AtUpper, hi)
    } else {
        (VarState::Zero, 0.0)
    }
}
