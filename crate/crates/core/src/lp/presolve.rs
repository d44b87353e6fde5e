//! Presolve reductions applied before the simplex:
//!
//! * implied slacks: a column singleton `g >= 0` with positive cost whose only
//!   row reads `g >= h(x)` is replaced by `max(0, h(x))`, which is linear
//!   whenever the sign of `h` is fixed over the bounds of `x`;
//! * aggregation of `x_p - x_q = 0` rows between equally bounded columns;
//! * removal of empty rows and merging of identical rows.
//!
//! Every reduction maps vertices to vertices, so basic solutions of the
//! reduced program postsolve to basic solutions of the original.

use std::collections::HashMap;

use super::{LinearProgram, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) struct PresolveInfeasible;

type ImpliedSlack = (f64, Vec<(usize, f64)>);

const ZERO_TOL: f64 = 1e-12;
const RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub(super) struct ReducedRow {
    /// Sorted by column, no zero coefficients.
    pub terms: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Mapping {
    Column(usize),
    /// `max(0, constant + sum coef * x_orig)`.
    ImpliedSlack {
        constant: f64,
        terms: Vec<(usize, f64)>,
    },
}

#[derive(Debug, Clone)]
pub(super) struct Presolved {
    col_lo: Vec<f64>,
    col_hi: Vec<f64>,
    cost: Vec<f64>,
    rows: Vec<ReducedRow>,
    mapping: Vec<Mapping>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl Presolved {
    pub fn new(lp: &LinearProgram) -> Result<Self, PresolveInfeasible> {
        let n = lp.n_vars();
        let vars = lp.vars();
        let ranges: Vec<(f64, f64)> = lp
            .rows()
            .iter()
            .map(|r| match r.sense {
                Sense::Eq => (r.rhs, r.rhs),
                Sense::Le => (f64::NEG_INFINITY, r.rhs),
                Sense::Ge => (r.rhs, f64::INFINITY),
            })
            .collect();
        let mut row_alive = vec![true; lp.n_rows()];
        let mut cost: Vec<f64> = vars.iter().map(|v| v.cost).collect();

        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, row) in lp.rows().iter().enumerate() {
            for &(v, a) in &row.terms {
                if a != 0.0 && col_rows[v].last() != Some(&r) {
                    col_rows[v].push(r);
                }
            }
        }

        // Implied slacks: (constant, terms) of the row that replaces each one.
        let mut implied: Vec<Option<ImpliedSlack>> = vec![None; n];
        for g in 0..n {
            let var = &vars[g];
            if !(var.lower == 0.0 && var.upper == f64::INFINITY && var.cost > 0.0) {
                continue;
            }
            let [r] = col_rows[g][..] else { continue };
            if !row_alive[r] {
                continue;
            }
            let row = &lp.rows()[r];
            let a: f64 = row.terms.iter().filter(|t| t.0 == g).map(|t| t.1).sum();
            let (lo, hi) = ranges[r];
            // Rewrite the row as g >= constant + sum coef * x.
            let (constant, scale) = if lo == f64::NEG_INFINITY && hi.is_finite() && a < 0.0 {
                (-hi / -a, 1.0 / -a)
            } else if hi == f64::INFINITY && lo.is_finite() && a > 0.0 {
                (lo / a, -1.0 / a)
            } else {
                continue;
            };
            let mut terms = Vec::new();
            let (mut h_min, mut h_max) = (constant, constant);
            let mut usable = true;
            for &(v, coef) in row.terms.iter().filter(|t| t.0 != g) {
                let c = coef * scale;
                let (vl, vu) = (vars[v].lower, vars[v].upper);
                if !(vl.is_finite() && vu.is_finite()) || implied[v].is_some() {
                    usable = false;
                    break;
                }
                h_min += if c >= 0.0 { c * vl } else { c * vu };
                h_max += if c >= 0.0 { c * vu } else { c * vl };
                terms.push((v, c));
            }
            if !usable || (h_min < 0.0 && h_max > 0.0) {
                continue;
            }
            if h_min >= 0.0 {
                for &(v, c) in &terms {
                    cost[v] += var.cost * c;
                }
            }
            row_alive[r] = false;
            implied[g] = Some((constant, terms));
        }
        // Aggregation of x_p - x_q = 0 rows.
        let mut parent: Vec<usize> = (0..n).collect();
        for (r, row) in lp.rows().iter().enumerate() {
            if !row_alive[r] || ranges[r].0 != 0.0 || ranges[r].1 != 0.0 {
                continue;
            }
            let [(p, a), (q, b)] = row.terms[..] else { continue };
            if a == 0.0 || a != -b || implied[p].is_some() || implied[q].is_some() {
                continue;
            }
            let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
            if rp == rq {
                row_alive[r] = false;
                continue;
            }
            if vars[rp].lower != vars[rq].lower || vars[rp].upper != vars[rq].upper {
                continue;
            }
            parent[rp.max(rq)] = rp.min(rq);
            row_alive[r] = false;
        }

        // Column compaction.
        let mut col_of = vec![usize::MAX; n];
        let (mut col_lo, mut col_hi, mut red_cost) = (Vec::new(), Vec::new(), Vec::new());
        for v in 0..n {
            if implied[v].is_none() && find(&mut parent, v) == v {
                col_of[v] = col_lo.len();
                col_lo.push(vars[v].lower);
                col_hi.push(vars[v].upper);
                red_cost.push(0.0);
            }
        }
        let mut mapping = Vec::with_capacity(n);
        for v in 0..n {
            match implied[v].take() {
                Some((constant, terms)) => mapping.push(Mapping::ImpliedSlack { constant, terms }),
                None => {
                    let c = col_of[find(&mut parent, v)];
                    red_cost[c] += cost[v];
                    mapping.push(Mapping::Column(c));
                }
            }
        }

        // Row reduction.
        let mut rows: Vec<ReducedRow> = Vec::new();
        let mut seen: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
        for (r, row) in lp.rows().iter().enumerate() {
            if !row_alive[r] {
                continue;
            }
            let mut terms: Vec<(usize, f64)> = row
                .terms
                .iter()
                .map(|&(v, a)| match mapping[v] {
                    Mapping::Column(c) => (c, a),
                    Mapping::ImpliedSlack { .. } => unreachable!("implied slack rows are dropped"),
                })
                .collect();
            terms.sort_by_key(|t| t.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
            for (c, a) in terms {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += a,
                    _ => merged.push((c, a)),
                }
            }
            merged.retain(|t| t.1.abs() > ZERO_TOL);
            let (lo, hi) = ranges[r];
            if merged.is_empty() {
                if lo > RANGE_TOL || hi < -RANGE_TOL {
                    return Err(PresolveInfeasible);
                }
                continue;
            }
            let key: Vec<(usize, u64)> = merged.iter().map(|&(c, a)| (c, a.to_bits())).collect();
            match seen.get(&key) {
                Some(&idx) => {
                    let existing = &mut rows[idx];
                    existing.lo = existing.lo.max(lo);
                    existing.hi = existing.hi.min(hi);
                    if existing.lo > existing.hi + RANGE_TOL {
                        return Err(PresolveInfeasible);
                    }
                }
                None => {
                    seen.insert(key, rows.len());
                    rows.push(ReducedRow {
                        terms: merged,
                        lo,
                        hi,
                    });
                }
            }
        }
        Ok(Self {
            col_lo,
            col_hi,
            cost: red_cost,
            rows,
            mapping,
        })
    }

    pub fn n_cols(&self) -> usize {
        self.col_lo.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn col_bounds(&self) -> (&[f64], &[f64]) {
        (&self.col_lo, &self.col_hi)
    }

    pub fn rows(&self) -> &[ReducedRow] {
        &self.rows
    }

    pub fn reduced_costs(&self) -> &[f64] {
        &self.cost
    }

    /// Whether two presolved programs share columns, bounds and rows, so a
    /// basis of one is a basis of the other.
    pub fn same_structure(&self, other: &Presolved) -> bool {
        self.col_lo == other.col_lo && self.col_hi == other.col_hi && self.rows == other.rows
    }

    /// Maps a reduced solution back to the original variables.
    pub fn postsolve(&self, reduced: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .mapping
            .iter()
            .map(|m| match m {
                Mapping::Column(c) => reduced[*c],
                Mapping::ImpliedSlack { .. } => 0.0,
            })
            .collect();
        for (v, m) in self.mapping.iter().enumerate() {
            if let Mapping::ImpliedSlack { constant, terms } = m {
                let h = constant + terms.iter().map(|&(u, c)| c * x[u]).sum::<f64>();
                x[v] = h.max(0.0);
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::VarKey;

    #[test]
    fn eliminates_penalty_slacks() {
        // min s + 2 g1 + 3 g2, s in [0,1], 1 - s <= g1, s - 1 <= g2
        let mut lp = LinearProgram::new();
        let s = lp.add_var(VarKey::aux(0), 0.0, 1.0, 1.0);
        let g1 = lp.add_var(VarKey::aux(1), 0.0, f64::INFINITY, 2.0);
        let g2 = lp.add_var(VarKey::aux(2), 0.0, f64::INFINITY, 3.0);
        lp.add_row(vec![(s, -1.0), (g1, -1.0)], Sense::Le, -1.0);
        lp.add_row(vec![(s, 1.0), (g2, -1.0)], Sense::Le, 1.0);
        let p = Presolved::new(&lp).unwrap();
        assert_eq!((p.n_cols(), p.n_rows()), (1, 0));
        // g1 = 1 - s contributes -2 to the cost of s.
        assert_eq!(p.reduced_costs(), &[-1.0]);
        assert_eq!(p.postsolve(&[0.25]), vec![0.25, 0.75, 0.0]);
    }

    #[test]
    fn aggregates_equal_columns_and_merges_rows() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(VarKey::aux(0), 0.0, 1.0, 1.0);
        let b = lp.add_var(VarKey::aux(1), 0.0, 1.0, 2.0);
        let c = lp.add_var(VarKey::aux(2), 0.0, 1.0, 0.0);
        lp.add_row(vec![(b, 1.0), (a, -1.0)], Sense::Eq, 0.0);
        lp.add_row(vec![(a, 1.0), (c, 1.0)], Sense::Le, 1.0);
        lp.add_row(vec![(b, 1.0), (c, 1.0)], Sense::Le, 0.5);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], Sense::Ge, 1.0);
        let p = Presolved::new(&lp).unwrap();
        assert_eq!(p.n_cols(), 2);
        assert_eq!(p.reduced_costs(), &[3.0, 0.0]);
        assert_eq!(p.n_rows(), 2);
        assert_eq!(p.rows()[0].hi, 0.5);
        assert_eq!(p.rows()[1].terms, vec![(0, 2.0)]);
        assert_eq!(p.postsolve(&[0.5, 0.0]), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn empty_infeasible_row() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(VarKey::aux(0), 0.0, 1.0, 1.0);
        lp.add_row(vec![(a, 1.0), (a, -1.0)], Sense::Ge, 1.0);
        assert!(Presolved::new(&lp).is_err());
    }

    #[test]
    fn keeps_slacks_with_mixed_sign_range() {
        // g >= x - 0.5 with x in [0, 1] can be either sign.
        let mut lp = LinearProgram::new();
        let x = lp.add_var(VarKey::aux(0), 0.0, 1.0, -1.0);
        let g = lp.add_var(VarKey::aux(1), 0.0, f64::INFINITY, 1.0);
        lp.add_row(vec![(x, 1.0), (g, -1.0)], Sense::Le, 0.5);
        let p = Presolved::new(&lp).unwrap();
        assert_eq!((p.n_cols(), p.n_rows()), (2, 1));
    }
}
