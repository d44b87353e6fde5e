//! Cluster-size bounds and pairwise must-link / cannot-link constraints.
//!
//! Must-links arrive as pairs and are closed transitively into groups; each
//! group is encoded against its smallest member. Cannot-links are pairwise,
//! optionally with explicit cliques that enable a pigeonhole precheck.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::AssignmentMatrix;
use crate::error::{Error, Result};
use crate::lp::Sense;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    lower: Vec<usize>,
    /// `None` means unbounded, i.e. `u_i = N`.
    upper: Vec<Option<usize>>,
    must_link: Vec<(usize, usize)>,
    cannot_link: Vec<(usize, usize)>,
    /// Sets of points that are pairwise cannot-linked.
    cannot_link_groups: Vec<Vec<usize>>,
}

impl ConstraintSet {
    pub fn new(
        lower: Vec<usize>,
        upper: Vec<Option<usize>>,
        must_link: Vec<(usize, usize)>,
        cannot_link: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidInput("constraint set needs k >= 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidInput(format!(
                "lower has {} entries but upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&l, u)) in lower.iter().zip(&upper).enumerate() {
            if let Some(u) = *u {
                if l > u {
                    return Err(Error::InvalidInput(format!(
                        "cluster {i}: lower bound {l} exceeds upper bound {u}"
                    )));
                }
            }
        }
        for &(p, q) in must_link.iter().chain(&cannot_link) {
            if p == q {
                return Err(Error::InvalidInput(format!("self-pair ({p}, {p})")));
            }
        }
        Ok(Self {
            lower,
            upper,
            must_link,
            cannot_link,
            cannot_link_groups: Vec::new(),
        })
    }

    /// No size bounds and no links.
    pub fn unconstrained(k: usize) -> Self {
        Self::new(vec![0; k.max(1)], vec![None; k.max(1)], Vec::new(), Vec::new())
            .expect("trivially valid")
    }

    /// Size bounds only.
    pub fn with_sizes(lower: Vec<usize>, upper: Vec<Option<usize>>) -> Result<Self> {
        Self::new(lower, upper, Vec::new(), Vec::new())
    }

    /// Adds cannot-link cliques: every pair inside a group is cannot-linked.
    pub fn with_cannot_link_groups(mut self, groups: Vec<Vec<usize>>) -> Result<Self> {
        for g in &groups {
            let unique: HashSet<_> = g.iter().collect();
            if unique.len() != g.len() {
                return Err(Error::InvalidInput(format!(
                    "cannot-link group {g:?} repeats a point"
                )));
            }
        }
        self.cannot_link_groups = groups;
        Ok(self)
    }

    /// Replaces the link lists, keeping the size bounds.
    pub fn with_links(
        self,
        must_link: Vec<(usize, usize)>,
        cannot_link: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let groups = self.cannot_link_groups;
        Self::new(self.lower, self.upper, must_link, cannot_link)?.with_cannot_link_groups(groups)
    }

    pub fn k(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[usize] {
        &self.lower
    }

    pub fn upper(&self) -> &[Option<usize>] {
        &self.upper
    }

    pub fn must_link(&self) -> &[(usize, usize)] {
        &self.must_link
    }

    pub fn cannot_link(&self) -> &[(usize, usize)] {
        &self.cannot_link
    }

    pub fn cannot_link_groups(&self) -> &[Vec<usize>] {
        &self.cannot_link_groups
    }

    pub fn has_links(&self) -> bool {
        !self.must_link.is_empty()
            || !self.cannot_link.is_empty()
            || self.cannot_link_groups.iter().any(|g| g.len() > 1)
    }

    /// Upper bound with the unbounded sentinel resolved to `n`.
    pub fn effective_upper(&self, i: usize, n: usize) -> usize {
        self.upper[i].map_or(n, |u| u.min(n))
    }

    /// Explicit pairs plus clique-induced pairs, normalized to `(min, max)`
    /// and deduplicated in first-seen order.
    pub fn cannot_link_pairs(&self) -> Vec<(usize, usize)> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let clique_pairs = self.cannot_link_groups.iter().flat_map(|g| {
            g.iter()
                .enumerate()
                .flat_map(move |(a, &p)| g[a + 1..].iter().map(move |&q| (p, q)))
        });
        for (p, q) in self.cannot_link.iter().copied().chain(clique_pairs) {
            let key = (p.min(q), p.max(q));
            if seen.insert(key) {
                out.push(key);
            }
        }
        out
    }

    /// Checks that every point index is below `n`.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        let bad = self
            .must_link
            .iter()
            .chain(&self.cannot_link)
            .flat_map(|&(p, q)| [p, q])
            .chain(self.cannot_link_groups.iter().flatten().copied())
            .find(|&p| p >= n);
        match bad {
            Some(p) => Err(Error::InvalidInput(format!(
                "point index {p} out of range for N = {n}"
            ))),
            None => Ok(()),
        }
    }

    pub fn load_json(path: impl AsRef<Path>, k: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ConstraintFile = serde_json::from_str(&text)?;
        file.into_constraints(k)
    }

    pub fn to_file(&self) -> ConstraintFile {
        ConstraintFile {
            lower: Some(self.lower.clone()),
            upper: Some(self.upper.clone()),
            must_link: self.must_link.iter().map(|&(p, q)| [p, q]).collect(),
            cannot_link: self.cannot_link.iter().map(|&(p, q)| [p, q]).collect(),
            cannot_link_groups: if self.cannot_link_groups.is_empty() {
                None
            } else {
                Some(self.cannot_link_groups.clone())
            },
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        crate::csv_io::write_atomic(path.as_ref(), text.as_bytes())
    }
}

/// On-disk constraint layout. Missing `lower` means all zeros, a missing
/// `upper` or a `null` entry means unbounded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFile {
    #[serde(default)]
    pub lower: Option<Vec<usize>>,
    #[serde(default)]
    pub upper: Option<Vec<Option<usize>>>,
    #[serde(default)]
    pub must_link: Vec<[usize; 2]>,
    #[serde(default)]
    pub cannot_link: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cannot_link_groups: Option<Vec<Vec<usize>>>,
}

impl ConstraintFile {
    pub fn into_constraints(self, k: usize) -> Result<ConstraintSet> {
        let lower = self.lower.unwrap_or_else(|| vec![0; k]);
        let upper = self.upper.unwrap_or_else(|| vec![None; k]);
        if lower.len() != k || upper.len() != k {
            return Err(Error::InvalidInput(format!(
                "constraint file has {} lower / {} upper bounds but k = {k}",
                lower.len(),
                upper.len()
            )));
        }
        ConstraintSet::new(
            lower,
            upper,
            self.must_link.iter().map(|p| (p[0], p[1])).collect(),
            self.cannot_link.iter().map(|p| (p[0], p[1])).collect(),
        )?
        .with_cannot_link_groups(self.cannot_link_groups.unwrap_or_default())
    }
}

/// Connected components of the must-link graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MustLinkClosure {
    /// Sorted members, groups ordered by smallest member. Sizes are >= 2.
    groups: Vec<Vec<usize>>,
    group_of: Vec<Option<usize>>,
}

impl MustLinkClosure {
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, p: usize) -> Option<usize> {
        self.group_of.get(p).copied().flatten()
    }

    /// Smallest member of the group containing `p`, or `p` itself.
    pub fn representative(&self, p: usize) -> usize {
        self.group_of(p).map_or(p, |g| self.groups[g][0])
    }

    /// Pairs `(representative, member)` generating the closure.
    pub fn induced_pairs(&self) -> Vec<(usize, usize)> {
        self.groups
            .iter()
            .flat_map(|g| g[1..].iter().map(move |&p| (g[0], p)))
            .collect()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn close_must_links(cs: &ConstraintSet, n: usize) -> MustLinkClosure {
    close_pairs(cs.must_link(), n)
}

fn close_pairs(pairs: &[(usize, usize)], n: usize) -> MustLinkClosure {
    let size = pairs
        .iter()
        .map(|&(p, q)| p.max(q) + 1)
        .max()
        .unwrap_or(0)
        .max(n);
    let mut parent: Vec<usize> = (0..size).collect();
    let mut touched = vec![false; size];
    for &(p, q) in pairs {
        touched[p] = true;
        touched[q] = true;
        let (a, b) = (find(&mut parent, p), find(&mut parent, q));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut root_group = vec![usize::MAX; size];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of = vec![None; size];
    for p in (0..size).filter(|&p| touched[p]) {
        let r = find(&mut parent, p);
        if root_group[r] == usize::MAX {
            root_group[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_group[r]].push(p);
        group_of[p] = Some(root_group[r]);
    }
    MustLinkClosure { groups, group_of }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Precheck {
    Ok,
    Infeasible(String),
}

impl Precheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, Precheck::Ok)
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            Precheck::Ok => Ok(()),
            Precheck::Infeasible(reason) => Err(Error::Infeasible(reason)),
        }
    }
}

/// Cheap necessary conditions for a non-empty feasible set. `Ok` does not
/// guarantee feasibility.
pub fn precheck_feasibility(cs: &ConstraintSet, n: usize, k: usize) -> Precheck {
    if cs.k() != k {
        return Precheck::Infeasible(format!(
            "constraint set has {} clusters but k = {k}",
            cs.k()
        ));
    }
    if let Err(e) = cs.validate_for(n) {
        return Precheck::Infeasible(e.to_string());
    }
    let sum_lower: usize = cs.lower().iter().sum();
    if sum_lower > n {
        return Precheck::Infeasible(format!(
            "lower bounds sum to {sum_lower} > N = {n}"
        ));
    }
    let sum_upper: usize = (0..k).map(|i| cs.effective_upper(i, n)).sum();
    if sum_upper < n {
        return Precheck::Infeasible(format!(
            "upper bounds sum to {sum_upper} < N = {n}"
        ));
    }
    let closure = close_must_links(cs, n);
    for (p, q) in cs.cannot_link_pairs() {
        if let (Some(a), Some(b)) = (closure.group_of(p), closure.group_of(q)) {
            if a == b {
                return Precheck::Infeasible(format!(
                    "points {p} and {q} are both must-linked and cannot-linked"
                ));
            }
        }
    }
    let max_upper = (0..k).map(|i| cs.effective_upper(i, n)).max().unwrap_or(0);
    if let Some(g) = closure.groups().iter().find(|g| g.len() > max_upper) {
        return Precheck::Infeasible(format!(
            "must-link group of size {} exceeds every upper bound (max {max_upper})",
            g.len()
        ));
    }
    for g in cs.cannot_link_groups() {
        // Members of one must-link group count once; a repeat is caught above.
        let distinct: HashSet<usize> = g.iter().map(|&p| closure.representative(p)).collect();
        if distinct.len() > k {
            return Precheck::Infeasible(format!(
                "cannot-link clique of size {} exceeds k = {k}",
                distinct.len()
            ));
        }
    }
    Precheck::Ok
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeViolation {
    pub cluster: usize,
    pub actual: f64,
    pub lower: usize,
    pub upper: Option<usize>,
}

/// Every constraint an assignment violates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub size_violations: Vec<SizeViolation>,
    pub must_link_violations: Vec<(usize, usize)>,
    pub cannot_link_violations: Vec<(usize, usize)>,
    /// Columns whose entries do not sum to one.
    pub column_sum_violations: Vec<usize>,
    pub nonbinary_entries: usize,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.size_violations.is_empty()
            && self.must_link_violations.is_empty()
            && self.cannot_link_violations.is_empty()
            && self.column_sum_violations.is_empty()
            && self.nonbinary_entries == 0
    }

    pub fn link_violation_count(&self) -> usize {
        self.must_link_violations.len() + self.cannot_link_violations.len()
    }

    pub fn total(&self) -> usize {
        self.size_violations.len()
            + self.link_violation_count()
            + self.column_sum_violations.len()
            + self.nonbinary_entries
    }
}

/// Lists every violated constraint of `S` within tolerance `tol`.
pub fn audit(s: &AssignmentMatrix, cs: &ConstraintSet, tol: f64) -> Result<ViolationReport> {
    let (k, n) = (s.n_clusters(), s.n_points());
    if cs.k() != k {
        return Err(Error::DimensionMismatch {
            what: "assignment rows vs constraint clusters",
            left: (k, n),
            right: (cs.k(), n),
        });
    }
    cs.validate_for(n)?;
    let m = s.as_matrix();
    let mut report = ViolationReport {
        nonbinary_entries: s.nonbinary_count(tol),
        ..Default::default()
    };
    for j in 0..n {
        if (m.column(j).sum() - 1.0).abs() > tol {
            report.column_sum_violations.push(j);
        }
    }
    for (i, actual) in s.row_sums().into_iter().enumerate() {
        let lower = cs.lower()[i];
        let upper = cs.upper()[i];
        let below = actual < lower as f64 - tol;
        let above = upper.is_some_and(|u| actual > u as f64 + tol);
        if below || above {
            report.size_violations.push(SizeViolation {
                cluster: i,
                actual,
                lower,
                upper,
            });
        }
    }
    for &(p, q) in cs.must_link() {
        if (0..k).any(|i| (m[(i, p)] - m[(i, q)]).abs() > tol) {
            report.must_link_violations.push((p, q));
        }
    }
    for (p, q) in cs.cannot_link_pairs() {
        if (0..k).any(|i| m[(i, p)] + m[(i, q)] > 1.0 + tol) {
            report.cannot_link_violations.push((p, q));
        }
    }
    Ok(report)
}

/// Which family of the constraint polytope a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFamily {
    ColumnSum,
    SizeLower,
    SizeUpper,
    MustLink,
    CannotLink,
}

/// A linear row over assignment entries `S[(i, j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentRow {
    pub family: RowFamily,
    pub terms: Vec<((usize, usize), f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl AssignmentRow {
    pub fn is_satisfied(&self, s: &nalgebra::DMatrix<f64>, tol: f64) -> bool {
        let lhs: f64 = self.terms.iter().map(|&((i, j), a)| a * s[(i, j)]).sum();
        match self.sense {
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
        }
    }
}

/// Linear rows of the constraint polytope in canonical order: column sums,
/// size bounds (lower then upper per cluster, unbounded uppers omitted),
/// must-link equalities against each group's representative, then
/// cannot-link inequalities.
pub fn emit_lp_rows(cs: &ConstraintSet, n: usize, k: usize) -> Vec<AssignmentRow> {
    let mut rows = Vec::new();
    for j in 0..n {
        rows.push(AssignmentRow {
            family: RowFamily::ColumnSum,
            terms: (0..k).map(|i| ((i, j), 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    for i in 0..k {
        rows.push(AssignmentRow {
            family: RowFamily::SizeLower,
            terms: (0..n).map(|j| ((i, j), 1.0)).collect(),
            sense: Sense::Ge,
            rhs: cs.lower()[i] as f64,
        });
        if let Some(u) = cs.upper()[i] {
            rows.push(AssignmentRow {
                family: RowFamily::SizeUpper,
                terms: (0..n).map(|j| ((i, j), 1.0)).collect(),
                sense: Sense::Le,
                rhs: u as f64,
            });
        }
    }
    let closure = close_must_links(cs, n);
    for (r, p) in closure.induced_pairs() {
        for i in 0..k {
            rows.push(AssignmentRow {
                family: RowFamily::MustLink,
                terms: vec![((i, p), 1.0), ((i, r), -1.0)],
                sense: Sense::Eq,
                rhs: 0.0,
            });
        }
    }
    for (p, q) in cs.cannot_link_pairs() {
        for i in 0..k {
            rows.push(AssignmentRow {
                family: RowFamily::CannotLink,
                terms: vec![((i, p), 1.0), ((i, q), 1.0)],
                sense: Sense::Le,
                rhs: 1.0,
            });
        }
    }
    rows
}
