//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use bckm_core::constraints::ConstraintSet;
use bckm_core::data::{DataMatrix, DistanceMatrix};
use bckm_core::lp::{LinearProgram, Sense, VarKey};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Optimal objective of a box-bounded LP by enumerating every basic
/// solution: each choice of `n` tight constraints (rows as equalities or
/// variable bounds) is solved, kept if feasible, and the cheapest wins.
/// `None` means infeasible.
pub fn enumerate_lp_optimum(lp: &LinearProgram) -> Option<f64> {
    let n = lp.n_vars();
    // hyperplanes a.x = b
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in lp.rows() {
        let mut a = vec![0.0; n];
        for &(v, c) in &row.terms {
            a[v] += c;
        }
        planes.push((a, row.rhs));
    }
    for (j, v) in lp.vars().iter().enumerate() {
        assert!(v.lower.is_finite() && v.upper.is_finite(), "oracle needs a box");
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), v.lower));
        planes.push((e, v.upper));
    }
    let feasible = |x: &[f64]| {
        lp.vars()
            .iter()
            .zip(x)
            .all(|(v, &x)| x >= v.lower - 1e-9 && x <= v.upper + 1e-9)
            && lp.rows().iter().all(|r| {
                let act: f64 = r.terms.iter().map(|&(v, c)| c * x[v]).sum();
                match r.sense {
                    Sense::Eq => (act - r.rhs).abs() <= 1e-9,
                    Sense::Le => act <= r.rhs + 1e-9,
                    Sense::Ge => act >= r.rhs - 1e-9,
                }
            })
    };
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    let total = planes.len();
    loop {
        let a = DMatrix::from_fn(n, n, |r, c| planes[idx[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| planes[idx[r]].1);
        if let Some(x) = a.clone().lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            let residual = (&a * DVector::from_vec(x.clone()) - &b).amax();
            if residual < 1e-9 && feasible(&x) {
                let obj = lp.objective_at(&x);
                if best.is_none_or(|b| obj < b) {
                    best = Some(obj);
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < total - n + i {
                idx[i] += 1;
                for t in i + 1..n {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// A random LP with 2 to 4 boxed variables and 1 to 4 rows. Right-hand
/// sides come from a random point in the box, so most instances are
/// feasible; occasionally an extra contradictory row is added.
pub fn random_lp(seed: u64) -> LinearProgram {
    let mut r = rng(seed);
    let n = r.random_range(2..=4);
    let m = r.random_range(1..=4);
    let mut lp = LinearProgram::new();
    let mut point = Vec::new();
    for j in 0..n {
        let lo = -(r.random_range(0..=3) as f64);
        let hi = r.random_range(0..=3) as f64;
        let cost = (r.random_range(-30..=30) as f64) / 10.0;
        lp.add_var(VarKey::aux(j), lo, hi, cost);
        point.push(r.random_range(lo..=hi));
    }
    for _ in 0..m {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if r.random_bool(0.7) {
                terms.push((j, (r.random_range(-30..=30) as f64) / 10.0));
            }
        }
        if terms.is_empty() {
            continue;
        }
        let act: f64 = terms.iter().map(|&(j, a)| a * point[j]).sum();
        let kind = r.random_range(0..3);
        let slack = r.random_range(0.0..2.0);
        let (sense, rhs) = match kind {
            0 => (Sense::Eq, act),
            1 => (Sense::Le, act + slack),
            _ => (Sense::Ge, act - slack),
        };
        lp.add_row(terms, sense, rhs);
    }
    if r.random_bool(0.15) {
        // x_0 >= hi + 1 cannot hold
        let hi = lp.vars()[0].upper;
        lp.add_row(vec![(0, 1.0)], Sense::Ge, hi + 1.0);
    }
    lp
}

/// Cheapest feasible labeling by brute force over all `k^N` labelings.
/// Returns the objective `<Y, S>` and the labels.
pub fn exhaustive_assignment(y: &DistanceMatrix, cs: &ConstraintSet) -> Option<(f64, Vec<usize>)> {
    let (k, n) = (y.n_clusters(), y.n_points());
    let mut labels = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        if labeling_feasible(&labels, cs) {
            let obj: f64 = labels.iter().enumerate().map(|(j, &l)| y.get(l, j)).sum();
            if best.as_ref().is_none_or(|b| obj < b.0) {
                best = Some((obj, labels.clone()));
            }
        }
        let mut p = 0;
        loop {
            if p == n {
                return best;
            }
            labels[p] += 1;
            if labels[p] < k {
                break;
            }
            labels[p] = 0;
            p += 1;
        }
    }
}

/// Direct constraint check on a labeling.
pub fn labeling_feasible(labels: &[usize], cs: &ConstraintSet) -> bool {
    let mut sizes = vec![0usize; cs.k()];
    for &l in labels {
        sizes[l] += 1;
    }
    let sizes_ok = (0..cs.k()).all(|i| {
        sizes[i] >= cs.lower()[i] && cs.upper()[i].is_none_or(|u| sizes[i] <= u)
    });
    let must_ok = cs.must_link().iter().all(|&(p, q)| labels[p] == labels[q]);
    let cannot_ok = cs.cannot_link().iter().all(|&(p, q)| labels[p] != labels[q]);
    let groups_ok = cs.cannot_link_groups().iter().all(|g| {
        g.iter()
            .enumerate()
            .all(|(a, &p)| g[a + 1..].iter().all(|&q| labels[p] != labels[q]))
    });
    sizes_ok && must_ok && cannot_ok && groups_ok
}

/// Squared distances computed independently of the library.
pub fn distances(x: &DMatrix<f64>, c: &DMatrix<f64>) -> DistanceMatrix {
    let y = DMatrix::from_fn(c.ncols(), x.ncols(), |i, j| {
        (0..x.nrows()).map(|r| (c[(r, i)] - x[(r, j)]).powi(2)).sum()
    });
    DistanceMatrix::from_raw(y).unwrap()
}

/// A tiny instance with size bounds, must-links and cannot-links built
/// around a planted labeling, so it is always feasible.
pub fn tiny_instance(seed: u64) -> (DataMatrix, DMatrix<f64>, ConstraintSet) {
    let mut r = rng(seed);
    let n = r.random_range(4..=8);
    let k = r.random_range(2..=3);
    let x = DMatrix::from_fn(2, n, |_, _| r.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(2, k, |_, _| r.random_range(-1.0..1.0));
    let planted: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let mut sizes = vec![0usize; k];
    for &l in &planted {
        sizes[l] += 1;
    }
    let lower: Vec<usize> = sizes
        .iter()
        .map(|&s| if r.random_bool(0.6) { s.saturating_sub(r.random_range(0..=1)) } else { 0 })
        .collect();
    let upper: Vec<Option<usize>> = sizes
        .iter()
        .map(|&s| r.random_bool(0.5).then(|| s + r.random_range(0..=1)))
        .collect();
    let mut must = Vec::new();
    let mut cannot = Vec::new();
    for _ in 0..r.random_range(0..=2) {
        let (p, q) = (r.random_range(0..n), r.random_range(0..n));
        if p != q && planted[p] == planted[q] {
            must.push((p, q));
        }
    }
    for _ in 0..r.random_range(0..=3) {
        let (p, q) = (r.random_range(0..n), r.random_range(0..n));
        if planted[p] != planted[q] {
            cannot.push((p, q));
        }
    }
    let cs = ConstraintSet::new(lower, upper, must, cannot).unwrap();
    (DataMatrix::new(x).unwrap(), c, cs)
}

/// Nearest-centroid labeling as a binary `k x N` matrix.
pub fn nearest_start(y: &DistanceMatrix) -> DMatrix<f64> {
    let (k, n) = (y.n_clusters(), y.n_points());
    let mut s = DMatrix::zeros(k, n);
    for j in 0..n {
        let mut best = 0;
        for i in 1..k {
            if y.get(i, j) < y.get(best, j) {
                best = i;
            }
        }
        s[(best, j)] = 1.0;
    }
    s
}

/// `||X - C S||_F^2 + lambda ||C||_F^2`, summed term by term.
pub fn regularized_objective(x: &DMatrix<f64>, c: &DMatrix<f64>, s: &DMatrix<f64>, lambda: f64) -> f64 {
    let mut f = 0.0;
    for j in 0..x.ncols() {
        for r in 0..x.nrows() {
            let mut pred = 0.0;
            for i in 0..c.ncols() {
                pred += c[(r, i)] * s[(i, j)];
            }
            f += (x[(r, j)] - pred).powi(2);
        }
    }
    f + lambda * c.iter().map(|v| v * v).sum::<f64>()
}

/// Central-difference gradient of [`regularized_objective`] in `C`.
pub fn fd_gradient(x: &DMatrix<f64>, c: &DMatrix<f64>, s: &DMatrix<f64>, lambda: f64, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(c.nrows(), c.ncols());
    for idx in 0..c.len() {
        let mut plus = c.clone();
        let mut minus = c.clone();
        plus[idx] += h;
        minus[idx] -= h;
        g[idx] = (regularized_objective(x, &plus, s, lambda)
            - regularized_objective(x, &minus, s, lambda))
            / (2.0 * h);
    }
    g
}
