//! Clustering quality measures and the evaluation report.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bckm::FitResult;
use crate::constraints::{audit, ConstraintSet, ViolationReport};
use crate::data::{AssignmentMatrix, CentroidMatrix, DataMatrix, LabelVector};
use crate::error::{Error, Result};

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `2 I(a; b) / (H(a) + H(b))`, natural logs.
///
/// Two constant labelings score 1; a constant labeling against a
/// non-constant one scores 0.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "label vectors",
            left: (a.len(), 1),
            right: (b.len(), 1),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("NMI of empty labelings".into()));
    }
    let n = a.len() as f64;
    let mut ca: HashMap<usize, usize> = HashMap::new();
    let mut cb: HashMap<usize, usize> = HashMap::new();
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        *joint.entry((x, y)).or_default() += 1;
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ca.len() == 1 && cb.len() == 1 {
        return Ok(1.0);
    }
    if ca.len() == 1 || cb.len() == 1 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let pxy = c as f64 / n;
        let px = ca[&x] as f64 / n;
        let py = cb[&y] as f64 / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// `sum_j ||x_j - c_{label(j)}||^2` for a binary assignment.
pub fn wcss(x: &DataMatrix, c: &CentroidMatrix, s: &AssignmentMatrix) -> Result<f64> {
    if !s.is_binary() {
        return Err(Error::NotBinary);
    }
    let labels = crate::data::labels_from_assignment(s)?;
    wcss_labels(x, c, &labels)
}

pub fn wcss_labels(x: &DataMatrix, c: &CentroidMatrix, labels: &LabelVector) -> Result<f64> {
    if x.dim() != c.dim() || labels.len() != x.n_points() || labels.n_clusters() > c.n_clusters()
    {
        return Err(Error::DimensionMismatch {
            what: "data/centroids/labels",
            left: (x.dim(), x.n_points()),
            right: (c.dim(), labels.len()),
        });
    }
    Ok(labels
        .as_slice()
        .iter()
        .enumerate()
        .map(|(j, &l)| (x.point(j) - c.centroid(l)).norm_squared())
        .sum())
}

/// Cluster means; empty clusters get the zero vector.
pub fn cluster_means(x: &DataMatrix, labels: &LabelVector) -> Result<CentroidMatrix> {
    let k = labels.n_clusters();
    let mut sums = nalgebra::DMatrix::zeros(x.dim(), k);
    let sizes = labels.sizes();
    for (j, &l) in labels.as_slice().iter().enumerate() {
        let mut col = sums.column_mut(l);
        col += x.point(j);
    }
    for (i, &sz) in sizes.iter().enumerate() {
        if sz > 0 {
            sums.column_mut(i).scale_mut(1.0 / sz as f64);
        }
    }
    CentroidMatrix::new(sums)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nmi: Option<f64>,
    pub wcss: Option<f64>,
    pub sizes: Vec<usize>,
    pub violations: ViolationReport,
    pub feasible: bool,
    pub runtime_seconds: Option<f64>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "nmi,wcss,n_clusters,min_size,max_size,size_violations,link_violations,feasible,runtime_seconds";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            opt(self.nmi),
            opt(self.wcss),
            self.sizes.len(),
            self.sizes.iter().min().copied().unwrap_or(0),
            self.sizes.iter().max().copied().unwrap_or(0),
            self.violations.size_violations.len(),
            self.violations.link_violation_count(),
            self.feasible,
            opt(self.runtime_seconds),
        )
    }
}

/// Scores a fitted result against optional ground truth and audits it.
pub fn evaluate(
    result: &FitResult,
    truth: Option<&LabelVector>,
    cs: &ConstraintSet,
) -> Result<EvalReport> {
    let nmi = truth
        .map(|t| nmi(result.labels.as_slice(), t.as_slice()))
        .transpose()?;
    let violations = audit(&result.assignment, cs, crate::data::BINARY_TOL)?;
    Ok(EvalReport {
        nmi,
        wcss: Some(result.wcss),
        sizes: result.labels.sizes(),
        feasible: violations.is_empty(),
        violations,
        runtime_seconds: Some(result.runtime_seconds),
    })
}

/// Scores bare labels; WCSS uses cluster means when data is supplied.
pub fn evaluate_labels(
    labels: &LabelVector,
    x: Option<&DataMatrix>,
    truth: Option<&LabelVector>,
    cs: &ConstraintSet,
) -> Result<EvalReport> {
    let nmi = truth.map(|t| nmi(labels.as_slice(), t.as_slice())).transpose()?;
    let wcss = x
        .map(|x| cluster_means(x, labels).and_then(|c| wcss_labels(x, &c, labels)))
        .transpose()?;
    let s = AssignmentMatrix::from_labels(labels);
    let violations = audit(&s, cs, crate::data::BINARY_TOL)?;
    Ok(EvalReport {
        nmi,
        wcss,
        sizes: labels.sizes(),
        feasible: violations.is_empty(),
        violations,
        runtime_seconds: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nmi_identical_and_permuted() {
        assert!((nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap() - 1.0).abs() < 1e-12);
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_independent_is_zero() {
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nmi_degenerate_cases() {
        assert_eq!(nmi(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
        assert!(nmi(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn nmi_known_value() {
        // a = [0,0,1,1], b = [0,0,0,1]: I = ln2 - (3/4) ln(3/2) ... computed by hand.
        let a = [0, 0, 1, 1];
        let b = [0, 0, 0, 1];
        let ha = std::f64::consts::LN_2;
        let hb = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        // joint: (0,0)=2, (1,0)=1, (1,1)=1
        let i = 0.5 * (0.5f64 / (0.5 * 0.75)).ln()
            + 0.25 * (0.25f64 / (0.5 * 0.75)).ln()
            + 0.25 * (0.25f64 / (0.5 * 0.25)).ln();
        let expected = 2.0 * i / (ha + hb);
        assert!((nmi(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn wcss_by_hand() {
        let x = DataMatrix::from_points(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![10.0, 1.0]]).unwrap();
        let labels = LabelVector::new(vec![0, 0, 1], 2).unwrap();
        let c = cluster_means(&x, &labels).unwrap();
        assert_eq!(c.centroid(0).as_slice(), &[1.0, 0.0]);
        assert_eq!(wcss_labels(&x, &c, &labels).unwrap(), 2.0);
        let s = AssignmentMatrix::from_labels(&labels);
        assert_eq!(wcss(&x, &c, &s).unwrap(), 2.0);
    }

    #[test]
    fn csv_row_has_header_arity() {
        let r = EvalReport {
            nmi: Some(0.5),
            wcss: None,
            sizes: vec![2, 3],
            violations: ViolationReport::default(),
            feasible: true,
            runtime_seconds: Some(1.5),
        };
        assert_eq!(
            r.csv_row().split(',').count(),
            EvalReport::CSV_HEADER.split(',').count()
        );
        assert_eq!(r.csv_row(), "0.5,,2,2,3,0,0,true,1.5");
    }

    proptest! {
        #[test]
        fn nmi_symmetric_bounded_permutation_invariant(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..40),
            perm_seed in 0usize..24,
        ) {
            let a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let ab = nmi(&a, &b).unwrap();
            let ba = nmi(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            let mut perm = [0, 1, 2, 3];
            let mut s = perm_seed;
            for i in (1..4).rev() {
                perm.swap(i, s % (i + 1));
                s /= i + 1;
            }
            let a2: Vec<usize> = a.iter().map(|&l| perm[l]).collect();
            prop_assert!((nmi(&a2, &b).unwrap() - ab).abs() < 1e-12);
        }
    }
}
