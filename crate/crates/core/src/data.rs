//! Numeric containers shared by every algorithm in the crate.
//!
//! Points and centroids are stored column-major: a `d x N` data matrix holds
//! one point per column, a `d x k` centroid matrix one centroid per column.
//! Assignments are `k x N` matrices whose column `j` describes point `j`.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default tolerance for treating an assignment entry as binary.
pub const BINARY_TOL: f64 = 1e-6;

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn matrix_from_columns(columns: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let first = columns
        .first()
        .ok_or_else(|| Error::InvalidInput(format!("{what} needs at least one column")))?;
    let d = first.len();
    if d == 0 {
        return Err(Error::InvalidInput(format!("{what} needs dimension >= 1")));
    }
    if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != d) {
        return Err(Error::InvalidInput(format!(
            "{what} column {j} has length {} but expected {d}",
            c.len()
        )));
    }
    Ok(DMatrix::from_fn(d, columns.len(), |i, j| columns[j][i]))
}

fn columns_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// A `d x N` point set, one point per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "data matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        check_finite(&values)?;
        Ok(Self(values))
    }

    /// Builds the matrix from a list of points.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_columns(points, "data matrix")?)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.0.ncols()
    }

    pub fn point(&self, j: usize) -> nalgebra::DVectorView<'_, f64> {
        self.0.column(j)
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        columns_of(&self.0)
    }
}

/// A `d x k` centroid set, one centroid per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidMatrix(DMatrix<f64>);

impl CentroidMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "centroid matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn from_centroids(centroids: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_columns(centroids, "centroid matrix")?)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.0.ncols()
    }

    pub fn centroid(&self, i: usize) -> nalgebra::DVectorView<'_, f64> {
        self.0.column(i)
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Squared Frobenius distance to another centroid set of the same shape.
    pub fn frobenius_sq_diff(&self, other: &CentroidMatrix) -> f64 {
        (&self.0 - &other.0).norm_squared()
    }
}

impl Serialize for CentroidMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        columns_of(&self.0).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CentroidMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let cols = Vec::<Vec<f64>>::deserialize(deserializer)?;
        CentroidMatrix::from_centroids(&cols).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    Relaxed,
    Binary,
}

/// A `k x N` assignment matrix, either relaxed to `[0, 1]` or binary with
/// exactly one 1 per column.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    values: DMatrix<f64>,
    mode: AssignmentMode,
}

impl AssignmentMatrix {
    pub fn relaxed(values: DMatrix<f64>) -> Result<Self> {
        check_finite(&values)?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "relaxed assignment entry {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            values,
            mode: AssignmentMode::Relaxed,
        })
    }

    pub fn binary(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::NotBinary);
        }
        for (j, col) in values.column_iter().enumerate() {
            if col.sum() != 1.0 {
                return Err(Error::InvalidInput(format!(
                    "binary assignment column {j} sums to {}",
                    col.sum()
                )));
            }
        }
        Ok(Self {
            values,
            mode: AssignmentMode::Binary,
        })
    }

    pub fn from_labels(labels: &LabelVector) -> Self {
        let mut values = DMatrix::zeros(labels.n_clusters(), labels.len());
        for (j, &l) in labels.as_slice().iter().enumerate() {
            values[(l, j)] = 1.0;
        }
        Self {
            values,
            mode: AssignmentMode::Binary,
        }
    }

    pub fn mode(&self) -> AssignmentMode {
        self.mode
    }

    pub fn is_binary(&self) -> bool {
        self.mode == AssignmentMode::Binary
    }

    pub fn n_clusters(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Number of entries farther than `tol` from both 0 and 1.
    pub fn nonbinary_count(&self, tol: f64) -> usize {
        self.values
            .iter()
            .filter(|v| (*v - v.round()).abs() > tol)
            .count()
    }

    /// Elementwise rounding to the nearest integer, with no feasibility checks.
    pub fn rounded(&self) -> DMatrix<f64> {
        self.values.map(|v| v.round().clamp(0.0, 1.0))
    }

    /// Snaps a relaxed matrix to binary when every entry is within `tol` of
    /// {0, 1} and every column then has a single one.
    pub fn snap_to_binary(&self, tol: f64) -> Option<AssignmentMatrix> {
        if self.nonbinary_count(tol) > 0 {
            return None;
        }
        AssignmentMatrix::binary(self.rounded()).ok()
    }

    /// Row sums, i.e. the (possibly fractional) cluster sizes.
    pub fn row_sums(&self) -> Vec<f64> {
        self.values.row_iter().map(|r| r.sum()).collect()
    }
}

/// Cluster labels, 0-based, one per point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    k: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("label vector needs k >= 1".into()));
        }
        if let Some((j, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::InvalidInput(format!(
                "label {l} of point {j} is outside [0, {k})"
            )));
        }
        Ok(Self { labels, k })
    }

    /// Uses `max(label) + 1` as the number of clusters.
    pub fn from_vec(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(1, |m| m + 1);
        Self { labels, k }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Labels of a binary assignment: the row holding the one in each column.
pub fn labels_from_assignment(s: &AssignmentMatrix) -> Result<LabelVector> {
    if !s.is_binary() {
        return Err(Error::NotBinary);
    }
    let labels = s
        .as_matrix()
        .column_iter()
        .map(|c| c.iter().position(|&v| v == 1.0).expect("binary column"))
        .collect();
    LabelVector::new(labels, s.n_clusters())
}

pub fn assignment_from_labels(labels: &LabelVector) -> AssignmentMatrix {
    AssignmentMatrix::from_labels(labels)
}

/// `k x N` matrix of exact squared Euclidean distances between centroids and
/// points.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(DMatrix<f64>);

impl DistanceMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn n_clusters(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.0.ncols()
    }

    /// Frobenius inner product with an assignment matrix.
    pub fn inner(&self, s: &AssignmentMatrix) -> f64 {
        self.0.dot(s.as_matrix())
    }

    /// Wraps a raw cost matrix; entries must be finite and non-negative.
    pub fn from_raw(values: DMatrix<f64>) -> Result<Self> {
        check_finite(&values)?;
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("negative squared distance".into()));
        }
        Ok(Self(values))
    }
}

pub fn compute_distance_matrix(x: &DataMatrix, c: &CentroidMatrix) -> Result<DistanceMatrix> {
    if x.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            what: "data and centroid dimensions differ",
            left: (x.dim(), x.n_points()),
            right: (c.dim(), c.n_clusters()),
        });
    }
    let (k, n) = (c.n_clusters(), x.n_points());
    let mut y = DMatrix::zeros(k, n);
    for j in 0..n {
        let xj = x.point(j);
        for i in 0..k {
            y[(i, j)] = xj
                .iter()
                .zip(c.centroid(i).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
        }
    }
    Ok(DistanceMatrix(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_identity_case() {
        let x = DataMatrix::from_points(&[vec![0.0, 0.0]]).unwrap();
        let c = CentroidMatrix::from_centroids(&[vec![0.0, 0.0]]).unwrap();
        let y = compute_distance_matrix(&x, &c).unwrap();
        assert_eq!(y.as_matrix().as_slice(), &[0.0]);
    }

    #[test]
    fn distance_three_four_five() {
        let x = DataMatrix::from_points(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let c = CentroidMatrix::from_centroids(&[vec![0.0, 0.0]]).unwrap();
        let y = compute_distance_matrix(&x, &c).unwrap();
        assert_eq!(y.as_matrix().as_slice(), &[0.0, 25.0]);
    }

    #[test]
    fn distance_dimension_mismatch_names_shapes() {
        let x = DataMatrix::from_points(&[vec![0.0, 0.0]]).unwrap();
        let c = CentroidMatrix::from_centroids(&[vec![0.0, 0.0, 1.0]]).unwrap();
        let err = compute_distance_matrix(&x, &c).unwrap_err().to_string();
        assert!(err.contains("(2, 1)") && err.contains("(3, 1)"), "{err}");
    }

    #[test]
    fn labels_from_identity_and_ones() {
        let s = AssignmentMatrix::binary(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(labels_from_assignment(&s).unwrap().as_slice(), &[0, 1]);
        let s = AssignmentMatrix::binary(DMatrix::from_element(1, 4, 1.0)).unwrap();
        assert_eq!(labels_from_assignment(&s).unwrap().as_slice(), &[0; 4]);
    }

    #[test]
    fn labels_reject_relaxed() {
        let s = AssignmentMatrix::relaxed(DMatrix::from_element(2, 2, 0.5)).unwrap();
        assert!(matches!(labels_from_assignment(&s), Err(Error::NotBinary)));
    }

    #[test]
    fn binary_mode_validates_columns() {
        assert!(AssignmentMatrix::binary(DMatrix::from_element(2, 1, 1.0)).is_err());
        assert!(AssignmentMatrix::binary(DMatrix::from_element(2, 1, 0.5)).is_err());
        assert!(AssignmentMatrix::relaxed(DMatrix::from_element(2, 1, 1.5)).is_err());
    }

    #[test]
    fn snap_to_binary_respects_tolerance() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0 - 1e-9, 1e-9, 1e-9, 1.0]);
        let s = AssignmentMatrix::relaxed(m).unwrap();
        let b = s.snap_to_binary(BINARY_TOL).unwrap();
        assert_eq!(b.as_matrix(), &DMatrix::identity(2, 2));
        let m = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        assert!(AssignmentMatrix::relaxed(m)
            .unwrap()
            .snap_to_binary(BINARY_TOL)
            .is_none());
    }

    #[test]
    fn rejects_non_finite_points() {
        let err = DataMatrix::from_points(&[vec![0.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0 }));
    }
}
