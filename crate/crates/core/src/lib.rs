//! Constrained K-Means clustering by binary optimization.
//!
//! The assignment step searches the binary domain directly: an l1-penalty
//! feasibility pump alternates a linear program over the constraint polytope
//! with a closed-form rounding step, escalating penalties until the relaxed
//! and binary iterates agree. Centroids are updated in closed form with a
//! small ridge term.

pub mod baselines;
pub mod bckm;
pub mod constraints;
pub mod csv_io;
pub mod data;
pub mod error;
pub mod lp;
pub mod metrics;
pub mod penalty;
pub mod synth;

pub use constraints::{audit, ConstraintSet, ViolationReport};
pub use data::{
    compute_distance_matrix, labels_from_assignment, AssignmentMatrix, CentroidMatrix,
    DataMatrix, DistanceMatrix, LabelVector,
};
pub use error::{Error, Result};
