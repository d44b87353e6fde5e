//! Seeded Gaussian-blob generator with balanced size bounds and sampled
//! pairwise links.
//!
//! Randomness comes from ChaCha8 seeded with the user seed; cluster centers,
//! points and link sampling each draw from their own stream (0, 1, 2) so
//! changing one part never shifts another.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::data::{DataMatrix, LabelVector};
use crate::error::{Error, Result};

const STREAM_CENTERS: u64 = 0;
const STREAM_POINTS: u64 = 1;
const STREAM_LINKS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Number of clusters.
    pub k: usize,
    /// Points per cluster.
    pub n: usize,
    pub d: usize,
    /// Standard deviation of each coordinate around its center.
    pub sigma: f64,
    pub link_fraction: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(k: usize, n: usize, d: usize, sigma: f64, seed: u64) -> Self {
        Self {
            k,
            n,
            d,
            sigma,
            link_fraction: 0.2,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 || self.d == 0 {
            return Err(Error::InvalidInput(format!(
                "k, n and d must be positive (k={}, n={}, d={})",
                self.k, self.n, self.d
            )));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid sigma {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.link_fraction) {
            return Err(Error::InvalidInput(format!(
                "link fraction {} outside [0, 1]",
                self.link_fraction
            )));
        }
        Ok(())
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Draws `k` centers uniformly in `[-1, 1]^d` and `n` points around each.
/// Points are ordered cluster by cluster.
pub fn generate(spec: &SynthSpec) -> Result<(DataMatrix, LabelVector)> {
    spec.validate()?;
    let mut rc = rng(spec.seed, STREAM_CENTERS);
    let centers = DMatrix::from_fn(spec.d, spec.k, |_, _| rc.random_range(-1.0..=1.0));
    let noise = Normal::new(0.0, spec.sigma)
        .map_err(|e| Error::InvalidInput(format!("sigma: {e}")))?;
    let mut rp = rng(spec.seed, STREAM_POINTS);
    let total = spec.k * spec.n;
    let mut x = DMatrix::zeros(spec.d, total);
    let mut labels = Vec::with_capacity(total);
    for j in 0..total {
        let c = j / spec.n;
        for r in 0..spec.d {
            x[(r, j)] = centers[(r, c)] + noise.sample(&mut rp);
        }
        labels.push(c);
    }
    Ok((DataMatrix::new(x)?, LabelVector::new(labels, spec.k)?))
}

/// Lower bound `n` per cluster, no upper bound.
pub fn balanced_bounds(k: usize, n: usize) -> (Vec<usize>, Vec<Option<usize>>) {
    (vec![n; k], vec![None; k])
}

type Pairs = Vec<(usize, usize)>;

/// Samples `floor(fraction * size)` points per true cluster. Consecutive
/// samples within a cluster are must-linked; the `r`-th samples of clusters
/// `c` and `c + 1` are cannot-linked.
pub fn sample_links(
    truth: &LabelVector,
    fraction: f64,
    seed: u64,
) -> Result<(Pairs, Pairs)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!(
            "link fraction {fraction} outside [0, 1]"
        )));
    }
    let k = truth.n_clusters();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (j, &l) in truth.as_slice().iter().enumerate() {
        members[l].push(j);
    }
    let mut r = rng(seed, STREAM_LINKS);
    let sampled: Vec<Vec<usize>> = members
        .iter()
        .map(|m| {
            let count = (fraction * m.len() as f64).floor() as usize;
            sample(&mut r, m.len(), count)
                .into_iter()
                .map(|i| m[i])
                .collect()
        })
        .collect();
    let mut must = Vec::new();
    for s in &sampled {
        must.extend(s.windows(2).map(|w| (w[0], w[1])));
    }
    let mut cannot = Vec::new();
    for c in 0..k.saturating_sub(1) {
        let (a, b) = (&sampled[c], &sampled[c + 1]);
        cannot.extend(a.iter().zip(b).map(|(&p, &q)| (p, q)));
    }
    Ok((must, cannot))
}

/// Balanced bounds plus sampled links for a generated instance.
pub fn constraints_for(spec: &SynthSpec, truth: &LabelVector) -> Result<ConstraintSet> {
    let (lower, upper) = balanced_bounds(spec.k, spec.n);
    let (must, cannot) = sample_links(truth, spec.link_fraction, spec.seed)?;
    ConstraintSet::new(lower, upper, must, cannot)
}

/// Data, ground truth and constraints in one call.
pub fn generate_instance(spec: &SynthSpec) -> Result<(DataMatrix, LabelVector, ConstraintSet)> {
    let (x, truth) = generate(spec)?;
    let cs = constraints_for(spec, &truth)?;
    Ok((x, truth, cs))
}
