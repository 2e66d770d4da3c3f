//! k-nearest-neighbor analysis of Gaussian centers.
//!
//! Each point owns a neighborhood made of itself plus its `k` nearest other
//! points. The scatter matrix of that neighborhood feeds the kNN shape losses,
//! and [`knn_loss_and_grad`] pulls the loss gradient back to every position.

mod kdtree;

pub use kdtree::KdTree;

use crate::features::FeatureKind;
use crate::linalg3::{eig_sym3, LinalgError, NormalizedEigenvalues, SymMat3, Vec3};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeighborhoodError {
    #[error("need at least {needed} points for k = {k}, got {got}")]
    TooFewPoints { needed: usize, got: usize, k: usize },
    #[error("k must be at least 3, got {0}")]
    KTooSmall(usize),
    #[error("point {0} has non-finite coordinates")]
    NonFinite(usize),
    #[error("{0} is not a neighborhood feature")]
    NotKnnFeature(FeatureKind),
    #[error("index was built for {index} points but the cloud has {cloud}")]
    StaleIndex { index: usize, cloud: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), NeighborhoodError> {
        match self.points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            Some(i) => Err(NeighborhoodError::NonFinite(i)),
            None => Ok(()),
        }
    }

    /// Axis-aligned bounding box diagonal length.
    pub fn bbox_diagonal(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let (lo, hi) = self.points.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        (hi - lo).norm()
    }
}

/// Snapshot of each point's `k` nearest neighbors (owner excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodIndex {
    k: usize,
    neighbors: Vec<u32>,
    pub snapshot_iteration: usize,
}

impl NeighborhoodIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len() / self.k.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }
}

/// Exact kNN lists for every point; ties go to the lower index.
pub fn build_index(pc: &PointCloud, k: usize) -> Result<NeighborhoodIndex, NeighborhoodError> {
    if k < 3 {
        return Err(NeighborhoodError::KTooSmall(k));
    }
    if pc.len() < k + 1 {
        return Err(NeighborhoodError::TooFewPoints { needed: k + 1, got: pc.len(), k });
    }
    pc.validate()?;
    let tree = KdTree::new(&pc.points);
    let lists: Vec<Vec<u32>> = pc
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| tree.knn(p, k, Some(i)).into_iter().map(|(j, _)| j as u32).collect())
        .collect();
    Ok(NeighborhoodIndex { k, neighbors: lists.concat(), snapshot_iteration: 0 })
}

/// Scatter matrix and centroid of point `i` together with its neighbors,
/// both averaged over the `k + 1` members.
pub fn neighborhood_covariance(pc: &PointCloud, idx: &NeighborhoodIndex, i: usize) -> (SymMat3, Vec3) {
    let members = std::iter::once(i).chain(idx.neighbors(i).iter().map(|&j| j as usize));
    let m = (idx.k + 1) as f64;
    let centroid = members.clone().fold(Vec3::zeros(), |acc, j| acc + pc.points[j]) / m;
    let cov = members
        .fold(SymMat3::ZERO, |acc, j| acc.add(&SymMat3::outer(&(pc.points[j] - centroid))))
        .scale(1.0 / m);
    (cov, centroid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnLoss {
    /// Mean of the per-neighborhood losses.
    pub loss: f64,
    /// Gradient of `loss` with respect to every position.
    pub grads: Vec<Vec3>,
    /// Neighborhoods whose spectrum summed to (almost) zero.
    pub degenerate: usize,
}

struct Contribution {
    loss: f64,
    /// `Σᵢ (∂L/∂λᵢ) εᵢεᵢᵀ`; the gradient of member `j` is `(2/(k+1))·G·(pⱼ − p̄)`.
    weight: SymMat3,
    centroid: Vec3,
    degenerate: bool,
}

fn contribution(
    pc: &PointCloud,
    idx: &NeighborhoodIndex,
    i: usize,
    kind: FeatureKind,
) -> Result<Contribution, LinalgError> {
    let (cov, centroid) = neighborhood_covariance(pc, idx, i);
    let eig = eig_sym3(&cov)?;
    let normalized = NormalizedEigenvalues::from_values(eig.values)?;
    let f = kind.loss(&normalized);
    let raw_grad = average_over_ties(&eig.values, normalized.backprop(f.grad));
    let weight = (0..3).fold(SymMat3::ZERO, |acc, n| {
        acc.add(&SymMat3::outer(&eig.vectors[n]).scale(raw_grad[n]))
    });
    Ok(Contribution { loss: f.value, weight, centroid, degenerate: normalized.is_degenerate() })
}

/// Relative gap below which two eigenvalues count as equal.
const TIE_TOLERANCE: f64 = 1e-12;

/// Averages the gradient over each group of equal eigenvalues. Inside a
/// repeated eigenspace the eigenvectors are arbitrary; the averaged
/// coefficients make `Σ gᵢ εᵢεᵢᵀ` independent of that choice.
fn average_over_ties(values: &[f64; 3], grad: [f64; 3]) -> [f64; 3] {
    let scale = values.iter().map(|v| v.abs()).sum::<f64>();
    let tied = |a: usize, b: usize| (values[a] - values[b]).abs() <= TIE_TOLERANCE * scale;
    match (tied(0, 1), tied(1, 2)) {
        (true, true) => [(grad[0] + grad[1] + grad[2]) / 3.0; 3],
        (true, false) => {
            let m = 0.5 * (grad[0] + grad[1]);
            [m, m, grad[2]]
        }
        (false, true) => {
            let m = 0.5 * (grad[1] + grad[2]);
            [grad[0], m, m]
        }
        (false, false) => grad,
    }
}

/// Mean kNN shape loss over all neighborhoods and its gradient.
///
/// Neighbor selection is frozen in `idx`; gradients flow through positions
/// only. Evaluation is parallel per neighborhood, accumulation is sequential
/// in point order so results do not depend on the thread count.
pub fn knn_loss_and_grad(
    pc: &PointCloud,
    idx: &NeighborhoodIndex,
    kind: FeatureKind,
) -> Result<KnnLoss, NeighborhoodError> {
    if !kind.is_knn() {
        return Err(NeighborhoodError::NotKnnFeature(kind));
    }
    if idx.len() != pc.len() {
        return Err(NeighborhoodError::StaleIndex { index: idx.len(), cloud: pc.len() });
    }
    let n = pc.len();
    let contributions: Vec<Contribution> = (0..n)
        .into_par_iter()
        .map(|i| contribution(pc, idx, i, kind))
        .collect::<Result<_, _>>()?;

    let mut grads = vec![Vec3::zeros(); n];
    let mut loss = 0.0;
    let mut degenerate = 0;
    let inv_n = 1.0 / n as f64;
    let member_scale = 2.0 / (idx.k + 1) as f64 * inv_n;
    for (i, c) in contributions.iter().enumerate() {
        loss += c.loss;
        if c.degenerate {
            degenerate += 1;
            continue;
        }
        let members = std::iter::once(i).chain(idx.neighbors(i).iter().map(|&j| j as usize));
        for j in members {
            grads[j] += c.weight.mul_vec(&(pc.points[j] - c.centroid)) * member_scale;
        }
    }
    Ok(KnnLoss { loss: loss * inv_n, grads, degenerate })
}

/// Per-point planarity, omnivariance and eigenentropy of each neighborhood.
pub fn point_features(pc: &PointCloud, idx: &NeighborhoodIndex) -> Result<Vec<[f64; 3]>, NeighborhoodError> {
    (0..pc.len())
        .into_par_iter()
        .map(|i| {
            let (cov, _) = neighborhood_covariance(pc, idx, i);
            let n = NormalizedEigenvalues::from_values(eig_sym3(&cov)?.values)?;
            Ok([
                crate::features::planarity(&n).value,
                crate::features::omnivariance_loss(&n).value,
                crate::features::eigenentropy_loss(&n).value,
            ])
        })
        .collect()
}
