//! Evaluation metrics: Chamfer cloud-to-cloud distances, PSNR and SSIM.

mod ssim;

pub use ssim::{ssim, ssim_with_grad, C1, C2, SIGMA as SSIM_SIGMA, WINDOW as SSIM_WINDOW};

use crate::neighborhood::{KdTree, PointCloud};
use crate::renderer::ImageBuffer;
use rayon::prelude::*;
use thiserror::Error;

/// PSNR reported for (near-)identical images.
pub const PSNR_CAP: f64 = 120.0;

/// Default Chamfer mask distance in scene units.
pub const DEFAULT_MASK_THRESHOLD: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("image sizes differ: {left:?} vs {right:?}")]
    DimensionMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("image {width}x{height} is smaller than the {min}x{min} SSIM window")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("point cloud is empty")]
    EmptyCloud,
}

/// Peak signal-to-noise ratio on the `[0, 1]` scale over all channels.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::DimensionMismatch {
            left: (a.width, a.height),
            right: (b.width, b.height),
        });
    }
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len().max(1) as f64;
    if mse < 1e-12 {
        return Ok(PSNR_CAP);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Chamfer evaluation of a reconstruction against a reference cloud.
///
/// Accuracy is the mean distance from each reconstructed point to the
/// reference, completeness the mean distance from each reference point to the
/// reconstruction. The masked variant drops reconstructed points farther than
/// the threshold from the accuracy term only.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamferReport {
    pub mean_all: f64,
    pub mean_masked: f64,
    pub mask_threshold: f64,
    pub accuracy: f64,
    pub accuracy_masked: f64,
    pub completeness: f64,
    /// Nearest-reference distance of every reconstructed point.
    pub recon_distances: Vec<f64>,
    /// Nearest-reconstruction distance of every reference point.
    pub reference_distances: Vec<f64>,
    pub fraction_masked_out: f64,
}

fn nearest_distances(queries: &[crate::linalg3::Vec3], tree: &KdTree) -> Vec<f64> {
    queries
        .par_iter()
        .map(|q| tree.nearest(q).map_or(f64::INFINITY, |(_, d)| d))
        .collect()
}

pub fn chamfer(recon: &PointCloud, reference: &PointCloud, threshold: f64) -> Result<ChamferReport, MetricsError> {
    if recon.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let recon_distances = nearest_distances(&recon.points, &KdTree::new(&reference.points));
    let reference_distances = nearest_distances(&reference.points, &KdTree::new(&recon.points));
    let accuracy = recon_distances.iter().sum::<f64>() / recon_distances.len() as f64;
    let completeness = reference_distances.iter().sum::<f64>() / reference_distances.len() as f64;
    let (kept_sum, kept) = recon_distances
        .iter()
        .filter(|&&d| d <= threshold)
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    let accuracy_masked = if kept > 0 { kept_sum / kept as f64 } else { 0.0 };
    Ok(ChamferReport {
        mean_all: 0.5 * (accuracy + completeness),
        mean_masked: 0.5 * (accuracy_masked + completeness),
        mask_threshold: threshold,
        accuracy,
        accuracy_masked,
        completeness,
        fraction_masked_out: 1.0 - kept as f64 / recon_distances.len() as f64,
        recon_distances,
        reference_distances,
    })
}
