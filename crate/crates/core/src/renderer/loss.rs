use super::ImageBuffer;
use crate::metrics::{ssim_with_grad, MetricsError};

/// `(1 - θ)·L1 + θ·(1 - SSIM)/2` and its gradient w.r.t. the rendered image.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotometricLoss {
    pub loss: f64,
    pub l1: f64,
    pub ssim: f64,
    /// Gradient w.r.t. `rendered.data`.
    pub grad: Vec<f64>,
}

pub fn photometric_loss(rendered: &ImageBuffer, truth: &ImageBuffer, theta: f64) -> Result<PhotometricLoss, MetricsError> {
    let (ssim, ssim_grad) = ssim_with_grad(rendered, truth)?;
    let n = rendered.data.len() as f64;
    let mut l1 = 0.0;
    let grad = rendered
        .data
        .iter()
        .zip(&truth.data)
        .zip(&ssim_grad)
        .map(|((r, t), gs)| {
            let d = r - t;
            l1 += d.abs();
            let sign = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            (1.0 - theta) * sign / n - 0.5 * theta * gs
        })
        .collect();
    l1 /= n;
    Ok(PhotometricLoss { loss: (1.0 - theta) * l1 + theta * 0.5 * (1.0 - ssim), l1, ssim, grad })
}
