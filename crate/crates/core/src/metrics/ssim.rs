//! Structural similarity with an 11×11 Gaussian window (σ = 1.5).
//!
//! Statistics are evaluated only where the window fits inside the image, so
//! both dimensions must be at least [`WINDOW`]. The per-channel SSIM maps are
//! averaged over positions and channels.

use super::MetricsError;
use crate::renderer::ImageBuffer;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

fn kernel() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut k = [0.0; WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-(d * d) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable valid-region filter: `(w, h) → (w − 10, h − 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w + 1 - WINDOW;
    let oh = h + 1 - WINDOW;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|t| k[t] * line[x + t]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|t| k[t] * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: `(w − 10, h − 10) → (w, h)`.
fn filter_valid_adjoint(src: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w + 1 - WINDOW;
    let oh = h + 1 - WINDOW;
    let mut rows = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for t in 0..WINDOW {
                rows[(y + t) * ow + x] += k[t] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = rows[y * ow + x];
            for t in 0..WINDOW {
                out[y * w + x + t] += k[t] * v;
            }
        }
    }
    out
}

fn check(a: &ImageBuffer, b: &ImageBuffer) -> Result<(), MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::DimensionMismatch {
            left: (a.width, a.height),
            right: (b.width, b.height),
        });
    }
    if a.width < WINDOW || a.height < WINDOW {
        return Err(MetricsError::TooSmall { width: a.width, height: a.height, min: WINDOW });
    }
    Ok(())
}

struct ChannelStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    e_xx: Vec<f64>,
    e_yy: Vec<f64>,
    e_xy: Vec<f64>,
}

fn channel_stats(x: &[f64], y: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> ChannelStats {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    ChannelStats {
        mu_x: filter_valid(x, w, h, k),
        mu_y: filter_valid(y, w, h, k),
        e_xx: filter_valid(&xx, w, h, k),
        e_yy: filter_valid(&yy, w, h, k),
        e_xy: filter_valid(&xy, w, h, k),
    }
}

/// Mean SSIM of `a` against `b`.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricsError> {
    Ok(ssim_impl(a, b, false)?.0)
}

/// Mean SSIM and its gradient with respect to the pixels of `a`.
pub fn ssim_with_grad(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, Vec<f64>), MetricsError> {
    ssim_impl(a, b, true)
}

fn ssim_impl(a: &ImageBuffer, b: &ImageBuffer, want_grad: bool) -> Result<(f64, Vec<f64>), MetricsError> {
    check(a, b)?;
    let (w, h) = (a.width, a.height);
    let k = kernel();
    let positions = (w + 1 - WINDOW) * (h + 1 - WINDOW);
    let norm = 1.0 / (3 * positions) as f64;
    let mut total = 0.0;
    let mut grad = if want_grad { vec![0.0; a.data.len()] } else { Vec::new() };
    for c in 0..3 {
        let x = a.channel(c);
        let y = b.channel(c);
        let s = channel_stats(&x, &y, w, h, &k);
        let mut d_mu = vec![0.0; positions];
        let mut d_exx = vec![0.0; positions];
        let mut d_exy = vec![0.0; positions];
        for p in 0..positions {
            let (mx, my) = (s.mu_x[p], s.mu_y[p]);
            let var_x = s.e_xx[p] - mx * mx;
            let var_y = s.e_yy[p] - my * my;
            let cov = s.e_xy[p] - mx * my;
            let n1 = 2.0 * mx * my + C1;
            let n2 = 2.0 * cov + C2;
            let d1 = mx * mx + my * my + C1;
            let d2 = var_x + var_y + C2;
            let value = n1 * n2 / (d1 * d2);
            total += value;
            if want_grad {
                let ds_dmu = 2.0 * my * n2 / (d1 * d2) - value * 2.0 * mx / d1;
                let ds_dvar = -value / d2;
                let ds_dcov = 2.0 * n1 / (d1 * d2);
                d_mu[p] = ds_dmu - 2.0 * mx * ds_dvar - my * ds_dcov;
                d_exx[p] = ds_dvar;
                d_exy[p] = ds_dcov;
            }
        }
        if want_grad {
            let g_mu = filter_valid_adjoint(&d_mu, w, h, &k);
            let g_xx = filter_valid_adjoint(&d_exx, w, h, &k);
            let g_xy = filter_valid_adjoint(&d_exy, w, h, &k);
            for q in 0..w * h {
                grad[q * 3 + c] = norm * (g_mu[q] + 2.0 * x[q] * g_xx[q] + y[q] * g_xy[q]);
            }
        }
    }
    Ok((total * norm, grad))
}
