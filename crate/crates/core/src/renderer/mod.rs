//! Differentiable tile rasterizer for 3D Gaussians.
//!
//! Gaussians are projected with the local affine (EWA) approximation, sorted
//! globally by camera depth and alpha-composited front to back. The backward
//! pass recomputes the forward compositing and returns analytic gradients for
//! every Gaussian parameter.

mod camera;
mod image;
mod loss;

pub use camera::{Camera, CameraError};
pub use image::ImageBuffer;
pub use loss::{photometric_loss, PhotometricLoss};

use crate::gaussians::{GaussianGrads, GaussianSet};
use crate::linalg3::Vec3;
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2};
use rayon::prelude::*;
use std::cmp::Ordering;

/// Squared Mahalanobis radius beyond which a splat contributes nothing.
pub const MAHALANOBIS_CUTOFF: f64 = 9.0;
/// Compositing stops once transmittance drops below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSettings {
    pub background: Vec3,
    pub near: f64,
    /// Added to the diagonal of every 2D covariance (pixels²).
    pub dilation: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings { background: Vec3::zeros(), near: 0.01, dilation: 0.3 }
    }
}

/// A Gaussian projected to the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    /// Index into the source `GaussianSet`.
    pub id: usize,
    pub mean: [f64; 2],
    /// Upper triangle `[a, b, c]` of the 2×2 covariance.
    pub cov: [f64; 3],
    /// Upper triangle of the inverse covariance.
    pub conic: [f64; 3],
    pub depth: f64,
    pub color: Vec3,
    pub opacity: f64,
    /// Screen-space radius at the cutoff, in pixels.
    pub radius: f64,
}

struct Projection {
    t: Vec3,
    j: Matrix2x3<f64>,
    /// Camera-frame 3D covariance.
    m: Matrix3<f64>,
    cov2: Matrix2<f64>,
}

fn project_one(set: &GaussianSet, i: usize, cam: &Camera, settings: &RenderSettings) -> Option<Projection> {
    let t = cam.world_to_camera(&set.means[i]);
    if !(t.z > settings.near) {
        return None;
    }
    let (fx, fy) = (cam.fx, cam.fy);
    let iz = 1.0 / t.z;
    let j = Matrix2x3::new(fx * iz, 0.0, -fx * t.x * iz * iz, 0.0, fy * iz, -fy * t.y * iz * iz);
    let w = cam.rotation;
    let m = w * set.world_covariance(i).to_matrix() * w.transpose();
    let mut cov2 = j * m * j.transpose();
    cov2[(0, 1)] = 0.5 * (cov2[(0, 1)] + cov2[(1, 0)]);
    cov2[(1, 0)] = cov2[(0, 1)];
    cov2[(0, 0)] += settings.dilation;
    cov2[(1, 1)] += settings.dilation;
    Some(Projection { t, j, m, cov2 })
}

/// Projects every Gaussian and drops those behind the near plane, with a
/// singular footprint, or entirely outside the image.
pub fn project(set: &GaussianSet, cam: &Camera, settings: &RenderSettings) -> Vec<Splat2D> {
    (0..set.len())
        .into_par_iter()
        .filter_map(|i| {
            let p = project_one(set, i, cam, settings)?;
            let (a, b, c) = (p.cov2[(0, 0)], p.cov2[(0, 1)], p.cov2[(1, 1)]);
            let det = a * c - b * b;
            if !(det > 0.0) {
                return None;
            }
            let mid = 0.5 * (a + c);
            let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
            let radius = MAHALANOBIS_CUTOFF.sqrt() * lambda_max.sqrt();
            let mean = cam.project_camera_point(&p.t);
            if mean[0] + radius < 0.0
                || mean[1] + radius < 0.0
                || mean[0] - radius > cam.width as f64
                || mean[1] - radius > cam.height as f64
            {
                return None;
            }
            Some(Splat2D {
                id: i,
                mean,
                cov: [a, b, c],
                conic: [c / det, -b / det, a / det],
                depth: p.t.z,
                color: set.colors[i],
                opacity: set.opacity(i),
                radius,
            })
        })
        .collect()
}

fn sort_splats(splats: &[Splat2D]) -> Vec<&Splat2D> {
    let mut order: Vec<&Splat2D> = splats.iter().collect();
    order.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap_or(Ordering::Equal).then(a.id.cmp(&b.id)));
    order
}

/// Pixel indices `[lo, hi]` along one axis whose centers may lie inside the
/// cutoff ellipse of a splat with the given center and marginal variance.
fn pixel_span(center: f64, var: f64, size: usize) -> Option<(usize, usize)> {
    let half = (MAHALANOBIS_CUTOFF * var).sqrt();
    let lo = (center - half - 0.5).ceil().max(0.0);
    let hi = (center + half - 0.5).floor().min(size as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// One splat's contribution to one pixel.
struct Contribution {
    pixel: u32,
    g: f64,
    alpha: f64,
    /// Transmittance in front of the splat.
    transmittance: f64,
}

/// Contributions grouped by sorted splat: splat `k` owns
/// `contributions[offsets[k]..offsets[k + 1]]`.
#[derive(Default)]
struct Record {
    contributions: Vec<Contribution>,
    offsets: Vec<usize>,
}

struct Composite {
    color: Vec<Vec3>,
    transmittance: Vec<f64>,
    /// Pixels whose transmittance fell below `MIN_TRANSMITTANCE`.
    done: Vec<bool>,
}

/// Front-to-back compositing. Splats are visited in depth order and each one
/// only touches the pixels inside its cutoff box, so every pixel sees the same
/// sequence of contributions as a per-pixel loop over the sorted list.
fn composite(sorted: &[&Splat2D], cam: &Camera, mut record: Option<&mut Record>) -> Composite {
    let (w, h) = (cam.width, cam.height);
    let mut color = vec![Vec3::zeros(); w * h];
    let mut transmittance = vec![1.0; w * h];
    let mut done = vec![false; w * h];
    if let Some(r) = record.as_deref_mut() {
        r.offsets.push(0);
    }
    for s in sorted {
        if let (Some((x0, x1)), Some((y0, y1))) = (pixel_span(s.mean[0], s.cov[0], w), pixel_span(s.mean[1], s.cov[2], h)) {
            for y in y0..=y1 {
                let dy = y as f64 + 0.5 - s.mean[1];
                for x in x0..=x1 {
                    let p = y * w + x;
                    if done[p] {
                        continue;
                    }
                    let dx = x as f64 + 0.5 - s.mean[0];
                    let power = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                    if power > MAHALANOBIS_CUTOFF {
                        continue;
                    }
                    let g = (-0.5 * power).exp();
                    let alpha = s.opacity * g;
                    let t = transmittance[p];
                    color[p] += s.color * (t * alpha);
                    if let Some(r) = record.as_deref_mut() {
                        r.contributions.push(Contribution { pixel: p as u32, g, alpha, transmittance: t });
                    }
                    transmittance[p] = t * (1.0 - alpha);
                    if transmittance[p] < MIN_TRANSMITTANCE {
                        done[p] = true;
                    }
                }
            }
        }
        if let Some(r) = record.as_deref_mut() {
            r.offsets.push(r.contributions.len());
        }
    }
    Composite { color, transmittance, done }
}

/// Composites projected splats into an image.
pub fn rasterize(splats: &[Splat2D], cam: &Camera, settings: &RenderSettings) -> ImageBuffer {
    let sorted = sort_splats(splats);
    let c = composite(&sorted, cam, None);
    let mut img = ImageBuffer::new(cam.width, cam.height);
    for p in 0..cam.width * cam.height {
        let bg = if c.done[p] { Vec3::zeros() } else { settings.background * c.transmittance[p] };
        img.set_pixel(p % cam.width, p / cam.width, c.color[p] + bg);
    }
    img
}

pub fn render(set: &GaussianSet, cam: &Camera, settings: &RenderSettings) -> (ImageBuffer, Vec<Splat2D>) {
    let splats = project(set, cam, settings);
    let img = rasterize(&splats, cam, settings);
    (img, splats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardOutput {
    /// Gradients for all Gaussians (zero for culled ones).
    pub grads: GaussianGrads,
    /// Norm of the loss gradient w.r.t. each projected mean in normalized
    /// device coordinates; zero for culled Gaussians.
    pub viewspace_grad_norms: Vec<f64>,
    pub visible: Vec<bool>,
}

#[derive(Debug, Clone, Copy, Default)]
struct SplatGrad {
    mean: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

/// Gradients of a scalar loss w.r.t. the Gaussian parameters, given the loss
/// gradient w.r.t. the rendered image (interleaved RGB, same layout as
/// `ImageBuffer::data`) and the splats returned by `render`.
pub fn backward(
    grad_image: &[f64],
    splats: &[Splat2D],
    set: &GaussianSet,
    cam: &Camera,
    settings: &RenderSettings,
) -> BackwardOutput {
    assert_eq!(grad_image.len(), cam.width * cam.height * 3, "gradient image size mismatch");
    let sorted = sort_splats(splats);
    let mut record = Record::default();
    let comp = composite(&sorted, cam, Some(&mut record));

    // Colour composited behind the current splat, normalized by its
    // transmittance; walking splats back to front updates it per pixel.
    let mut behind: Vec<Vec3> =
        comp.done.iter().map(|&d| if d { Vec3::zeros() } else { settings.background }).collect();
    let mut splat_grads = vec![SplatGrad::default(); sorted.len()];
    for k in (0..sorted.len()).rev() {
        let s = sorted[k];
        let gr = &mut splat_grads[k];
        let q = &s.conic;
        for c in &record.contributions[record.offsets[k]..record.offsets[k + 1]] {
            let p = c.pixel as usize;
            let dl_dc = Vec3::new(grad_image[3 * p], grad_image[3 * p + 1], grad_image[3 * p + 2]);
            let w = c.alpha * c.transmittance;
            for ch in 0..3 {
                gr.color[ch] += dl_dc[ch] * w;
            }
            let dl_dalpha = c.transmittance * dl_dc.dot(&(s.color - behind[p]));
            behind[p] = s.color * c.alpha + behind[p] * (1.0 - c.alpha);
            gr.opacity += dl_dalpha * c.g;
            let dl_dg = dl_dalpha * s.opacity * c.g;
            let dx = (p % cam.width) as f64 + 0.5 - s.mean[0];
            let dy = (p / cam.width) as f64 + 0.5 - s.mean[1];
            gr.mean[0] += dl_dg * (q[0] * dx + q[1] * dy);
            gr.mean[1] += dl_dg * (q[1] * dx + q[2] * dy);
            gr.conic[0] += -0.5 * dl_dg * dx * dx;
            gr.conic[1] += -dl_dg * dx * dy;
            gr.conic[2] += -0.5 * dl_dg * dy * dy;
        }
    }

    let n = set.len();
    let per_splat: Vec<(usize, Vec3, Vec3, crate::gaussians::Quat, f64, Vec3, f64)> = sorted
        .par_iter()
        .zip(splat_grads.par_iter())
        .map(|(s, sg)| {
            let i = s.id;
            let p = project_one(set, i, cam, settings).expect("visible splat must project");
            let q = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
            // The off-diagonal conic parameter appears twice in the quadratic form.
            let gq = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
            let g_cov2 = -(q * gq * q);
            let g_m = p.j.transpose() * g_cov2 * p.j;
            let g_j = 2.0 * g_cov2 * p.j * p.m;
            let w = cam.rotation;
            let g_cov3 = w.transpose() * g_m * w;
            let (d_log_scale, d_rot) = set.covariance_backward(i, &g_cov3);

            let (fx, fy) = (cam.fx, cam.fy);
            let t = p.t;
            let iz = 1.0 / t.z;
            let iz2 = iz * iz;
            let iz3 = iz2 * iz;
            let gm = Vector2::new(sg.mean[0], sg.mean[1]);
            let mut dt = Vec3::new(gm.x * fx * iz, gm.y * fy * iz, -gm.x * fx * t.x * iz2 - gm.y * fy * t.y * iz2);
            dt.x += g_j[(0, 2)] * (-fx * iz2);
            dt.y += g_j[(1, 2)] * (-fy * iz2);
            dt.z += g_j[(0, 0)] * (-fx * iz2)
                + g_j[(0, 2)] * (2.0 * fx * t.x * iz3)
                + g_j[(1, 1)] * (-fy * iz2)
                + g_j[(1, 2)] * (2.0 * fy * t.y * iz3);
            let d_mean = w.transpose() * dt;
            let d_logit = sg.opacity * s.opacity * (1.0 - s.opacity);
            let ndc = Vector2::new(gm.x * 0.5 * cam.width as f64, gm.y * 0.5 * cam.height as f64);
            let d_color = Vec3::new(sg.color[0], sg.color[1], sg.color[2]);
            (i, d_mean, d_log_scale, d_rot, d_logit, d_color, ndc.norm())
        })
        .collect();

    let mut grads = GaussianGrads::zeros(n);
    let mut viewspace_grad_norms = vec![0.0; n];
    let mut visible = vec![false; n];
    for (i, dm, ds, dr, dl, dc, vn) in per_splat {
        grads.means[i] += dm;
        grads.log_scales[i] += ds;
        grads.rotations[i] += dr;
        grads.opacity_logits[i] += dl;
        grads.colors[i] += dc;
        viewspace_grad_norms[i] = vn;
        visible[i] = true;
    }
    BackwardOutput { grads, viewspace_grad_norms, visible }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussians::{logit, Gaussian};

    fn front_camera(size: usize) -> Camera {
        Camera::look_at(Vec3::new(0.0, 0.0, -5.0), Vec3::zeros(), Vec3::y(), 100.0, size, size).unwrap()
    }

    #[test]
    fn projection_of_axis_gaussian() {
        let cam = front_camera(128);
        let set = GaussianSet::from_gaussians([Gaussian::isotropic(Vec3::zeros(), 0.1, 0.5, Vec3::x())]);
        let splats = project(&set, &cam, &RenderSettings::default());
        assert_eq!(splats.len(), 1);
        let s = &splats[0];
        assert!((s.mean[0] - 64.0).abs() < 1e-12 && (s.mean[1] - 64.0).abs() < 1e-12);
        // (f s / z)² = 4 plus the dilation.
        assert!((s.cov[0] - 4.3).abs() < 1e-9 && (s.cov[2] - 4.3).abs() < 1e-9 && s.cov[1].abs() < 1e-12);
        assert!((s.depth - 5.0).abs() < 1e-12);
    }

    #[test]
    fn culling() {
        let cam = front_camera(32);
        let set = GaussianSet::from_gaussians([
            Gaussian::isotropic(Vec3::new(0.0, 0.0, -6.0), 0.1, 0.5, Vec3::x()),
            Gaussian::isotropic(Vec3::new(0.0, 0.0, -5.0 + 0.001), 0.1, 0.5, Vec3::x()),
            Gaussian::isotropic(Vec3::new(50.0, 0.0, 0.0), 0.1, 0.5, Vec3::x()),
            Gaussian::isotropic(Vec3::zeros(), 0.1, 0.5, Vec3::x()),
        ]);
        let splats = project(&set, &cam, &RenderSettings::default());
        assert_eq!(splats.iter().map(|s| s.id).collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn empty_scene_is_background() {
        let cam = front_camera(20);
        let settings = RenderSettings { background: Vec3::new(0.2, 0.4, 0.6), ..Default::default() };
        let (img, _) = render(&GaussianSet::new(), &cam, &settings);
        assert_eq!(img, ImageBuffer::filled(20, 20, settings.background));
    }

    #[test]
    fn opaque_splat_shows_its_color() {
        let cam = front_camera(32);
        let mut g = Gaussian::isotropic(Vec3::zeros(), 1.0, 0.5, Vec3::new(0.9, 0.1, 0.3));
        g.opacity_logit = 40.0;
        let set = GaussianSet::from_gaussians([g]);
        let (img, _) = render(&set, &cam, &RenderSettings::default());
        assert!((img.pixel(16, 16) - Vec3::new(0.9, 0.1, 0.3)).norm() < 1e-3);
    }

    #[test]
    fn two_splat_compositing() {
        let cam = front_camera(16);
        let (a1, a2) = (0.6, 0.5);
        let (c1, c2) = (Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
        let bg = Vec3::new(0.0, 1.0, 0.0);
        // Pixel (8, 8) center sits half a pixel off the projected mean, so G is
        // evaluated there explicitly.
        let mut set = GaussianSet::from_gaussians([
            Gaussian::isotropic(Vec3::new(0.0, 0.0, 1.0), 0.5, a2, c2),
            Gaussian::isotropic(Vec3::zeros(), 0.5, a1, c1),
        ]);
        set.opacity_logits = vec![logit(a2), logit(a1)];
        let settings = RenderSettings { background: bg, ..Default::default() };
        let (img, splats) = render(&set, &cam, &settings);
        let g = |s: &Splat2D| {
            let (dx, dy) = (8.5 - s.mean[0], 8.5 - s.mean[1]);
            (-0.5 * (s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy)).exp()
        };
        let front = splats.iter().find(|s| s.id == 1).unwrap();
        let back = splats.iter().find(|s| s.id == 0).unwrap();
        let (b1, b2) = (a1 * g(front), a2 * g(back));
        let expected = c1 * b1 + c2 * (1.0 - b1) * b2 + bg * (1.0 - b1) * (1.0 - b2);
        assert!((img.pixel(8, 8) - expected).norm() < 1e-12);
    }

    #[test]
    fn render_is_permutation_invariant() {
        let cam = front_camera(40);
        let gs: Vec<Gaussian> = (0..12)
            .map(|k| {
                let f = k as f64;
                Gaussian::isotropic(
                    Vec3::new((f * 0.37).sin(), (f * 0.71).cos(), (f * 0.13).sin() * 0.5),
                    0.2 + 0.02 * f,
                    0.3 + 0.05 * f,
                    Vec3::new(f / 12.0, 1.0 - f / 12.0, 0.5),
                )
            })
            .collect();
        let a = render(&GaussianSet::from_gaussians(gs.clone()), &cam, &RenderSettings::default()).0;
        let mut rev = gs;
        rev.reverse();
        let b = render(&GaussianSet::from_gaussians(rev), &cam, &RenderSettings::default()).0;
        assert_eq!(a, b);
    }
}
