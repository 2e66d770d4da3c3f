//! Gaussian primitives stored as a structure of arrays.
//!
//! Parameters are kept in their unconstrained form: log-scales, a raw
//! quaternion `(w, x, y, z)`, an opacity logit and a plain RGB color. The
//! activations (`exp`, normalization, sigmoid) are applied on read.

use crate::features::planarity_loss;
use crate::linalg3::{NormalizedEigenvalues, SymMat3, Vec3};
use nalgebra::{Matrix3, Vector4};

pub type Quat = Vector4<f64>;

pub const IDENTITY_QUAT: Quat = Vector4::new(1.0, 0.0, 0.0, 0.0);

/// Activated opacity bounds enforced by [`clamp_parameters`].
pub const MIN_OPACITY: f64 = 1e-4;
pub const MAX_OPACITY: f64 = 1.0 - 1e-4;

/// Smallest scale relative to the scene extent.
pub const MIN_SCALE_FRACTION: f64 = 1e-6;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One Gaussian's raw parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: Vec3,
    pub log_scale: Vec3,
    pub rotation: Quat,
    pub opacity_logit: f64,
    pub color: Vec3,
}

impl Gaussian {
    pub fn isotropic(mean: Vec3, scale: f64, opacity: f64, color: Vec3) -> Self {
        Self {
            mean,
            log_scale: Vec3::repeat(scale.ln()),
            rotation: IDENTITY_QUAT,
            opacity_logit: logit(opacity),
            color,
        }
    }
}

/// Gradient buffers, one entry per Gaussian and field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianGrads {
    pub means: Vec<Vec3>,
    pub log_scales: Vec<Vec3>,
    pub rotations: Vec<Quat>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<Vec3>,
}

impl GaussianGrads {
    pub fn zeros(n: usize) -> Self {
        Self {
            means: vec![Vec3::zeros(); n],
            log_scales: vec![Vec3::zeros(); n],
            rotations: vec![Quat::zeros(); n],
            opacity_logits: vec![0.0; n],
            colors: vec![Vec3::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// `self += other · w`.
    pub fn add_scaled(&mut self, other: &GaussianGrads, w: f64) {
        assert_eq!(self.len(), other.len());
        for i in 0..self.len() {
            self.means[i] += other.means[i] * w;
            self.log_scales[i] += other.log_scales[i] * w;
            self.rotations[i] += other.rotations[i] * w;
            self.opacity_logits[i] += other.opacity_logits[i] * w;
            self.colors[i] += other.colors[i] * w;
        }
    }

    pub fn is_finite(&self) -> bool {
        let v = |x: &Vec3| x.iter().all(|c| c.is_finite());
        self.means.iter().all(v)
            && self.log_scales.iter().all(v)
            && self.colors.iter().all(v)
            && self.rotations.iter().all(|q| q.iter().all(|c| c.is_finite()))
            && self.opacity_logits.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianSet {
    pub means: Vec<Vec3>,
    pub log_scales: Vec<Vec3>,
    pub rotations: Vec<Quat>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<Vec3>,
    pub grads: GaussianGrads,
}

impl GaussianSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_gaussians(gs: impl IntoIterator<Item = Gaussian>) -> Self {
        let mut set = Self::new();
        for g in gs {
            set.push(g);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn push(&mut self, g: Gaussian) {
        self.means.push(g.mean);
        self.log_scales.push(g.log_scale);
        self.rotations.push(g.rotation);
        self.opacity_logits.push(g.opacity_logit);
        self.colors.push(g.color);
        self.grads.means.push(Vec3::zeros());
        self.grads.log_scales.push(Vec3::zeros());
        self.grads.rotations.push(Quat::zeros());
        self.grads.opacity_logits.push(0.0);
        self.grads.colors.push(Vec3::zeros());
    }

    pub fn get(&self, i: usize) -> Gaussian {
        Gaussian {
            mean: self.means[i],
            log_scale: self.log_scales[i],
            rotation: self.rotations[i],
            opacity_logit: self.opacity_logits[i],
            color: self.colors[i],
        }
    }

    /// Keeps the Gaussians for which `keep[i]` is true, gradients included.
    pub fn retain_mask(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        fn filter<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        }
        filter(&mut self.means, keep);
        filter(&mut self.log_scales, keep);
        filter(&mut self.rotations, keep);
        filter(&mut self.opacity_logits, keep);
        filter(&mut self.colors, keep);
        filter(&mut self.grads.means, keep);
        filter(&mut self.grads.log_scales, keep);
        filter(&mut self.grads.rotations, keep);
        filter(&mut self.grads.opacity_logits, keep);
        filter(&mut self.grads.colors, keep);
    }

    pub fn zero_grads(&mut self) {
        self.grads = GaussianGrads::zeros(self.len());
    }

    pub fn scales(&self, i: usize) -> Vec3 {
        self.log_scales[i].map(f64::exp)
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn rotation_matrix(&self, i: usize) -> Matrix3<f64> {
        quat_to_matrix(&normalized_quat(&self.rotations[i]))
    }

    /// `R·diag(s²)·Rᵀ`.
    pub fn world_covariance(&self, i: usize) -> SymMat3 {
        let r = self.rotation_matrix(i);
        let s2 = self.scales(i).map(|s| s * s);
        SymMat3::symmetrize(&(r * Matrix3::from_diagonal(&s2) * r.transpose()))
    }

    /// Pulls `∂L/∂Σ` (a full symmetric matrix) back to the log-scales and the
    /// raw quaternion of Gaussian `i`.
    pub fn covariance_backward(&self, i: usize, grad_cov: &Matrix3<f64>) -> (Vec3, Quat) {
        let q = self.rotations[i];
        let qn = normalized_quat(&q);
        let r = quat_to_matrix(&qn);
        let s2 = self.scales(i).map(|s| s * s);
        let g = 0.5 * (grad_cov + grad_cov.transpose());
        let rgr = r.transpose() * g * r;
        let grad_log_scale = Vec3::new(2.0 * s2.x * rgr[(0, 0)], 2.0 * s2.y * rgr[(1, 1)], 2.0 * s2.z * rgr[(2, 2)]);
        let grad_r = 2.0 * g * r * Matrix3::from_diagonal(&s2);
        let grad_qn = quat_matrix_backward(&qn, &grad_r);
        (grad_log_scale, normalize_backward(&q, &grad_qn))
    }

    pub fn is_finite(&self) -> bool {
        let v = |x: &Vec3| x.iter().all(|c| c.is_finite());
        self.means.iter().all(v)
            && self.log_scales.iter().all(v)
            && self.colors.iter().all(v)
            && self.rotations.iter().all(|q| q.iter().all(|c| c.is_finite()))
            && self.opacity_logits.iter().all(|c| c.is_finite())
    }
}

pub fn normalized_quat(q: &Quat) -> Quat {
    let n = q.norm();
    if n > 0.0 {
        q / n
    } else {
        IDENTITY_QUAT
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: &Quat) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// `∂L/∂q` of a unit quaternion given `∂L/∂R`.
fn quat_matrix_backward(q: &Quat, g: &Matrix3<f64>) -> Quat {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let g = |r: usize, c: usize| g[(r, c)];
    Quat::new(
        2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1)),
        2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2)),
        2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2)),
        2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1)),
    )
}

/// Gradient through `q ↦ q/|q|`.
fn normalize_backward(q: &Quat, grad_unit: &Quat) -> Quat {
    let n = q.norm();
    if n == 0.0 {
        return Quat::zeros();
    }
    let u = q / n;
    (grad_unit - u * u.dot(grad_unit)) / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleLoss {
    /// Mean per-Gaussian loss.
    pub loss: f64,
    /// Gradient of `loss` with respect to each log-scale.
    pub grads: Vec<Vec3>,
}

/// Mean of `1 − (s′₂ − s′₃)/s′₁` over all Gaussians, where `s′` are the
/// descending, sum-normalized activated scales (or their squares).
/// Equal scales keep their axis order.
pub fn gaussian_planarity_loss(set: &GaussianSet, on_squared_scales: bool) -> ScaleLoss {
    let n = set.len();
    if n == 0 {
        return ScaleLoss { loss: 0.0, grads: Vec::new() };
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(n);
    for i in 0..n {
        let values = if on_squared_scales {
            set.log_scales[i].map(|l| (2.0 * l).exp())
        } else {
            set.scales(i)
        };
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let sorted = order.map(|a| values[a]);
        let normalized = NormalizedEigenvalues::from_values(sorted)
            .expect("activated scales are positive and finite");
        let f = planarity_loss(&normalized);
        loss += f.value;
        let g_sorted = normalized.backprop(f.grad);
        let exponent = if on_squared_scales { 2.0 } else { 1.0 };
        let mut g = Vec3::zeros();
        for (slot, &axis) in order.iter().enumerate() {
            g[axis] = g_sorted[slot] * exponent * values[axis] * inv_n;
        }
        grads.push(g);
    }
    ScaleLoss { loss: loss * inv_n, grads }
}

/// Renormalizes quaternions and clamps scales, opacities and colors into
/// their valid ranges. `extent` is the scene size used for the scale bounds.
pub fn clamp_parameters(set: &mut GaussianSet, extent: f64) {
    let min_log = (MIN_SCALE_FRACTION * extent).ln();
    let max_log = extent.ln();
    let min_logit = logit(MIN_OPACITY);
    let max_logit = logit(MAX_OPACITY);
    for i in 0..set.len() {
        set.rotations[i] = normalized_quat(&set.rotations[i]);
        set.log_scales[i] = set.log_scales[i].map(|l| l.clamp(min_log, max_log));
        set.opacity_logits[i] = set.opacity_logits[i].clamp(min_logit, max_logit);
        set.colors[i] = set.colors[i].map(|c| c.clamp(0.0, 1.0));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg3::eig_sym3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn with_scales(s: [f64; 3], q: Quat) -> GaussianSet {
        GaussianSet::from_gaussians([Gaussian {
            mean: Vec3::new(0.3, -0.2, 1.0),
            log_scale: Vec3::new(s[0].ln(), s[1].ln(), s[2].ln()),
            rotation: q,
            opacity_logit: 0.0,
            color: Vec3::repeat(0.5),
        }])
    }

    #[test]
    fn axis_aligned_covariance() {
        let set = with_scales([2.0, 1.0, 0.5], IDENTITY_QUAT);
        let c = set.world_covariance(0);
        assert!((c.xx - 4.0).abs() < 1e-12 && (c.yy - 1.0).abs() < 1e-12 && (c.zz - 0.25).abs() < 1e-12);
        assert!(c.xy.abs() < 1e-15 && c.xz.abs() < 1e-15 && c.yz.abs() < 1e-15);
    }

    #[test]
    fn quarter_turn_about_z_swaps_axes() {
        let h = std::f64::consts::FRAC_PI_4;
        let set = with_scales([2.0, 1.0, 1.0], Quat::new(h.cos(), 0.0, 0.0, h.sin()));
        let c = set.world_covariance(0);
        assert!((c.xx - 1.0).abs() < 1e-12 && (c.yy - 4.0).abs() < 1e-12 && (c.zz - 1.0).abs() < 1e-12);
        assert!(c.xy.abs() < 1e-12);
    }

    #[test]
    fn covariance_spectrum_is_squared_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let s = [rng.random_range(0.1..3.0), rng.random_range(0.1..3.0), rng.random_range(0.1..3.0)];
            let q = Quat::new(rng.random(), rng.random(), rng.random(), rng.random()) - Quat::repeat(0.5);
            let set = with_scales(s, q);
            let mut expected = s.map(|v| v * v);
            expected.sort_by(|a, b| b.total_cmp(a));
            let e = eig_sym3(&set.world_covariance(0)).unwrap();
            for k in 0..3 {
                assert!((e.values[k] - expected[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn covariance_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = Quat::new(0.8, -0.3, 0.4, 0.2);
        let set = with_scales([1.3, 0.6, 0.2], q);
        let weights = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let weights = weights + weights.transpose();
        let f = |s: &GaussianSet| s.world_covariance(0).to_matrix().component_mul(&weights).sum();
        let (gl, gq) = set.covariance_backward(0, &weights);
        let h = 1e-6;
        for a in 0..3 {
            let mut p = set.clone();
            let mut m = set.clone();
            p.log_scales[0][a] += h;
            m.log_scales[0][a] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - gl[a]).abs() < 1e-6 * fd.abs().max(1.0), "scale {a}: {fd} vs {}", gl[a]);
        }
        for a in 0..4 {
            let mut p = set.clone();
            let mut m = set.clone();
            p.rotations[0][a] += h;
            m.rotations[0][a] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - gq[a]).abs() < 1e-6 * fd.abs().max(1.0), "quat {a}: {fd} vs {}", gq[a]);
        }
    }

    #[test]
    fn planarity_loss_anchor_values() {
        let flat = with_scales([1.0, 1.0, 1e-6], IDENTITY_QUAT);
        assert!(gaussian_planarity_loss(&flat, false).loss < 1e-5);
        let ball = with_scales([1.0, 1.0, 1.0], IDENTITY_QUAT);
        assert!((gaussian_planarity_loss(&ball, false).loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planarity_loss_ignores_rotation_mean_and_uniform_scale() {
        let a = with_scales([0.9, 0.4, 0.1], IDENTITY_QUAT);
        let mut b = with_scales([0.9, 0.4, 0.1], Quat::new(0.1, 0.7, -0.2, 0.3));
        b.means[0] = Vec3::new(10.0, -4.0, 2.0);
        let la = gaussian_planarity_loss(&a, false).loss;
        assert_eq!(la, gaussian_planarity_loss(&b, false).loss);
        let c = with_scales([9.0, 4.0, 1.0], IDENTITY_QUAT);
        assert!((la - gaussian_planarity_loss(&c, false).loss).abs() < 1e-14);
    }

    #[test]
    fn planarity_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut set = GaussianSet::new();
        for _ in 0..20 {
            set.push(Gaussian {
                mean: Vec3::zeros(),
                log_scale: Vec3::new(rng.random_range(-3.0..1.0), rng.random_range(-3.0..1.0), rng.random_range(-3.0..1.0)),
                rotation: IDENTITY_QUAT,
                opacity_logit: 0.0,
                color: Vec3::zeros(),
            });
        }
        for squared in [false, true] {
            let out = gaussian_planarity_loss(&set, squared);
            let h = 1e-6;
            for i in 0..set.len() {
                for a in 0..3 {
                    let mut p = set.clone();
                    let mut m = set.clone();
                    p.log_scales[i][a] += h;
                    m.log_scales[i][a] -= h;
                    let fd = (gaussian_planarity_loss(&p, squared).loss - gaussian_planarity_loss(&m, squared).loss)
                        / (2.0 * h);
                    let g = out.grads[i][a];
                    assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3), "{fd} vs {g}");
                }
            }
        }
    }

    #[test]
    fn clamping() {
        let mut set = with_scales([1.0, 1e-12, 1.0], Quat::new(2.0, 0.0, 0.0, 0.0));
        set.opacity_logits[0] = 40.0;
        set.colors[0] = Vec3::new(-0.5, 0.5, 1.5);
        clamp_parameters(&mut set, 1.0);
        assert_eq!(set.rotations[0], IDENTITY_QUAT);
        assert!((set.opacity(0) - MAX_OPACITY).abs() < 1e-12);
        assert_eq!(set.log_scales[0][1], (1e-6f64).ln());
        assert_eq!(set.colors[0], Vec3::new(0.0, 0.5, 1.0));
    }

    #[test]
    fn retain_drops_rows_everywhere() {
        let mut set = GaussianSet::from_gaussians((0..4).map(|i| {
            Gaussian::isotropic(Vec3::repeat(i as f64), 1.0, 0.5, Vec3::zeros())
        }));
        set.grads.opacity_logits[2] = 7.0;
        set.retain_mask(&[true, false, true, true]);
        assert_eq!(set.len(), 3);
        assert_eq!(set.grads.len(), 3);
        assert_eq!(set.means[1], Vec3::repeat(2.0));
        assert_eq!(set.grads.opacity_logits[1], 7.0);
    }
}
