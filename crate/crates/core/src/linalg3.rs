//! Symmetric 3×3 eigen-analysis.
//!
//! Every shape feature in this crate is a function of the eigenvalues of a
//! 3×3 covariance, either the covariance of one Gaussian or the scatter
//! matrix of a point neighborhood. This module provides the closed-form
//! eigensolver, the sum normalization of the spectrum and the first-order
//! eigenvalue derivative `∂λᵢ/∂C = εᵢεᵢᵀ` used to backpropagate the losses.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Eigenvalues in `[-NEGATIVE_SLACK, 0)` are treated as round-off and clamped to zero.
pub const NEGATIVE_SLACK: f64 = 1e-9;

/// Spectra whose sum falls below this are treated as degenerate.
pub const SUM_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("covariance has negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),
}

/// Symmetric 3×3 matrix stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMat3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl SymMat3 {
    pub const ZERO: SymMat3 = SymMat3 { xx: 0.0, xy: 0.0, xz: 0.0, yy: 0.0, yz: 0.0, zz: 0.0 };

    pub const fn new(xx: f64, xy: f64, xz: f64, yy: f64, yz: f64, zz: f64) -> Self {
        Self { xx, xy, xz, yy, yz, zz }
    }

    pub const fn identity() -> Self {
        Self::diagonal(1.0, 1.0, 1.0)
    }

    pub const fn diagonal(a: f64, b: f64, c: f64) -> Self {
        Self::new(a, 0.0, 0.0, b, 0.0, c)
    }

    /// Outer product `v vᵀ`.
    pub fn outer(v: &Vec3) -> Self {
        Self::new(v.x * v.x, v.x * v.y, v.x * v.z, v.y * v.y, v.y * v.z, v.z * v.z)
    }

    /// Takes the upper triangle of `m`; the lower triangle is ignored.
    pub fn from_upper(m: &Matrix3<f64>) -> Self {
        Self::new(m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)])
    }

    /// Symmetric part `(m + mᵀ)/2`.
    pub fn symmetrize(m: &Matrix3<f64>) -> Self {
        Self::new(
            m[(0, 0)],
            0.5 * (m[(0, 1)] + m[(1, 0)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
            m[(1, 1)],
            0.5 * (m[(1, 2)] + m[(2, 1)]),
            m[(2, 2)],
        )
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.xx, self.xy, self.xz, //
            self.xy, self.yy, self.yz, //
            self.xz, self.yz, self.zz,
        )
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        match (row.min(col), row.max(col)) {
            (0, 0) => self.xx,
            (0, 1) => self.xy,
            (0, 2) => self.xz,
            (1, 1) => self.yy,
            (1, 2) => self.yz,
            (2, 2) => self.zz,
            _ => panic!("index ({row}, {col}) out of range for a 3x3 matrix"),
        }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.xx * s, self.xy * s, self.xz * s, self.yy * s, self.yz * s, self.zz * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(
            self.xx + o.xx,
            self.xy + o.xy,
            self.xz + o.xz,
            self.yy + o.yy,
            self.yz + o.yz,
            self.zz + o.zz,
        )
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        Vec3::new(
            self.xx * v.x + self.xy * v.y + self.xz * v.z,
            self.xy * v.x + self.yy * v.y + self.yz * v.z,
            self.xz * v.x + self.yz * v.y + self.zz * v.z,
        )
    }

    /// Frobenius inner product `Σᵢⱼ AᵢⱼBᵢⱼ` over the full matrices.
    pub fn frobenius_dot(&self, o: &Self) -> f64 {
        self.xx * o.xx
            + self.yy * o.yy
            + self.zz * o.zz
            + 2.0 * (self.xy * o.xy + self.xz * o.xz + self.yz * o.yz)
    }

    pub fn max_abs(&self) -> f64 {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz].iter().all(|v| v.is_finite())
    }
}

/// Eigen-system of a symmetric 3×3 matrix, eigenvalues in descending order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenTriple {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

impl EigenTriple {
    /// `Σᵢ λᵢ εᵢεᵢᵀ`.
    pub fn reconstruct(&self) -> SymMat3 {
        (0..3).fold(SymMat3::ZERO, |acc, i| {
            acc.add(&SymMat3::outer(&self.vectors[i]).scale(self.values[i]))
        })
    }
}

/// Closed-form eigendecomposition of a symmetric 3×3 matrix.
///
/// The trigonometric solution of the characteristic cubic identifies the
/// best separated eigenvalue; its eigenvector is the largest cross product
/// of the rows of `A − λI` and its eigenvalue the Rayleigh quotient. The
/// remaining pair is the exact 2×2 eigenproblem of `A` restricted to the
/// orthogonal complement, which keeps (near-)repeated eigenvalues accurate.
pub fn eig_sym3(m: &SymMat3) -> Result<EigenTriple, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let max_abs = m.max_abs();
    if max_abs == 0.0 {
        return Ok(EigenTriple { values: [0.0; 3], vectors: [Vec3::x(), Vec3::y(), Vec3::z()] });
    }
    let a = m.scale(1.0 / max_abs);
    let off = a.xy * a.xy + a.xz * a.xz + a.yz * a.yz;

    let (values, vectors) = if off > 0.0 {
        let q = a.trace() / 3.0;
        let b00 = a.xx - q;
        let b11 = a.yy - q;
        let b22 = a.zz - q;
        let p = ((b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * off) / 6.0).sqrt();
        let c00 = b11 * b22 - a.yz * a.yz;
        let c01 = a.xy * b22 - a.yz * a.xz;
        let c02 = a.xy * a.yz - b11 * a.xz;
        let det = (b00 * c00 - a.xy * c01 + a.xz * c02) / (p * p * p);
        let half_det = (0.5 * det).clamp(-1.0, 1.0);
        let angle = half_det.acos() / 3.0;
        // For half_det ≥ 0 the largest root is the isolated one, else the smallest.
        let separated = if half_det >= 0.0 {
            q + p * 2.0 * angle.cos()
        } else {
            q + p * 2.0 * (angle + 2.0 * PI / 3.0).cos()
        };
        let w = eigenvector_from_rows(&a, separated);
        let (u, v) = orthogonal_complement(&w);
        let au = a.mul_vec(&u);
        let av = a.mul_vec(&v);
        let ([l0, l1], [e0, e1]) = eig_sym2(u.dot(&au), u.dot(&av), v.dot(&av));
        let x0 = u * e0[0] + v * e0[1];
        let x1 = u * e1[0] + v * e1[1];
        ([w.dot(&a.mul_vec(&w)), l0, l1], [w, x0, x1])
    } else {
        ([a.xx, a.yy, a.zz], [Vec3::x(), Vec3::y(), Vec3::z()])
    };

    // Stable descending sort: equal eigenvalues keep their slot order.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    Ok(EigenTriple {
        values: order.map(|i| values[i] * max_abs),
        vectors: order.map(|i| vectors[i]),
    })
}

/// Jacobi rotation diagonalizing `[[a, b], [b, c]]`.
fn eig_sym2(a: f64, b: f64, c: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    if b == 0.0 {
        return ([a, c], [[1.0, 0.0], [0.0, 1.0]]);
    }
    let theta = (c - a) / (2.0 * b);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let cs = 1.0 / (t * t + 1.0).sqrt();
    let sn = t * cs;
    ([a - t * b, c + t * b], [[cs, -sn], [sn, cs]])
}

fn eigenvector_from_rows(a: &SymMat3, eval: f64) -> Vec3 {
    let r0 = Vec3::new(a.xx - eval, a.xy, a.xz);
    let r1 = Vec3::new(a.xy, a.yy - eval, a.yz);
    let r2 = Vec3::new(a.xz, a.yz, a.zz - eval);
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|u, v| u.norm_squared().total_cmp(&v.norm_squared()))
        .copied()
        .unwrap_or_else(Vec3::zeros);
    let n = best.norm();
    if n > 0.0 {
        best / n
    } else {
        Vec3::x()
    }
}

fn orthogonal_complement(w: &Vec3) -> (Vec3, Vec3) {
    let u = if w.x.abs() > w.y.abs() {
        let inv = 1.0 / (w.x * w.x + w.z * w.z).sqrt();
        Vec3::new(-w.z * inv, 0.0, w.x * inv)
    } else {
        let inv = 1.0 / (w.y * w.y + w.z * w.z).sqrt();
        Vec3::new(0.0, w.z * inv, -w.y * inv)
    };
    (u, w.cross(&u))
}

/// Eigenvalues divided by their sum, descending, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedEigenvalues {
    values: [f64; 3],
    raw: [f64; 3],
    sum: f64,
    degenerate: bool,
}

impl NormalizedEigenvalues {
    /// Normalizes a descending, non-negative spectrum.
    ///
    /// Values in `[-NEGATIVE_SLACK, 0)` are clamped to zero; anything more
    /// negative is rejected. A spectrum summing to less than [`SUM_EPSILON`]
    /// maps to `(1/3, 1/3, 1/3)` with the degenerate flag set.
    pub fn from_values(values: [f64; 3]) -> Result<Self, LinalgError> {
        let mut raw = [0.0; 3];
        for (r, &v) in raw.iter_mut().zip(values.iter()) {
            if !v.is_finite() {
                return Err(LinalgError::NonFinite);
            }
            if v < -NEGATIVE_SLACK {
                return Err(LinalgError::NegativeEigenvalue(v));
            }
            *r = v.max(0.0);
        }
        let sum = raw[0] + raw[1] + raw[2];
        if sum < SUM_EPSILON {
            return Ok(Self { values: [1.0 / 3.0; 3], raw, sum, degenerate: true });
        }
        Ok(Self { values: raw.map(|v| v / sum), raw, sum, degenerate: false })
    }

    /// Builds directly from values already on the simplex.
    pub fn from_normalized(values: [f64; 3]) -> Self {
        Self { values, raw: values, sum: values.iter().sum(), degenerate: false }
    }

    pub fn values(&self) -> [f64; 3] {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Pulls a gradient with respect to the normalized values back to the
    /// raw eigenvalues: `∂λ′ᵢ/∂λₘ = (δᵢₘ·S − λᵢ)/S²`. Degenerate spectra
    /// have zero gradient.
    pub fn backprop(&self, grad_normalized: [f64; 3]) -> [f64; 3] {
        if self.degenerate {
            return [0.0; 3];
        }
        let s = self.sum;
        let weighted: f64 = (0..3).map(|i| grad_normalized[i] * self.raw[i]).sum();
        [0, 1, 2].map(|m| (grad_normalized[m] * s - weighted) / (s * s))
    }
}

pub fn normalize_eigenvalues(e: &EigenTriple) -> Result<NormalizedEigenvalues, LinalgError> {
    NormalizedEigenvalues::from_values(e.values)
}

/// `∂λᵢ/∂C = εᵢεᵢᵀ` for each eigenpair. At repeated eigenvalues this is a
/// subgradient.
pub fn eigenvalue_jacobian(e: &EigenTriple) -> [SymMat3; 3] {
    e.vectors.map(|v| SymMat3::outer(&v))
}
