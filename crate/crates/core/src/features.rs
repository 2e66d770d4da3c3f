//! Eigenvalue shape features and their loss forms.
//!
//! All functions take a sum-normalized spectrum `λ′₁ ≥ λ′₂ ≥ λ′₃` and return
//! the value together with its gradient, treating the three normalized
//! eigenvalues as independent variables. Chaining through the normalization
//! is the caller's job (see [`NormalizedEigenvalues::backprop`]).
//!
//! [`NormalizedEigenvalues::backprop`]: crate::linalg3::NormalizedEigenvalues::backprop

use crate::linalg3::NormalizedEigenvalues;
use std::fmt;
use std::str::FromStr;

/// Clamp for divisions by a normalized eigenvalue.
pub const EPS_DIV: f64 = 1e-12;
/// Clamp for logarithms of a normalized eigenvalue.
pub const EPS_LOG: f64 = 1e-12;

/// Which geometric loss regularizes a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    /// Planarity of each Gaussian's own scales.
    PlanarityGaussian,
    /// Planarity of the k-nearest-neighbor scatter of the Gaussian centers.
    PlanarityKnn,
    /// Omnivariance of the neighbor scatter.
    OmnivarianceKnn,
    /// Eigenentropy of the neighbor scatter.
    EigenentropyKnn,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::PlanarityGaussian,
        FeatureKind::PlanarityKnn,
        FeatureKind::OmnivarianceKnn,
        FeatureKind::EigenentropyKnn,
    ];

    pub fn is_knn(self) -> bool {
        !matches!(self, FeatureKind::PlanarityGaussian)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::PlanarityGaussian => "planarity-gaussian",
            FeatureKind::PlanarityKnn => "planarity-knn",
            FeatureKind::OmnivarianceKnn => "omnivariance-knn",
            FeatureKind::EigenentropyKnn => "eigenentropy-knn",
        }
    }

    /// The per-spectrum loss this kind minimizes.
    pub fn loss(self, n: &NormalizedEigenvalues) -> FeatureValue {
        match self {
            FeatureKind::PlanarityGaussian | FeatureKind::PlanarityKnn => planarity_loss(n),
            FeatureKind::OmnivarianceKnn => omnivariance_loss(n),
            FeatureKind::EigenentropyKnn => eigenentropy_loss(n),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownFeature(pub String);

impl fmt::Display for UnknownFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown feature `{}` (expected none, planarity-gaussian, planarity-knn, omnivariance-knn or eigenentropy-knn)",
            self.0
        )
    }
}

impl std::error::Error for UnknownFeature {}

impl FromStr for FeatureKind {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownFeature(s.to_string()))
    }
}

/// Parses `none` as `None`, anything else as a [`FeatureKind`].
pub fn parse_optional_feature(s: &str) -> Result<Option<FeatureKind>, UnknownFeature> {
    if s == "none" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// A feature value and its gradient with respect to `(λ′₁, λ′₂, λ′₃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureValue {
    pub value: f64,
    pub grad: [f64; 3],
}

/// `(λ′₂ − λ′₃)/λ′₁`.
pub fn planarity(n: &NormalizedEigenvalues) -> FeatureValue {
    let [l1, l2, l3] = n.values();
    let l1 = l1.max(EPS_DIV);
    let value = (l2 - l3) / l1;
    FeatureValue { value, grad: [-(l2 - l3) / (l1 * l1), 1.0 / l1, -1.0 / l1] }
}

/// `1 − planarity`.
pub fn planarity_loss(n: &NormalizedEigenvalues) -> FeatureValue {
    let p = planarity(n);
    FeatureValue { value: 1.0 - p.value, grad: p.grad.map(|g| -g) }
}

/// `(λ′₁λ′₂λ′₃)^{1/3}`.
pub fn omnivariance_loss(n: &NormalizedEigenvalues) -> FeatureValue {
    let l = n.values();
    let value = (l[0] * l[1] * l[2]).max(0.0).cbrt();
    FeatureValue { value, grad: l.map(|li| value / (3.0 * li.max(EPS_DIV))) }
}

/// `−Σ λ′ᵢ ln λ′ᵢ` with `0·ln 0 = 0`.
pub fn eigenentropy_loss(n: &NormalizedEigenvalues) -> FeatureValue {
    let l = n.values();
    let value = -l.iter().map(|&li| li * li.max(EPS_LOG).ln()).sum::<f64>();
    FeatureValue { value, grad: l.map(|li| -(li.max(EPS_LOG).ln() + 1.0)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(v: [f64; 3]) -> NormalizedEigenvalues {
        NormalizedEigenvalues::from_normalized(v)
    }

    const THIRD: [f64; 3] = [1.0 / 3.0; 3];

    #[test]
    fn planarity_anchors() {
        assert_eq!(planarity(&n([0.5, 0.5, 0.0])).value, 1.0);
        assert_eq!(planarity(&n(THIRD)).value, 0.0);
        assert_eq!(planarity(&n([1.0, 0.0, 0.0])).value, 0.0);
        assert_eq!(planarity_loss(&n([0.5, 0.5, 0.0])).value, 0.0);
        assert_eq!(planarity_loss(&n(THIRD)).value, 1.0);
        let v = planarity_loss(&n([0.6, 0.3, 0.1])).value;
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn omnivariance_anchors() {
        assert!((omnivariance_loss(&n(THIRD)).value - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(omnivariance_loss(&n([0.5, 0.5, 0.0])).value, 0.0);
        let v = omnivariance_loss(&n([0.6, 0.3, 0.1])).value;
        assert!((v - 0.262_074_139_420_889_7).abs() < 1e-10, "{v}");
    }

    #[test]
    fn eigenentropy_anchors() {
        assert!((eigenentropy_loss(&n(THIRD)).value - 3f64.ln()).abs() < 1e-12);
        assert_eq!(eigenentropy_loss(&n([1.0, 0.0, 0.0])).value, 0.0);
        assert!((eigenentropy_loss(&n([0.5, 0.5, 0.0])).value - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_spectrum_saturates() {
        let d = NormalizedEigenvalues::from_values([0.0; 3]).unwrap();
        assert!((eigenentropy_loss(&d).value - 3f64.ln()).abs() < 1e-12);
        assert_eq!(planarity_loss(&d).value, 1.0);
    }

    #[test]
    fn feature_names_round_trip() {
        for k in FeatureKind::ALL {
            assert_eq!(k.as_str().parse::<FeatureKind>().unwrap(), k);
        }
        assert_eq!(parse_optional_feature("none").unwrap(), None);
        assert!("linearity".parse::<FeatureKind>().is_err());
    }

    fn ordered_simplex() -> impl Strategy<Value = [f64; 3]> {
        (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_filter_map("non-zero", |(a, b, c)| {
            let s = a + b + c;
            (s > 1e-9).then(|| {
                let mut v = [a / s, b / s, c / s];
                v.sort_by(|x, y| y.total_cmp(x));
                v
            })
        })
    }

    proptest! {
        #[test]
        fn ranges_hold(v in ordered_simplex()) {
            let nv = n(v);
            let p = planarity(&nv).value;
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
            let o = omnivariance_loss(&nv).value;
            prop_assert!((0.0..=1.0 / 3.0 + 1e-12).contains(&o));
            let e = eigenentropy_loss(&nv).value;
            prop_assert!((-1e-12..=3f64.ln() + 1e-12).contains(&e));
        }

        #[test]
        fn gradients_match_central_differences(v in ordered_simplex()) {
            prop_assume!(v.iter().all(|&x| x > 1e-3));
            for f in [planarity_loss, omnivariance_loss, eigenentropy_loss] {
                let analytic = f(&n(v)).grad;
                for i in 0..3 {
                    let h = 1e-7;
                    let mut p = v;
                    let mut q = v;
                    p[i] += h;
                    q[i] -= h;
                    let fd = (f(&n(p)).value - f(&n(q)).value) / (2.0 * h);
                    let scale = analytic[i].abs().max(1.0);
                    prop_assert!((fd - analytic[i]).abs() / scale < 1e-5, "{} vs {}", fd, analytic[i]);
                }
            }
        }

        #[test]
        fn features_are_scale_invariant(raw in (0.01f64..10.0, 0.01f64..10.0, 0.01f64..10.0), c in 0.001f64..1000.0) {
            let mut r = [raw.0, raw.1, raw.2];
            r.sort_by(|x, y| y.total_cmp(x));
            let a = NormalizedEigenvalues::from_values(r).unwrap();
            let b = NormalizedEigenvalues::from_values(r.map(|x| x * c)).unwrap();
            for f in [planarity_loss, omnivariance_loss, eigenentropy_loss] {
                prop_assert!((f(&a).value - f(&b).value).abs() < 1e-12);
            }
        }
    }
}
