use super::config::DensifyConfig;
use crate::gaussians::{Gaussian, GaussianSet};
use crate::linalg3::Vec3;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Scale divisor applied to both children of a split.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;

/// Running view-space gradient statistics per Gaussian.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensifyStats {
    pub accum: Vec<f64>,
    pub count: Vec<u32>,
}

impl DensifyStats {
    pub fn zeros(n: usize) -> Self {
        DensifyStats { accum: vec![0.0; n], count: vec![0; n] }
    }

    pub fn record(&mut self, norms: &[f64], visible: &[bool]) {
        for i in 0..self.accum.len() {
            if visible[i] {
                self.accum[i] += norms[i];
                self.count[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.accum[i] / self.count[i] as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensifyOutcome {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    /// For each Gaussian of the new set, the index it came from when it is an
    /// unchanged survivor; `None` for clones and split children.
    pub source: Vec<Option<usize>>,
}

fn sample_offset(set: &GaussianSet, i: usize, scale: &Vec3, rng: &mut ChaCha8Rng) -> Vec3 {
    let z = Vec3::from_fn(|_, _| StandardNormal.sample(rng));
    set.rotation_matrix(i) * scale.component_mul(&z)
}

/// Clones small and splits large Gaussians whose mean view-space gradient
/// exceeds the threshold, then prunes nearly transparent ones.
pub fn densify_and_prune(
    set: &mut GaussianSet,
    stats: &DensifyStats,
    cfg: &DensifyConfig,
    extent: f64,
    rng: &mut ChaCha8Rng,
) -> DensifyOutcome {
    let n = set.len();
    let size_limit = cfg.percent_dense * extent;
    let mut out = GaussianSet::new();
    let mut source = Vec::with_capacity(n);
    let mut added = Vec::new();
    let (mut cloned, mut split) = (0, 0);
    for i in 0..n {
        let g = set.get(i);
        let scale = set.scales(i);
        if stats.mean(i) > cfg.grad_threshold {
            if scale.max() <= size_limit {
                let offset = sample_offset(set, i, &scale, rng);
                added.push(Gaussian { mean: g.mean + offset, ..g.clone() });
                out.push(g);
                source.push(Some(i));
                cloned += 1;
            } else {
                let child_log = (scale / SPLIT_SCALE_DIVISOR).map(f64::ln);
                for _ in 0..2 {
                    let offset = sample_offset(set, i, &scale, rng);
                    added.push(Gaussian { mean: g.mean + offset, log_scale: child_log, ..g.clone() });
                }
                split += 1;
            }
        } else {
            out.push(g);
            source.push(Some(i));
        }
    }
    for g in added {
        out.push(g);
        source.push(None);
    }
    let keep: Vec<bool> = (0..out.len()).map(|i| out.opacity(i) >= cfg.prune_opacity).collect();
    let pruned = keep.iter().filter(|k| !**k).count();
    out.retain_mask(&keep);
    let source = source.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(s, _)| s).collect();
    *set = out;
    DensifyOutcome { cloned, split, pruned, source }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg() -> DensifyConfig {
        DensifyConfig::default()
    }

    fn stats(values: &[f64]) -> DensifyStats {
        DensifyStats { accum: values.to_vec(), count: vec![1; values.len()] }
    }

    #[test]
    fn quiet_set_is_unchanged() {
        let mut set = GaussianSet::from_gaussians([
            Gaussian::isotropic(Vec3::zeros(), 0.5, 0.5, Vec3::x()),
            Gaussian::isotropic(Vec3::x(), 5.0, 0.9, Vec3::y()),
        ]);
        let before = set.clone();
        let out = densify_and_prune(&mut set, &stats(&[1e-5, 0.0]), &cfg(), 100.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(set, before);
        assert_eq!(out.source, vec![Some(0), Some(1)]);
    }

    #[test]
    fn transparent_gaussian_is_pruned() {
        let mut set = GaussianSet::from_gaussians([
            Gaussian::isotropic(Vec3::zeros(), 0.5, 0.001, Vec3::x()),
            Gaussian::isotropic(Vec3::x(), 0.5, 0.5, Vec3::y()),
        ]);
        let out = densify_and_prune(&mut set, &stats(&[0.0, 0.0]), &cfg(), 100.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(set.len(), 1);
        assert_eq!(set.means[0], Vec3::x());
        assert_eq!((out.pruned, out.source), (1, vec![Some(1)]));
    }

    #[test]
    fn large_gaussian_splits_in_two() {
        let mut set = GaussianSet::from_gaussians([Gaussian::isotropic(Vec3::zeros(), 5.0, 0.5, Vec3::x())]);
        let out = densify_and_prune(&mut set, &stats(&[1.0]), &cfg(), 100.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(set.len(), 2);
        assert_eq!(out.split, 1);
        for i in 0..2 {
            assert!((set.scales(i) - Vec3::repeat(5.0 / 1.6)).norm() < 1e-12);
        }
        assert_eq!(out.source, vec![None, None]);
    }

    #[test]
    fn small_gaussian_is_cloned() {
        let mut set = GaussianSet::from_gaussians([Gaussian::isotropic(Vec3::zeros(), 0.5, 0.5, Vec3::x())]);
        let out = densify_and_prune(&mut set, &stats(&[1.0]), &cfg(), 100.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!((set.len(), out.cloned), (2, 1));
        assert_eq!(set.means[0], Vec3::zeros());
        assert_ne!(set.means[1], Vec3::zeros());
        assert_eq!(set.log_scales[0], set.log_scales[1]);
    }
}
