//! Photometric-geometric optimization loop.

mod adam;
mod config;
mod densify;

pub use adam::{Adam, Moments};
pub use config::{ConfigError, DensifyConfig, LearningRates, TrainConfig, CONFIG_KEYS};
pub use densify::{densify_and_prune, DensifyOutcome, DensifyStats, SPLIT_SCALE_DIVISOR};

use crate::features::FeatureKind;
use crate::gaussians::{clamp_parameters, gaussian_planarity_loss, GaussianSet};
use crate::linalg3::Vec3;
use crate::metrics::{chamfer, psnr, ssim, ChamferReport, MetricsError};
use crate::neighborhood::{build_index, knn_loss_and_grad, NeighborhoodError, NeighborhoodIndex, PointCloud};
use crate::renderer::{backward, photometric_loss, render, Camera, ImageBuffer, RenderSettings};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at iteration {iteration}: {state}")]
    NonFinite { iteration: usize, state: String },
    #[error("invalid training data: {0}")]
    Data(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
}

/// Posed ground-truth views plus an optional reference surface cloud.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub cameras: Vec<Camera>,
    pub images: Vec<ImageBuffer>,
    pub reference: Option<PointCloud>,
    pub background: Vec3,
}

impl TrainingData {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.cameras.is_empty() || self.cameras.len() != self.images.len() {
            return Err(TrainError::Data(format!(
                "{} cameras but {} images",
                self.cameras.len(),
                self.images.len()
            )));
        }
        for (k, (c, im)) in self.cameras.iter().zip(&self.images).enumerate() {
            c.validate().map_err(|e| TrainError::Data(format!("camera {k}: {e}")))?;
            if (c.width, c.height) != (im.width, im.height) {
                return Err(TrainError::Data(format!("image {k} does not match its camera size")));
            }
        }
        Ok(())
    }

    /// 1.1 × the largest distance of a camera center from their mean.
    pub fn camera_extent(&self) -> f64 {
        let centers: Vec<Vec3> = self.cameras.iter().map(Camera::center).collect();
        let mean = centers.iter().sum::<Vec3>() / centers.len() as f64;
        let r = centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
        if r > 0.0 {
            1.1 * r
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub total: f64,
    pub photo: f64,
    pub geo: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub count: usize,
    pub chamfer_all: f64,
    pub chamfer_masked: f64,
}

pub const METRICS_HEADER: &str = "iter,total,photo,geo,psnr,ssim,count,chamfer_all,chamfer_masked";

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.total,
            self.photo,
            self.geo,
            self.psnr,
            self.ssim,
            self.count,
            self.chamfer_all,
            self.chamfer_masked
        )
    }
}

pub fn write_metrics_csv(mut w: impl Write, records: &[MetricsRecord]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()
}

/// Loss value of one evaluation; gradients land in `set.grads`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub total: f64,
    pub photo: f64,
    pub geo: f64,
    /// View-space gradient norm of the total loss per Gaussian.
    pub viewspace_grad_norms: Vec<f64>,
    pub visible: Vec<bool>,
}

/// Evaluates `h_photo·L_photo + L_geo` (or `L_photo` alone without a feature)
/// on one view and writes the gradients into `set.grads`.
///
/// The geometric term reads the means (kNN features, using `index` for the
/// neighbor lists) or the scales (Gaussian planarity). With a kNN feature and
/// no index the geometric term is zero.
pub fn total_loss(
    set: &mut GaussianSet,
    cam: &Camera,
    truth: &ImageBuffer,
    cfg: &TrainConfig,
    settings: &RenderSettings,
    index: Option<&NeighborhoodIndex>,
) -> Result<LossEval, TrainError> {
    set.zero_grads();
    let (img, splats) = render(set, cam, settings);
    let pl = photometric_loss(&img, truth, cfg.theta)?;
    let weight = if cfg.feature.is_some() { cfg.h_photo } else { 1.0 };
    let grad_image: Vec<f64> = pl.grad.iter().map(|g| g * weight).collect();
    let bw = backward(&grad_image, &splats, set, cam, settings);
    set.grads = bw.grads;

    let geo = match cfg.feature {
        None => 0.0,
        Some(FeatureKind::PlanarityGaussian) => {
            let sl = gaussian_planarity_loss(set, cfg.squared_scale_planarity);
            for (g, d) in set.grads.log_scales.iter_mut().zip(&sl.grads) {
                *g += d;
            }
            sl.loss
        }
        Some(kind) => match index {
            Some(idx) => {
                let cloud = PointCloud::new(set.means.clone());
                let kl = knn_loss_and_grad(&cloud, idx, kind)?;
                for (g, d) in set.grads.means.iter_mut().zip(&kl.grads) {
                    *g += d;
                }
                kl.loss
            }
            None => 0.0,
        },
    };
    Ok(LossEval {
        total: weight * pl.loss + geo,
        photo: pl.loss,
        geo,
        viewspace_grad_norms: bw.viewspace_grad_norms,
        visible: bw.visible,
    })
}

/// Mean PSNR and SSIM of the current set over the given views.
pub fn evaluate_views(
    set: &GaussianSet,
    data: &TrainingData,
    views: &[usize],
    settings: &RenderSettings,
) -> Result<(f64, f64), TrainError> {
    let (mut p, mut s) = (0.0, 0.0);
    for &v in views {
        let img = render(set, &data.cameras[v], settings).0;
        p += psnr(&img, &data.images[v])?;
        s += ssim(&img, &data.images[v])?;
    }
    let n = views.len().max(1) as f64;
    Ok((p / n, s / n))
}

/// Gaussian centers used for geometric evaluation.
pub fn evaluation_cloud(set: &GaussianSet, opacity_threshold: Option<f64>) -> PointCloud {
    PointCloud::new(
        (0..set.len())
            .filter(|&i| opacity_threshold.is_none_or(|t| set.opacity(i) >= t))
            .map(|i| set.means[i])
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    /// Last completed iteration.
    pub stopped_at: usize,
    /// Whether `target_psnr` was reached; `None` without a target.
    pub target_reached: Option<bool>,
}

/// Optimizer state for one training run.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub data: TrainingData,
    pub set: GaussianSet,
    pub settings: RenderSettings,
    pub iteration: usize,
    pub extent: f64,
    pub records: Vec<MetricsRecord>,
    /// Total loss of every iteration, starting at iteration 1.
    pub loss_trace: Vec<f64>,
    adam: Adam,
    moments: [Moments; 5],
    stats: DensifyStats,
    index: Option<NeighborhoodIndex>,
    train_views: Vec<usize>,
    holdout_views: Vec<usize>,
    order: Vec<usize>,
    order_pos: usize,
    order_rng: ChaCha8Rng,
    densify_rng: ChaCha8Rng,
    last_eval: Option<(f64, f64, f64)>,
}

const STRIDES: [usize; 5] = [3, 3, 4, 1, 3];

impl Trainer {
    pub fn new(set: GaussianSet, data: TrainingData, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        data.validate()?;
        if !set.is_finite() {
            return Err(TrainError::Data("initial Gaussians contain non-finite values".into()));
        }
        let n_views = data.cameras.len();
        let (holdout_views, train_views): (Vec<usize>, Vec<usize>) =
            (0..n_views).partition(|v| cfg.holdout_every > 1 && v % cfg.holdout_every == cfg.holdout_every - 1);
        if train_views.is_empty() {
            return Err(TrainError::Data("no training views".into()));
        }
        let extent = data.camera_extent();
        let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        order_rng.set_stream(1);
        let mut densify_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        densify_rng.set_stream(2);
        let n = set.len();
        let settings = RenderSettings { background: data.background, ..Default::default() };
        let mut t = Trainer {
            moments: STRIDES.map(|s| Moments::zeros(n * s)),
            stats: DensifyStats::zeros(n),
            cfg,
            data,
            set,
            settings,
            iteration: 0,
            extent,
            records: Vec::new(),
            loss_trace: Vec::new(),
            adam: Adam::default(),
            index: None,
            train_views,
            holdout_views,
            order: Vec::new(),
            order_pos: 0,
            order_rng,
            densify_rng,
            last_eval: None,
        };
        t.refresh_index()?;
        Ok(t)
    }

    /// Effective neighborhood size: `k` clamped to `n − 1`.
    pub fn effective_k(&self) -> usize {
        self.cfg.k.min(self.set.len().saturating_sub(1))
    }

    fn refresh_index(&mut self) -> Result<(), TrainError> {
        self.index = None;
        if self.cfg.feature.is_some_and(FeatureKind::is_knn) && self.effective_k() >= 3 {
            let mut idx = build_index(&PointCloud::new(self.set.means.clone()), self.effective_k())?;
            idx.snapshot_iteration = self.iteration;
            self.index = Some(idx);
        }
        Ok(())
    }

    fn next_camera(&mut self) -> usize {
        if self.order_pos == self.order.len() {
            self.order = self.train_views.clone();
            self.order.shuffle(&mut self.order_rng);
            self.order_pos = 0;
        }
        self.order_pos += 1;
        self.order[self.order_pos - 1]
    }

    fn diagnostic_state(&self, eval: &LossEval) -> String {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        format!(
            "total={} photo={} geo={} gaussians={} finite_params={} finite_grads={} max_log_scale={}",
            eval.total,
            eval.photo,
            eval.geo,
            self.set.len(),
            self.set.is_finite(),
            self.set.grads.is_finite(),
            self.set.log_scales.iter().map(|s| s.max()).fold(f64::NEG_INFINITY, f64::max),
        ) + if finite(&self.loss_trace) { "" } else { " (earlier losses non-finite)" }
    }

    fn apply_adam(&mut self) {
        let step = self.iteration as u64;
        let g = &self.set.grads;
        let lr = &self.cfg.lr;
        let pos_lr = self.cfg.position_lr(self.iteration) * self.extent;
        let [m_mean, m_scale, m_rot, m_op, m_col] = &mut self.moments;
        let a = &self.adam;
        m_mean.update(a, self.set.means.iter_mut().flat_map(|v| v.iter_mut()), g.means.iter().flat_map(|v| v.iter().copied()), pos_lr, step);
        m_scale.update(
            a,
            self.set.log_scales.iter_mut().flat_map(|v| v.iter_mut()),
            g.log_scales.iter().flat_map(|v| v.iter().copied()),
            lr.scale,
            step,
        );
        m_rot.update(
            a,
            self.set.rotations.iter_mut().flat_map(|v| v.iter_mut()),
            g.rotations.iter().flat_map(|v| v.iter().copied()),
            lr.rotation,
            step,
        );
        m_op.update(a, self.set.opacity_logits.iter_mut(), g.opacity_logits.iter().copied(), lr.opacity, step);
        m_col.update(a, self.set.colors.iter_mut().flat_map(|v| v.iter_mut()), g.colors.iter().flat_map(|v| v.iter().copied()), lr.color, step);
    }

    fn densify_active(&self, iteration: usize) -> bool {
        let stop = (self.cfg.densify.stop_fraction * self.cfg.max_iterations as f64).floor() as usize;
        iteration >= self.cfg.densify.start && iteration <= stop
    }

    fn log(&mut self, loss: (f64, f64, f64)) -> Result<MetricsRecord, TrainError> {
        let (psnr, ssim) = evaluate_views(&self.set, &self.data, &self.train_views, &self.settings)?;
        let (chamfer_all, chamfer_masked) = match (&self.data.reference, self.chamfer_report()?) {
            (Some(_), Some(r)) => (r.mean_all, r.mean_masked),
            _ => (f64::NAN, f64::NAN),
        };
        let rec = MetricsRecord {
            iteration: self.iteration,
            total: loss.0,
            photo: loss.1,
            geo: loss.2,
            psnr,
            ssim,
            count: self.set.len(),
            chamfer_all,
            chamfer_masked,
        };
        self.records.push(rec.clone());
        Ok(rec)
    }

    /// Chamfer report of the current centers against the reference, if any.
    pub fn chamfer_report(&self) -> Result<Option<ChamferReport>, TrainError> {
        let Some(reference) = &self.data.reference else { return Ok(None) };
        let cloud = evaluation_cloud(&self.set, self.cfg.eval_opacity_threshold);
        if cloud.is_empty() {
            return Ok(None);
        }
        Ok(Some(chamfer(&cloud, reference, self.cfg.mask_threshold)?))
    }

    /// PSNR used for early stopping.
    fn stopping_psnr(&self, logged: &MetricsRecord) -> Result<f64, TrainError> {
        if self.cfg.stop_on_holdout {
            Ok(evaluate_views(&self.set, &self.data, &self.holdout_views, &self.settings)?.0)
        } else {
            Ok(logged.psnr)
        }
    }

    /// Logs the initial state as iteration 0. Its loss columns are evaluated
    /// on the first scheduled view without updating anything.
    fn log_initial(&mut self) -> Result<(), TrainError> {
        let v = self.train_views[0];
        let mut probe = self.set.clone();
        let eval = total_loss(&mut probe, &self.data.cameras[v], &self.data.images[v], &self.cfg, &self.settings, self.index.as_ref())?;
        self.log((eval.total, eval.photo, eval.geo))?;
        Ok(())
    }

    /// One optimization iteration. Returns the metrics row when this
    /// iteration is logged.
    pub fn step(&mut self) -> Result<Option<MetricsRecord>, TrainError> {
        if self.records.is_empty() {
            self.log_initial()?;
        }
        self.iteration += 1;
        let it = self.iteration;
        let v = self.next_camera();
        let eval = total_loss(
            &mut self.set,
            &self.data.cameras[v],
            &self.data.images[v],
            &self.cfg,
            &self.settings,
            self.index.as_ref(),
        )?;
        if !eval.total.is_finite() || !self.set.grads.is_finite() {
            return Err(TrainError::NonFinite { iteration: it, state: self.diagnostic_state(&eval) });
        }
        self.loss_trace.push(eval.total);
        self.last_eval = Some((eval.total, eval.photo, eval.geo));
        self.apply_adam();
        clamp_parameters(&mut self.set, self.extent);

        if self.densify_active(it) {
            self.stats.record(&eval.viewspace_grad_norms, &eval.visible);
        }
        let mut rebuilt = false;
        if self.densify_active(it) && it % self.cfg.densify.interval == 0 {
            let outcome = densify_and_prune(&mut self.set, &self.stats, &self.cfg.densify, self.extent, &mut self.densify_rng);
            self.moments = [0, 1, 2, 3, 4].map(|k| self.moments[k].reindex(&outcome.source, STRIDES[k]));
            self.stats = DensifyStats::zeros(self.set.len());
            self.refresh_index()?;
            rebuilt = true;
        }
        if !rebuilt && it % self.cfg.knn_refresh == 0 {
            self.refresh_index()?;
        }
        if it % self.cfg.log_interval == 0 || it == self.cfg.max_iterations {
            let loss = self.last_eval.expect("loss evaluated this iteration");
            return Ok(Some(self.log(loss)?));
        }
        Ok(None)
    }

    /// Runs to `max_iterations`, or until the first logged iteration whose
    /// PSNR reaches `target_psnr`. `on_iteration` sees the state after every
    /// iteration.
    pub fn run_with(&mut self, mut on_iteration: impl FnMut(&Trainer)) -> Result<TrainSummary, TrainError> {
        if self.records.is_empty() {
            self.log_initial()?;
        }
        let mut reached = self.cfg.target_psnr.map(|_| false);
        while self.iteration < self.cfg.max_iterations {
            let logged = self.step()?;
            on_iteration(self);
            if let (Some(rec), Some(target)) = (logged, self.cfg.target_psnr) {
                if self.stopping_psnr(&rec)? >= target {
                    reached = Some(true);
                    break;
                }
            }
        }
        Ok(TrainSummary { stopped_at: self.iteration, target_reached: reached })
    }

    pub fn run(&mut self) -> Result<TrainSummary, TrainError> {
        self.run_with(|_| {})
    }

    pub fn metrics_csv(&self) -> String {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &self.records).expect("writing to memory");
        String::from_utf8(buf).expect("ASCII output")
    }
}
