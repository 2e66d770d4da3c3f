use crate::features::{parse_optional_feature, FeatureKind};
use crate::io::{IoError, KeyValues};
use crate::metrics::DEFAULT_MASK_THRESHOLD;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid training config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningRates {
    pub color: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    /// Position rate at iteration 0, multiplied by the scene extent.
    pub position_init: f64,
    /// Position rate reached at `max_iterations`, multiplied by the scene extent.
    pub position_final: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            color: 0.0025,
            opacity: 0.05,
            scale: 0.005,
            rotation: 0.001,
            position_init: 1.6e-4,
            position_final: 1.6e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensifyConfig {
    pub interval: usize,
    pub start: usize,
    /// Densification stops after this fraction of `max_iterations`.
    pub stop_fraction: f64,
    /// Threshold on the mean view-space gradient norm.
    pub grad_threshold: f64,
    pub prune_opacity: f64,
    /// Gaussians whose largest scale exceeds this fraction of the scene
    /// extent are split; smaller ones are cloned.
    pub percent_dense: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            interval: 100,
            start: 500,
            stop_fraction: 0.6,
            grad_threshold: 2e-4,
            prune_opacity: 0.005,
            percent_dense: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the photometric term when a geometric loss is active.
    pub h_photo: f64,
    /// D-SSIM weight inside the photometric loss.
    pub theta: f64,
    /// Geometric loss; `None` trains with the photometric loss alone.
    pub feature: Option<FeatureKind>,
    pub k: usize,
    pub knn_refresh: usize,
    pub max_iterations: usize,
    pub target_psnr: Option<f64>,
    pub lr: LearningRates,
    pub densify: DensifyConfig,
    pub seed: u64,
    pub log_interval: usize,
    /// Evaluate Gaussian planarity on squared instead of plain scales.
    pub squared_scale_planarity: bool,
    pub mask_threshold: f64,
    /// Drop Gaussians below this opacity from the evaluation cloud.
    pub eval_opacity_threshold: Option<f64>,
    /// Every n-th camera is held out from training (0 keeps all).
    pub holdout_every: usize,
    /// Early stopping uses held-out instead of training views.
    pub stop_on_holdout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            h_photo: 0.05,
            theta: 0.2,
            feature: Some(FeatureKind::PlanarityKnn),
            k: 50,
            knn_refresh: 100,
            max_iterations: 15_000,
            target_psnr: None,
            lr: LearningRates::default(),
            densify: DensifyConfig::default(),
            seed: 0,
            log_interval: 100,
            squared_scale_planarity: false,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            eval_opacity_threshold: None,
            holdout_every: 0,
            stop_on_holdout: false,
        }
    }
}

pub const CONFIG_KEYS: [&str; 26] = [
    "h_photo",
    "theta",
    "feature",
    "k",
    "knn_refresh",
    "max_iterations",
    "target_psnr",
    "lr_color",
    "lr_opacity",
    "lr_scale",
    "lr_rotation",
    "lr_position_init",
    "lr_position_final",
    "densify_interval",
    "densify_start",
    "densify_stop_fraction",
    "densify_grad_threshold",
    "prune_opacity",
    "percent_dense",
    "seed",
    "log_interval",
    "squared_scale_planarity",
    "mask_threshold",
    "eval_opacity_threshold",
    "holdout_every",
    "stop_on_holdout",
];

fn optional_to_string(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.h_photo > 0.0 && self.h_photo.is_finite()) {
            return bad("h_photo must be positive");
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("theta must lie in [0, 1]");
        }
        let l = &self.lr;
        if ![l.color, l.opacity, l.scale, l.rotation, l.position_init, l.position_final]
            .iter()
            .all(|r| *r > 0.0 && r.is_finite())
        {
            return bad("all learning rates must be positive");
        }
        if self.k < 3 {
            return bad("k must be at least 3");
        }
        if self.knn_refresh == 0 || self.log_interval == 0 || self.densify.interval == 0 {
            return bad("knn_refresh, log_interval and densify_interval must be positive");
        }
        if !(0.0..=1.0).contains(&self.densify.stop_fraction) {
            return bad("densify_stop_fraction must lie in [0, 1]");
        }
        if !(self.densify.grad_threshold > 0.0 && self.densify.percent_dense > 0.0 && self.densify.prune_opacity >= 0.0) {
            return bad("densification thresholds must be positive");
        }
        if self.target_psnr.is_some_and(|t| !t.is_finite()) {
            return bad("target_psnr must be finite");
        }
        if !(self.mask_threshold > 0.0) {
            return bad("mask_threshold must be positive");
        }
        if self.holdout_every == 1 {
            return bad("holdout_every = 1 would hold out every camera");
        }
        if self.stop_on_holdout && self.holdout_every == 0 {
            return bad("stop_on_holdout needs holdout_every > 1");
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("h_photo", self.h_photo);
        kv.set("theta", self.theta);
        kv.set("feature", self.feature.map_or("none", |f| f.as_str()));
        kv.set("k", self.k);
        kv.set("knn_refresh", self.knn_refresh);
        kv.set("max_iterations", self.max_iterations);
        kv.set("target_psnr", optional_to_string(self.target_psnr));
        kv.set("lr_color", self.lr.color);
        kv.set("lr_opacity", self.lr.opacity);
        kv.set("lr_scale", self.lr.scale);
        kv.set("lr_rotation", self.lr.rotation);
        kv.set("lr_position_init", self.lr.position_init);
        kv.set("lr_position_final", self.lr.position_final);
        kv.set("densify_interval", self.densify.interval);
        kv.set("densify_start", self.densify.start);
        kv.set("densify_stop_fraction", self.densify.stop_fraction);
        kv.set("densify_grad_threshold", self.densify.grad_threshold);
        kv.set("prune_opacity", self.densify.prune_opacity);
        kv.set("percent_dense", self.densify.percent_dense);
        kv.set("seed", self.seed);
        kv.set("log_interval", self.log_interval);
        kv.set("squared_scale_planarity", self.squared_scale_planarity);
        kv.set("mask_threshold", self.mask_threshold);
        kv.set("eval_opacity_threshold", optional_to_string(self.eval_opacity_threshold));
        kv.set("holdout_every", self.holdout_every);
        kv.set("stop_on_holdout", self.stop_on_holdout);
        kv
    }

    /// Missing keys keep their defaults. Keys outside the config and
    /// `extra_allowed` are rejected.
    pub fn from_key_values(kv: &KeyValues, extra_allowed: &[&str]) -> Result<Self, ConfigError> {
        let allowed: Vec<&str> = CONFIG_KEYS.iter().chain(extra_allowed).copied().collect();
        kv.reject_unknown(&allowed)?;
        let mut c = TrainConfig::default();
        macro_rules! take {
            ($key:literal, $($field:ident).+) => {
                if let Some(v) = kv.parse_value($key)? {
                    c.$($field).+ = v;
                }
            };
        }
        take!("h_photo", h_photo);
        take!("theta", theta);
        take!("k", k);
        take!("knn_refresh", knn_refresh);
        take!("max_iterations", max_iterations);
        take!("lr_color", lr.color);
        take!("lr_opacity", lr.opacity);
        take!("lr_scale", lr.scale);
        take!("lr_rotation", lr.rotation);
        take!("lr_position_init", lr.position_init);
        take!("lr_position_final", lr.position_final);
        take!("densify_interval", densify.interval);
        take!("densify_start", densify.start);
        take!("densify_stop_fraction", densify.stop_fraction);
        take!("densify_grad_threshold", densify.grad_threshold);
        take!("prune_opacity", densify.prune_opacity);
        take!("percent_dense", densify.percent_dense);
        take!("seed", seed);
        take!("log_interval", log_interval);
        take!("squared_scale_planarity", squared_scale_planarity);
        take!("mask_threshold", mask_threshold);
        take!("holdout_every", holdout_every);
        take!("stop_on_holdout", stop_on_holdout);
        if let Some(f) = kv.get("feature") {
            c.feature = parse_optional_feature(f).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let optional = |key: &str| -> Result<Option<Option<f64>>, ConfigError> {
            match kv.get(key) {
                None => Ok(None),
                Some("none") => Ok(Some(None)),
                Some(_) => Ok(Some(kv.parse_value::<f64>(key)?)),
            }
        };
        if let Some(t) = optional("target_psnr")? {
            c.target_psnr = t;
        }
        if let Some(t) = optional("eval_opacity_threshold")? {
            c.eval_opacity_threshold = t;
        }
        c.validate()?;
        Ok(c)
    }

    /// Position learning rate at `iteration`, before extent scaling:
    /// log-linear interpolation between the initial and final rates.
    pub fn position_lr(&self, iteration: usize) -> f64 {
        let t = if self.max_iterations == 0 {
            1.0
        } else {
            (iteration as f64 / self.max_iterations as f64).clamp(0.0, 1.0)
        };
        (self.lr.position_init.ln() * (1.0 - t) + self.lr.position_final.ln() * t).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_round_trip() {
        let mut c = TrainConfig { feature: None, target_psnr: Some(27.5), seed: 9, ..Default::default() };
        c.densify.grad_threshold = 1.0 / 3.0;
        let kv = c.to_key_values();
        let back = TrainConfig::from_key_values(&KeyValues::parse(&kv.to_text()).unwrap(), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_key_values().to_text(), kv.to_text());
    }

    #[test]
    fn defaults_and_rejections() {
        let c = TrainConfig::from_key_values(&KeyValues::new(), &[]).unwrap();
        assert_eq!(c, TrainConfig::default());
        for bad in ["h_photo = 0", "theta = 1.5", "lr_color = -1", "feature = curvature", "bogus = 1", "k = 2"] {
            assert!(TrainConfig::from_key_values(&KeyValues::parse(bad).unwrap(), &[]).is_err(), "{bad}");
        }
        assert!(TrainConfig::from_key_values(&KeyValues::parse("scene = x").unwrap(), &["scene"]).is_ok());
    }

    #[test]
    fn position_schedule_endpoints() {
        let c = TrainConfig { max_iterations: 1000, ..Default::default() };
        assert!((c.position_lr(0) - 1.6e-4).abs() < 1e-18);
        assert!((c.position_lr(1000) - 1.6e-6).abs() < 1e-18);
        assert!((c.position_lr(500) - 1.6e-5).abs() < 1e-17);
    }
}
