use anyhow::{bail, Context, Result};
use geosplat::io::KeyValues;
use geosplat::trainer::TrainConfig;
use std::path::{Path, PathBuf};

/// Keys a run config adds on top of the training configuration.
pub const RUN_KEYS: [&str; 4] = ["scene", "out", "checkpoint_interval", "save_png"];

/// Training configuration plus the files a run reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Scene directory written by `synth`.
    pub scene: PathBuf,
    pub out: PathBuf,
    /// Write a Gaussian checkpoint every this many iterations (0 disables).
    pub checkpoint_interval: usize,
    /// Also write PNG copies of the final renders.
    pub save_png: bool,
}

impl RunConfig {
    /// Relative paths are resolved against `base`.
    pub fn from_key_values(kv: &KeyValues, base: &Path) -> Result<Self> {
        let train = TrainConfig::from_key_values(kv, &RUN_KEYS)?;
        let path = |key: &str| -> Result<PathBuf> {
            let v = kv.get(key).with_context(|| format!("run config is missing '{key}'"))?;
            Ok(std::path::absolute(base.join(v))?)
        };
        Ok(RunConfig {
            train,
            scene: path("scene")?,
            out: path("out")?,
            checkpoint_interval: kv.parse_value("checkpoint_interval")?.unwrap_or(0),
            save_png: kv.parse_value("save_png")?.unwrap_or(false),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::from_key_values(&kv, base).with_context(|| format!("in {}", path.display()))?;
        if !cfg.scene.is_dir() {
            bail!("scene directory {} does not exist", cfg.scene.display());
        }
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = self.train.to_key_values();
        kv.set("scene", self.scene.display());
        kv.set("out", self.out.display());
        kv.set("checkpoint_interval", self.checkpoint_interval);
        kv.set("save_png", self.save_png);
        kv
    }
}
