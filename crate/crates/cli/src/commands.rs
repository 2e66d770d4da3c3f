use crate::run_config::RunConfig;
use anyhow::{bail, Context, Result};
use clap::Args;
use geosplat::features::{parse_optional_feature, FeatureKind};
use geosplat::io::{self, KeyValues};
use geosplat::metrics::{chamfer, DEFAULT_MASK_THRESHOLD};
use geosplat::neighborhood::{build_index, point_features};
use geosplat::renderer::{ImageBuffer, RenderSettings};
use geosplat::scene::{parse_vec3, synth_scene, SceneFiles, SceneSpec};
use geosplat::trainer::{evaluation_cloud, Trainer, TrainingData};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const SUMMARY_FILE: &str = "summary.cfg";

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene spec (key = value file); missing keys take their defaults.
    #[arg(long)]
    spec: PathBuf,
    /// Output scene directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write PNG copies of the ground-truth images.
    #[arg(long)]
    png: bool,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = SceneSpec::from_key_values(&KeyValues::load(&a.spec)?)
        .with_context(|| format!("in {}", a.spec.display()))?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let scene = synth_scene(&spec)?;
    scene.write_to(&a.out)?;
    if a.png {
        for (k, img) in scene.images.iter().enumerate() {
            write_png(&a.out.join(geosplat::scene::IMAGES_DIR).join(format!("view_{k:03}.png")), img)?;
        }
    }
    println!(
        "{}: {} cameras, {} reference points, {} initial Gaussians -> {}",
        spec.kind,
        scene.cameras.len(),
        scene.reference.len(),
        scene.initial.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config: training keys plus `scene`, `out`, `checkpoint_interval`
    /// and `save_png`.
    #[arg(long)]
    config: PathBuf,
    /// Geometric loss [default: planarity-knn].
    #[arg(long, value_parser = ["none", "planarity-gaussian", "planarity-knn", "omnivariance-knn", "eigenentropy-knn"])]
    feature: Option<String>,
    /// Photometric weight h when a geometric loss is active [default: 0.05].
    #[arg(long)]
    h_photo: Option<f64>,
    /// Neighborhood size [default: 50].
    #[arg(long)]
    k: Option<usize>,
    /// Maximum iterations [default: 15000].
    #[arg(long)]
    iters: Option<usize>,
    /// Stop at the first logged iteration reaching this PSNR (dB).
    #[arg(long)]
    target_psnr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut run = RunConfig::load(&a.config)?;
    let t = &mut run.train;
    if let Some(f) = &a.feature {
        t.feature = parse_optional_feature(f)?;
    }
    if let Some(h) = a.h_photo {
        t.h_photo = h;
    }
    if let Some(k) = a.k {
        t.k = k;
    }
    if let Some(n) = a.iters {
        t.max_iterations = n;
    }
    if a.target_psnr.is_some() {
        t.target_psnr = a.target_psnr;
    }
    if let Some(s) = a.seed {
        t.seed = s;
    }
    if let Some(o) = &a.out {
        run.out = o.clone();
    }
    t.validate()?;

    let scene = SceneFiles::load(&run.scene)?;
    let data = TrainingData {
        cameras: scene.cameras,
        images: scene.images,
        reference: Some(scene.reference),
        background: scene.spec.background,
    };
    let checkpoints = run.out.join("checkpoints");
    fs::create_dir_all(&checkpoints).with_context(|| format!("creating {}", run.out.display()))?;
    fs::write(run.out.join("config.cfg"), run.to_key_values().to_text())?;

    let mut trainer = Trainer::new(scene.initial, data, run.train.clone())?;
    let mut printed = 0;
    let mut failure = None;
    let summary = trainer.run_with(|tr| {
        for r in &tr.records[printed..] {
            println!(
                "iter {:>6}  loss {:.5}  psnr {:.2}  gaussians {:>6}  chamfer_masked {:.3}",
                r.iteration, r.total, r.psnr, r.count, r.chamfer_masked
            );
        }
        printed = tr.records.len();
        let it = tr.iteration;
        if failure.is_none() && run.checkpoint_interval > 0 && it % run.checkpoint_interval == 0 {
            failure = io::write_gaussians(&checkpoints.join(format!("iter_{it:06}.ply")), &tr.set).err();
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }

    fs::write(run.out.join("metrics.csv"), trainer.metrics_csv())?;
    io::write_gaussians(&run.out.join("final.ply"), &trainer.set)?;
    let renders = run.out.join("renders");
    fs::create_dir_all(&renders)?;
    for (k, cam) in trainer.data.cameras.iter().enumerate() {
        let (img, _) = geosplat::renderer::render(&trainer.set, cam, &trainer.settings);
        io::write_ppm(&renders.join(format!("view_{k:03}.ppm")), &img)?;
        if run.save_png {
            write_png(&renders.join(format!("view_{k:03}.png")), &img)?;
        }
    }

    let last = trainer.records.last().context("no metrics were logged")?;
    let report = trainer.chamfer_report()?;
    let mut s = KeyValues::new();
    s.set("feature", run.train.feature.map_or("none", FeatureKind::as_str));
    s.set("protocol", if run.train.target_psnr.is_some() { "fixed-psnr" } else { "fixed-iterations" });
    s.set("target_psnr", run.train.target_psnr.map_or("none".to_string(), |v| v.to_string()));
    s.set("target_reached", summary.target_reached.map_or("none".to_string(), |v| v.to_string()));
    s.set("seed", run.train.seed);
    s.set("iterations", summary.stopped_at);
    s.set("count", last.count);
    s.set("psnr", last.psnr);
    s.set("ssim", last.ssim);
    s.set("chamfer_all", last.chamfer_all);
    s.set("chamfer_masked", last.chamfer_masked);
    if let Some(r) = &report {
        s.set("accuracy", r.accuracy);
        s.set("accuracy_masked", r.accuracy_masked);
        s.set("completeness", r.completeness);
    }
    fs::write(run.out.join(SUMMARY_FILE), s.to_text())?;
    println!(
        "stopped at iteration {}: psnr {:.2} dB, {} Gaussians, chamfer_all {:.3}, chamfer_masked {:.3}",
        summary.stopped_at, last.psnr, last.count, last.chamfer_all, last.chamfer_masked
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reconstructed cloud or Gaussian set (x, y, z are used).
    #[arg(long)]
    recon: PathBuf,
    /// Reference surface cloud.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Accuracy mask distance.
    #[arg(long, default_value_t = DEFAULT_MASK_THRESHOLD)]
    threshold: f64,
    /// Output directory for chamfer.csv and distances.ply [default: the
    /// reconstruction's directory].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only evaluate Gaussians at or above this opacity (Gaussian PLY input).
    #[arg(long)]
    min_opacity: Option<f64>,
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if !(a.threshold > 0.0) {
        bail!("--threshold must be positive");
    }
    let recon = match a.min_opacity {
        Some(t) => evaluation_cloud(&io::read_gaussians(&a.recon)?, Some(t)),
        None => io::read_point_cloud(&a.recon)?,
    };
    let reference = io::read_point_cloud(&a.reference)?;
    let r = chamfer(&recon, &reference, a.threshold)?;
    let out = a.out.clone().unwrap_or_else(|| a.recon.parent().unwrap_or(Path::new(".")).to_path_buf());
    fs::create_dir_all(&out)?;
    let csv = format!(
        "mean_all,mean_masked,accuracy,accuracy_masked,completeness,mask_threshold,fraction_masked_out\n{},{},{},{},{},{},{}\n",
        r.mean_all, r.mean_masked, r.accuracy, r.accuracy_masked, r.completeness, r.mask_threshold, r.fraction_masked_out
    );
    fs::write(out.join("chamfer.csv"), &csv)?;
    io::write_point_cloud(&out.join("distances.ply"), &recon, Some(("distance", &r.recon_distances)))?;
    print!("{csv}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Gaussian set PLY.
    #[arg(long)]
    gaussians: PathBuf,
    /// Camera file (one camera per line).
    #[arg(long)]
    camera: PathBuf,
    /// Output image; `.png` writes PNG, anything else binary PPM.
    #[arg(long)]
    out: PathBuf,
    /// Camera line to use.
    #[arg(long, default_value_t = 0)]
    view: usize,
    /// Background color as r,g,b in [0, 1].
    #[arg(long, default_value = "0,0,0")]
    background: String,
}

pub fn background_settings(background: &str) -> Result<RenderSettings> {
    let background = parse_vec3(background).map_err(anyhow::Error::msg).context("--background")?;
    Ok(RenderSettings { background, ..Default::default() })
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let set = io::read_gaussians(&a.gaussians)?;
    let cameras = io::read_cameras(&a.camera)?;
    let cam = cameras
        .get(a.view)
        .with_context(|| format!("{} has {} cameras, view {} requested", a.camera.display(), cameras.len(), a.view))?;
    let settings = background_settings(&a.background)?;
    let (img, splats) = geosplat::renderer::render(&set, cam, &settings);
    if is_png(&a.out) {
        write_png(&a.out, &img)?;
    } else {
        io::write_ppm(&a.out, &img)?;
    }
    println!("rendered {} of {} Gaussians to {}", splats.len(), set.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// Neighborhood size.
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// Output CSV [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn features(a: &FeaturesArgs) -> Result<()> {
    let cloud = io::read_point_cloud(&a.cloud)?;
    let index = build_index(&cloud, a.k)?;
    let values = point_features(&cloud, &index)?;
    let mut csv = String::from("index,x,y,z,planarity,omnivariance,eigenentropy\n");
    for (i, (p, f)) in cloud.points.iter().zip(&values).enumerate() {
        writeln!(csv, "{i},{},{},{},{},{},{}", p.x, p.y, p.z, f[0], f[1], f[2])?;
    }
    let n = values.len().max(1) as f64;
    let mean = |c: usize| values.iter().map(|f| f[c]).sum::<f64>() / n;
    match &a.out {
        Some(path) => {
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            println!(
                "{} points, k = {}: mean planarity {:.4}, omnivariance {:.4}, eigenentropy {:.4}",
                values.len(),
                a.k,
                mean(0),
                mean(1),
                mean(2)
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

struct RunSummary {
    name: String,
    kv: KeyValues,
}

impl RunSummary {
    fn get(&self, key: &str) -> &str {
        self.kv.get(key).unwrap_or("")
    }

    fn number(&self, key: &str) -> Result<f64> {
        self.kv.parse_value(key)?.with_context(|| format!("{}: summary lacks '{key}'", self.name))
    }
}

/// One row per run, grouped by stopping protocol, with the relative
/// Chamfer change against the feature-free run of the same protocol and seed.
pub fn compare(runs: &[PathBuf]) -> Result<()> {
    let mut rows = Vec::new();
    for dir in runs {
        let kv = KeyValues::load(&dir.join(SUMMARY_FILE)).with_context(|| format!("{} is not a finished run", dir.display()))?;
        rows.push(RunSummary { name: dir.display().to_string(), kv });
    }
    rows.sort_by(|a, b| (a.get("protocol"), a.get("seed")).cmp(&(b.get("protocol"), b.get("seed"))));
    let mut out = String::from(
        "protocol,run,feature,seed,iterations,count,psnr,chamfer_masked,chamfer_all,chamfer_masked_change,chamfer_all_change\n",
    );
    for r in &rows {
        let baseline = rows
            .iter()
            .find(|b| b.get("feature") == "none" && b.get("protocol") == r.get("protocol") && b.get("seed") == r.get("seed"));
        let change = |key: &str| -> Result<String> {
            match baseline {
                Some(b) if r.get("feature") != "none" => {
                    let base = b.number(key)?;
                    Ok(format!("{:.2}%", 100.0 * (r.number(key)? - base) / base))
                }
                _ => Ok(String::new()),
            }
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{:.3},{:.4},{:.4},{},{}",
            r.get("protocol"),
            r.name,
            r.get("feature"),
            r.get("seed"),
            r.get("iterations"),
            r.get("count"),
            r.number("psnr")?,
            r.number("chamfer_masked")?,
            r.number("chamfer_all")?,
            change("chamfer_masked")?,
            change("chamfer_all")?
        )?;
    }
    print!("{out}");
    Ok(())
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    image::save_buffer(path, &io::ppm::to_rgb8(img), img.width as u32, img.height as u32, image::ColorType::Rgb8)
        .with_context(|| format!("writing {}", path.display()))
}
