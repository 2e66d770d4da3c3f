//! Synthetic desk-scale scenes built from textured quads.
//!
//! Ground-truth images come from ray casting the quads directly, so they do
//! not depend on the Gaussian renderer. The reference cloud and the initial
//! Gaussians are sampled uniformly by area on faces that at least one camera
//! can see.

use crate::gaussians::{Gaussian, GaussianSet};
use crate::io::{IoError, KeyValues};
use crate::linalg3::Vec3;
use crate::neighborhood::{KdTree, PointCloud};
use crate::renderer::{Camera, CameraError, ImageBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Plane,
    Box,
    ManhattanCorner,
    TexturedCube,
}

impl SceneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneKind::Plane => "plane",
            SceneKind::Box => "box",
            SceneKind::ManhattanCorner => "manhattan-corner",
            SceneKind::TexturedCube => "textured-cube",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [SceneKind::Plane, SceneKind::Box, SceneKind::ManhattanCorner, SceneKind::TexturedCube]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown scene kind '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Edge length of the main structure.
    pub extent: f64,
    /// Checker square size; 0 gives solid faces.
    pub checker_period: f64,
    pub camera_count: usize,
    /// Distance of the cameras from the scene center, in extents.
    pub camera_distance: f64,
    pub camera_elevation_deg: f64,
    pub width: usize,
    pub height: usize,
    /// Per-axis supersampling of the ground-truth images.
    pub supersample: usize,
    pub reference_samples: usize,
    pub init_points: usize,
    /// Standard deviation of the isotropic noise added to initial positions.
    pub init_noise: f64,
    pub init_opacity: f64,
    /// Fraction of the initial points replaced by outliers drawn uniformly
    /// from the scene bounds padded by half an extent, with random colors.
    pub init_outliers: f64,
    pub background: Vec3,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            kind: SceneKind::TexturedCube,
            extent: 100.0,
            checker_period: 12.5,
            camera_count: 8,
            camera_distance: 2.5,
            camera_elevation_deg: 30.0,
            width: 64,
            height: 64,
            supersample: 3,
            reference_samples: 20_000,
            init_points: 3_000,
            init_noise: 2.0,
            init_opacity: 0.1,
            init_outliers: 0.0,
            background: Vec3::zeros(),
            seed: 1,
        }
    }
}

fn format_vec3(v: &Vec3) -> String {
    format!("{},{},{}", v.x, v.y, v.z)
}

pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(format!("expected three comma-separated numbers, got '{s}'")),
    }
}

const SPEC_KEYS: [&str; 16] = [
    "kind",
    "extent",
    "checker_period",
    "camera_count",
    "camera_distance",
    "camera_elevation_deg",
    "width",
    "height",
    "supersample",
    "reference_samples",
    "init_points",
    "init_noise",
    "init_opacity",
    "init_outliers",
    "background",
    "seed",
];

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::Invalid(m.to_string()));
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad("extent must be positive");
        }
        if self.camera_count < 3 {
            return bad("at least 3 cameras are required");
        }
        if !(self.camera_distance > 1.0) {
            return bad("camera_distance must exceed 1 extent");
        }
        if !(self.camera_elevation_deg > 0.0 && self.camera_elevation_deg < 90.0) {
            return bad("camera_elevation_deg must be in (0, 90)");
        }
        if self.width == 0 || self.height == 0 || self.supersample == 0 {
            return bad("image size and supersample must be positive");
        }
        if self.reference_samples == 0 || self.init_points < 2 {
            return bad("need reference samples and at least 2 initial points");
        }
        if !(self.init_noise >= 0.0 && self.checker_period >= 0.0) {
            return bad("init_noise and checker_period must be non-negative");
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return bad("init_opacity must be in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.init_outliers) {
            return bad("init_outliers must be in [0, 1)");
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("kind", self.kind);
        kv.set("extent", self.extent);
        kv.set("checker_period", self.checker_period);
        kv.set("camera_count", self.camera_count);
        kv.set("camera_distance", self.camera_distance);
        kv.set("camera_elevation_deg", self.camera_elevation_deg);
        kv.set("width", self.width);
        kv.set("height", self.height);
        kv.set("supersample", self.supersample);
        kv.set("reference_samples", self.reference_samples);
        kv.set("init_points", self.init_points);
        kv.set("init_noise", self.init_noise);
        kv.set("init_opacity", self.init_opacity);
        kv.set("init_outliers", self.init_outliers);
        kv.set("background", format_vec3(&self.background));
        kv.set("seed", self.seed);
        kv
    }

    /// Missing keys keep their defaults; unknown keys are rejected.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, SceneError> {
        kv.reject_unknown(&SPEC_KEYS)?;
        let mut s = SceneSpec::default();
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = kv.parse_value(stringify!($field))? {
                    s.$field = v;
                }
            };
        }
        take!(kind);
        take!(extent);
        take!(checker_period);
        take!(camera_count);
        take!(camera_distance);
        take!(camera_elevation_deg);
        take!(width);
        take!(height);
        take!(supersample);
        take!(reference_samples);
        take!(init_points);
        take!(init_noise);
        take!(init_opacity);
        take!(init_outliers);
        take!(seed);
        if let Some(b) = kv.get("background") {
            s.background = parse_vec3(b).map_err(|e| SceneError::Invalid(format!("background: {e}")))?;
        }
        s.validate()?;
        Ok(s)
    }
}

/// A one-sided textured parallelogram; the front faces `u × v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quad {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub colors: [Vec3; 2],
    pub checker_period: f64,
}

impl Quad {
    pub fn normal(&self) -> Vec3 {
        self.u.cross(&self.v).normalize()
    }

    pub fn area(&self) -> f64 {
        self.u.cross(&self.v).norm()
    }

    pub fn center(&self) -> Vec3 {
        self.origin + 0.5 * (self.u + self.v)
    }

    pub fn point(&self, a: f64, b: f64) -> Vec3 {
        self.origin + self.u * a + self.v * b
    }

    /// Albedo at surface coordinates `(a, b) ∈ [0, 1]²`.
    pub fn color_at(&self, a: f64, b: f64) -> Vec3 {
        if self.checker_period <= 0.0 {
            return self.colors[0];
        }
        let i = (a * self.u.norm() / self.checker_period).floor() as i64;
        let j = (b * self.v.norm() / self.checker_period).floor() as i64;
        self.colors[(i + j).rem_euclid(2) as usize]
    }

    /// Front-face hit: `(t, a, b)` along the ray.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64, f64)> {
        let n = self.u.cross(&self.v);
        let denom = dir.dot(&n);
        if denom >= 0.0 {
            return None;
        }
        let t = (self.origin - origin).dot(&n) / denom;
        if t <= 0.0 {
            return None;
        }
        let rel = origin + dir * t - self.origin;
        // Solve rel = a·u + b·v in the quad plane.
        let (uu, uv, vv) = (self.u.dot(&self.u), self.u.dot(&self.v), self.v.dot(&self.v));
        let (ru, rv) = (rel.dot(&self.u), rel.dot(&self.v));
        let det = uu * vv - uv * uv;
        let a = (ru * vv - rv * uv) / det;
        let b = (rv * uu - ru * uv) / det;
        ((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b)).then_some((t, a, b))
    }
}

const PALETTE: [[Vec3; 2]; 6] = [
    [Vec3::new(0.90, 0.30, 0.20), Vec3::new(0.95, 0.85, 0.60)],
    [Vec3::new(0.20, 0.50, 0.90), Vec3::new(0.85, 0.90, 0.95)],
    [Vec3::new(0.25, 0.75, 0.30), Vec3::new(0.10, 0.20, 0.15)],
    [Vec3::new(0.95, 0.80, 0.20), Vec3::new(0.35, 0.20, 0.50)],
    [Vec3::new(0.60, 0.20, 0.70), Vec3::new(0.90, 0.60, 0.80)],
    [Vec3::new(0.15, 0.65, 0.70), Vec3::new(0.95, 0.95, 0.90)],
];

/// Axis-aligned box faces with outward normals, centered at `c`.
fn box_faces(c: Vec3, size: Vec3, period: f64) -> Vec<Quad> {
    let h = size / 2.0;
    let (ex, ey, ez) = (Vec3::x() * size.x, Vec3::y() * size.y, Vec3::z() * size.z);
    let lo = c - h;
    let hi = c + h;
    let faces = [
        (lo, ey, ex),                                // bottom, -z
        (Vec3::new(lo.x, lo.y, hi.z), ex, ey),       // top, +z
        (lo, ex, ez),                                // -y
        (Vec3::new(lo.x, hi.y, lo.z), ez, ex),       // +y
        (lo, ez, ey),                                // -x
        (Vec3::new(hi.x, lo.y, lo.z), ey, ez),       // +x
    ];
    faces
        .iter()
        .enumerate()
        .map(|(k, &(origin, u, v))| Quad { origin, u, v, colors: PALETTE[k], checker_period: period })
        .collect()
}

pub fn scene_quads(spec: &SceneSpec) -> Vec<Quad> {
    let e = spec.extent;
    let p = spec.checker_period;
    match spec.kind {
        SceneKind::Plane => vec![Quad {
            origin: Vec3::new(-e / 2.0, -e / 2.0, 0.0),
            u: Vec3::x() * e,
            v: Vec3::y() * e,
            colors: PALETTE[0],
            checker_period: p,
        }],
        SceneKind::TexturedCube => box_faces(Vec3::zeros(), Vec3::repeat(e), p),
        SceneKind::Box => box_faces(Vec3::zeros(), Vec3::new(e, 0.7 * e, 0.4 * e), 0.0),
        SceneKind::ManhattanCorner => {
            let o = Vec3::new(-e / 2.0, -e / 2.0, -e / 2.0);
            vec![
                Quad { origin: o, u: Vec3::x() * e, v: Vec3::y() * e, colors: PALETTE[0], checker_period: p },
                Quad { origin: o, u: Vec3::y() * e, v: Vec3::z() * e, colors: PALETTE[1], checker_period: p },
                Quad { origin: o, u: Vec3::z() * e, v: Vec3::x() * e, colors: PALETTE[2], checker_period: p },
            ]
        }
    }
}

/// Cameras on a ring around the vertical axis, all looking at the origin.
/// The corner scene only places cameras over its open quadrant.
pub fn scene_cameras(spec: &SceneSpec, quads: &[Quad]) -> Result<Vec<Camera>, SceneError> {
    let dist = spec.camera_distance * spec.extent;
    let radius = quads
        .iter()
        .flat_map(|q| [q.origin, q.origin + q.u, q.origin + q.v, q.origin + q.u + q.v])
        .map(|p| p.norm())
        .fold(0.0, f64::max);
    let half_fov = (radius / dist).min(0.999).asin();
    let focal = 0.5 * spec.width.min(spec.height) as f64 / half_fov.tan() * 0.95;
    let elev = spec.camera_elevation_deg.to_radians();
    (0..spec.camera_count)
        .map(|k| {
            let frac = k as f64 / spec.camera_count as f64;
            let azimuth = match spec.kind {
                SceneKind::ManhattanCorner => (10.0 + 70.0 * k as f64 / (spec.camera_count - 1) as f64).to_radians(),
                _ => std::f64::consts::TAU * frac,
            };
            let eye = Vec3::new(elev.cos() * azimuth.cos(), elev.cos() * azimuth.sin(), elev.sin()) * dist;
            Ok(Camera::look_at(eye, Vec3::zeros(), Vec3::z(), focal, spec.width, spec.height)?)
        })
        .collect()
}

/// Ray-cast image of the quads with `ss × ss` supersampling.
pub fn ray_cast(quads: &[Quad], cam: &Camera, background: &Vec3, ss: usize) -> ImageBuffer {
    let origin = cam.center();
    let rows: Vec<Vec<Vec3>> = (0..cam.height)
        .into_par_iter()
        .map(|y| {
            (0..cam.width)
                .map(|x| {
                    let mut acc = Vec3::zeros();
                    for sy in 0..ss {
                        for sx in 0..ss {
                            let u = x as f64 + (sx as f64 + 0.5) / ss as f64;
                            let v = y as f64 + (sy as f64 + 0.5) / ss as f64;
                            let dir = cam.ray_direction(u, v);
                            let hit = quads
                                .iter()
                                .filter_map(|q| q.intersect(&origin, &dir).map(|(t, a, b)| (t, q, a, b)))
                                .min_by(|l, r| l.0.total_cmp(&r.0));
                            acc += hit.map_or(*background, |(_, q, a, b)| q.color_at(a, b));
                        }
                    }
                    acc / (ss * ss) as f64
                })
                .collect()
        })
        .collect();
    let mut img = ImageBuffer::new(cam.width, cam.height);
    for (y, row) in rows.iter().enumerate() {
        for (x, c) in row.iter().enumerate() {
            img.set_pixel(x, y, *c);
        }
    }
    img
}

/// Area-uniform samples on the quads: `(point, albedo)`.
fn sample_surface(quads: &[Quad], n: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec3, Vec3)> {
    let areas: Vec<f64> = quads.iter().map(Quad::area).collect();
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut r = rng.random::<f64>() * total;
            let mut k = 0;
            while k + 1 < quads.len() && r >= areas[k] {
                r -= areas[k];
                k += 1;
            }
            let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
            (quads[k].point(a, b), quads[k].color_at(a, b))
        })
        .collect()
}

/// Mean distance from each point to its nearest other point.
fn quad_bounds(quads: &[Quad]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for q in quads {
        for c in [q.origin, q.origin + q.u, q.origin + q.v, q.origin + q.u + q.v] {
            lo = lo.inf(&c);
            hi = hi.sup(&c);
        }
    }
    (lo, hi)
}

pub fn mean_nn_spacing(points: &[Vec3]) -> f64 {
    let tree = KdTree::new(points);
    let distances: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| tree.knn(&points[i], 1, Some(i)).first().map_or(0.0, |&(_, d2)| d2.sqrt()))
        .collect();
    distances.iter().sum::<f64>() / points.len() as f64
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub quads: Vec<Quad>,
    pub cameras: Vec<Camera>,
    pub images: Vec<ImageBuffer>,
    pub reference: PointCloud,
    pub initial: GaussianSet,
}

pub fn synth_scene(spec: &SceneSpec) -> Result<SyntheticScene, SceneError> {
    spec.validate()?;
    let all = scene_quads(spec);
    let cameras = scene_cameras(spec, &all)?;
    let images = cameras.iter().map(|c| ray_cast(&all, c, &spec.background, spec.supersample)).collect();
    let visible: Vec<Quad> = all
        .iter()
        .filter(|q| cameras.iter().any(|c| q.normal().dot(&(c.center() - q.center())) > 0.0))
        .cloned()
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let reference = PointCloud::new(sample_surface(&visible, spec.reference_samples, &mut rng).into_iter().map(|s| s.0).collect());

    rng.set_stream(2);
    let outliers = (spec.init_outliers * spec.init_points as f64).round() as usize;
    let samples = sample_surface(&visible, spec.init_points - outliers, &mut rng);
    let noise = Normal::new(0.0, spec.init_noise).map_err(|e| SceneError::Invalid(e.to_string()))?;
    let mut points: Vec<(Vec3, Vec3)> = samples
        .iter()
        .map(|(p, c)| (p + Vec3::from_fn(|_, _| noise.sample(&mut rng)), *c))
        .collect();
    rng.set_stream(3);
    let (lo, hi) = quad_bounds(&visible);
    let pad = Vec3::repeat(0.5 * spec.extent);
    let (lo, hi) = (lo - pad, hi + pad);
    for _ in 0..outliers {
        let p = Vec3::from_fn(|a, _| rng.random_range(lo[a]..hi[a]));
        points.push((p, Vec3::from_fn(|_, _| rng.random::<f64>())));
    }
    let means: Vec<Vec3> = points.iter().map(|p| p.0).collect();
    let spacing = mean_nn_spacing(&means);
    let initial = GaussianSet::from_gaussians(points.iter().map(|(m, c)| Gaussian::isotropic(*m, spacing, spec.init_opacity, *c)));
    Ok(SyntheticScene { spec: spec.clone(), quads: all, cameras, images, reference, initial })
}

pub const SPEC_FILE: &str = "scene.cfg";
pub const CAMERAS_FILE: &str = "cameras.txt";
pub const REFERENCE_FILE: &str = "reference.ply";
pub const INITIAL_FILE: &str = "init.ply";
pub const IMAGES_DIR: &str = "images";

pub fn view_file_name(k: usize) -> String {
    format!("view_{k:03}.ppm")
}

/// A scene as stored on disk.
#[derive(Debug, Clone)]
pub struct SceneFiles {
    pub spec: SceneSpec,
    pub cameras: Vec<Camera>,
    pub images: Vec<ImageBuffer>,
    pub reference: PointCloud,
    pub initial: GaussianSet,
}

impl SyntheticScene {
    /// Writes the spec, cameras, images, reference cloud and initial
    /// Gaussians into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SceneError> {
        let images = dir.join(IMAGES_DIR);
        std::fs::create_dir_all(&images).map_err(IoError::from)?;
        std::fs::write(dir.join(SPEC_FILE), self.spec.to_key_values().to_text()).map_err(IoError::from)?;
        crate::io::write_cameras(&dir.join(CAMERAS_FILE), &self.cameras)?;
        for (k, img) in self.images.iter().enumerate() {
            crate::io::write_ppm(&images.join(view_file_name(k)), img)?;
        }
        crate::io::write_point_cloud(&dir.join(REFERENCE_FILE), &self.reference, None)?;
        crate::io::write_gaussians(&dir.join(INITIAL_FILE), &self.initial)?;
        Ok(())
    }
}

impl SceneFiles {
    pub fn load(dir: &Path) -> Result<Self, SceneError> {
        let spec = SceneSpec::from_key_values(&KeyValues::load(&dir.join(SPEC_FILE))?)?;
        let cameras = crate::io::read_cameras(&dir.join(CAMERAS_FILE))?;
        let images = (0..cameras.len())
            .map(|k| crate::io::read_ppm(&dir.join(IMAGES_DIR).join(view_file_name(k))))
            .collect::<Result<Vec<_>, _>>()?;
        for (k, (c, im)) in cameras.iter().zip(&images).enumerate() {
            if (c.width, c.height) != (im.width, im.height) {
                return Err(SceneError::Invalid(format!("image {k} does not match camera {k}")));
            }
        }
        Ok(SceneFiles {
            spec,
            cameras,
            images,
            reference: crate::io::read_point_cloud(&dir.join(REFERENCE_FILE))?,
            initial: crate::io::read_gaussians(&dir.join(INITIAL_FILE))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: SceneKind) -> SceneSpec {
        SceneSpec { kind, width: 24, height: 20, reference_samples: 500, init_points: 200, ..Default::default() }
    }

    #[test]
    fn spec_key_values_round_trip() {
        let mut s = small(SceneKind::ManhattanCorner);
        s.background = Vec3::new(0.1, 0.2, 0.3);
        let kv = s.to_key_values();
        assert_eq!(SceneSpec::from_key_values(&kv).unwrap(), s);
        let reparsed = KeyValues::parse(&kv.to_text()).unwrap();
        assert_eq!(SceneSpec::from_key_values(&reparsed).unwrap().to_key_values(), kv);
        let mut bad = kv.clone();
        bad.set("camera_count", 2);
        assert!(SceneSpec::from_key_values(&bad).is_err());
    }

    #[test]
    fn quad_intersection_and_texture() {
        let q = &scene_quads(&small(SceneKind::Plane))[0];
        let hit = q.intersect(&Vec3::new(1.0, 2.0, 10.0), &-Vec3::z()).unwrap();
        assert!((hit.0 - 10.0).abs() < 1e-12);
        assert!(q.intersect(&Vec3::new(1.0, 2.0, -10.0), &Vec3::z()).is_none());
        assert!(q.intersect(&Vec3::new(80.0, 2.0, 10.0), &-Vec3::z()).is_none());
        assert_ne!(q.color_at(0.01, 0.01), q.color_at(0.01, 0.2));
    }

    #[test]
    fn textured_cube_scene() {
        let s = synth_scene(&small(SceneKind::TexturedCube)).unwrap();
        assert_eq!(s.images.len(), 8);
        assert!(s.images.iter().all(|im| im.data.iter().all(|v| (0.0..=1.0).contains(v))));
        // The bottom face is never seen from above.
        assert!(s.reference.points.iter().all(|p| p.z > -50.0 + 1e-9));
        assert_eq!(s.initial.len(), 200);
        // The cube is centered in every view.
        for im in &s.images {
            assert_ne!(im.pixel(12, 10), Vec3::zeros());
            assert_eq!(im.pixel(0, 0), Vec3::zeros());
        }
    }

    #[test]
    fn noiseless_plane_init_is_on_surface() {
        let mut spec = small(SceneKind::Plane);
        spec.init_noise = 0.0;
        let s = synth_scene(&spec).unwrap();
        assert!(s.initial.means.iter().all(|m| m.z == 0.0));
    }

    #[test]
    fn directory_round_trip() {
        let s = synth_scene(&small(SceneKind::Plane)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.write_to(dir.path()).unwrap();
        let f = SceneFiles::load(dir.path()).unwrap();
        assert_eq!(f.spec, s.spec);
        assert_eq!(f.cameras, s.cameras);
        assert_eq!(f.reference, s.reference);
        assert_eq!(f.initial, s.initial);
        for (a, b) in f.images.iter().zip(&s.images) {
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-12));
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let spec = small(SceneKind::Box);
        let (a, b) = (synth_scene(&spec).unwrap(), synth_scene(&spec).unwrap());
        assert_eq!(a.images, b.images);
        assert_eq!(a.reference, b.reference);
        assert_eq!(a.initial, b.initial);
    }
}
