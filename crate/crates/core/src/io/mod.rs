//! File formats: PLY clouds and Gaussian sets, PPM images, key-value configs
//! and camera lists.

mod config;
pub mod ply;
pub mod ppm;

pub use config::KeyValues;

use crate::gaussians::{Gaussian, GaussianSet, Quat};
use crate::linalg3::Vec3;
use crate::neighborhood::PointCloud;
use crate::renderer::{Camera, ImageBuffer};
use nalgebra::Matrix3;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
}

impl IoError {
    fn at(path: &Path, e: IoError) -> IoError {
        match e {
            IoError::Io(io) => IoError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
            IoError::Format(m) => IoError::Format(format!("{}: {m}", path.display())),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|e| IoError::at(path, e.into()))
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|e| IoError::at(path, e.into()))
}

pub const GAUSSIAN_PROPERTIES: [&str; 14] = [
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity", "red", "green", "blue",
];

/// Reads the `x y z` columns of any PLY file.
pub fn read_point_cloud(path: &Path) -> Result<PointCloud, IoError> {
    let v = ply::read_vertices(open(path)?).map_err(|e| IoError::at(path, e))?;
    let cols = [v.require("x"), v.require("y"), v.require("z")];
    let [x, y, z] = cols.map(|c| c.map_err(|e| IoError::at(path, e)));
    let (x, y, z) = (x?, y?, z?);
    let points: Vec<Vec3> = v.rows.iter().map(|r| Vec3::new(r[x], r[y], r[z])).collect();
    if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(IoError::at(path, IoError::Format("non-finite coordinate".into())));
    }
    Ok(PointCloud::new(points))
}

/// Writes a cloud, optionally with one extra scalar property per point.
pub fn write_point_cloud(path: &Path, cloud: &PointCloud, extra: Option<(&str, &[f64])>) -> Result<(), IoError> {
    let mut names = vec!["x", "y", "z"];
    if let Some((name, values)) = extra {
        assert_eq!(values.len(), cloud.len(), "extra property length mismatch");
        names.push(name);
    }
    let rows: Vec<Vec<f64>> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = vec![p.x, p.y, p.z];
            if let Some((_, values)) = extra {
                r.push(values[i]);
            }
            r
        })
        .collect();
    ply::write_vertices(create(path)?, &names, &rows).map_err(|e| IoError::at(path, e))
}

/// Gaussian PLY: positions, log-scales, quaternion (w, x, y, z), opacity
/// logit and linear RGB color, all as doubles.
pub fn write_gaussians(path: &Path, set: &GaussianSet) -> Result<(), IoError> {
    let rows: Vec<Vec<f64>> = (0..set.len())
        .map(|i| {
            let g = set.get(i);
            let mut r = Vec::with_capacity(14);
            r.extend(g.mean.iter());
            r.extend(g.log_scale.iter());
            r.extend(g.rotation.iter());
            r.push(g.opacity_logit);
            r.extend(g.color.iter());
            r
        })
        .collect();
    ply::write_vertices(create(path)?, &GAUSSIAN_PROPERTIES, &rows).map_err(|e| IoError::at(path, e))
}

pub fn read_gaussians(path: &Path) -> Result<GaussianSet, IoError> {
    let v = ply::read_vertices(open(path)?).map_err(|e| IoError::at(path, e))?;
    let mut cols = [0usize; 14];
    for (c, name) in cols.iter_mut().zip(GAUSSIAN_PROPERTIES) {
        *c = v.require(name).map_err(|e| IoError::at(path, e))?;
    }
    let mut set = GaussianSet::new();
    for (k, r) in v.rows.iter().enumerate() {
        let f = |j: usize| r[cols[j]];
        let g = Gaussian {
            mean: Vec3::new(f(0), f(1), f(2)),
            log_scale: Vec3::new(f(3), f(4), f(5)),
            rotation: Quat::new(f(6), f(7), f(8), f(9)),
            opacity_logit: f(10),
            color: Vec3::new(f(11), f(12), f(13)),
        };
        if !(0..14).all(|j| f(j).is_finite()) || g.rotation.norm() == 0.0 {
            return Err(IoError::at(path, IoError::Format(format!("invalid Gaussian at vertex {k}"))));
        }
        set.push(g);
    }
    Ok(set)
}

pub fn read_ppm(path: &Path) -> Result<ImageBuffer, IoError> {
    ppm::read_ppm(open(path)?).map_err(|e| IoError::at(path, e))
}

pub fn write_ppm(path: &Path, img: &ImageBuffer) -> Result<(), IoError> {
    ppm::write_ppm(create(path)?, img).map_err(|e| IoError::at(path, e))
}

/// Formats one camera as `width height fx fy cx cy r00 … r22 tx ty tz`.
pub fn format_camera(c: &Camera) -> String {
    let mut parts = vec![c.width.to_string(), c.height.to_string()];
    parts.extend([c.fx, c.fy, c.cx, c.cy].iter().map(f64::to_string));
    for r in 0..3 {
        for col in 0..3 {
            parts.push(c.rotation[(r, col)].to_string());
        }
    }
    parts.extend(c.translation.iter().map(f64::to_string));
    parts.join(" ")
}

/// Parses a camera list, one camera per line; `#` starts a comment.
pub fn parse_cameras(text: &str) -> Result<Vec<Camera>, IoError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| IoError::Format(format!("camera line {}: {m}", n + 1));
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 18 {
            return Err(err(format!("expected 18 values, found {}", t.len())));
        }
        let size = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad image size '{s}'")));
        let nums = t[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number '{s}'"))))
            .collect::<Result<Vec<f64>, _>>()?;
        let cam = Camera {
            width: size(t[0])?,
            height: size(t[1])?,
            fx: nums[0],
            fy: nums[1],
            cx: nums[2],
            cy: nums[3],
            rotation: Matrix3::from_row_slice(&nums[4..13]),
            translation: Vec3::new(nums[13], nums[14], nums[15]),
        };
        cam.validate().map_err(|e| err(e.to_string()))?;
        out.push(cam);
    }
    Ok(out)
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::at(path, e.into()))?;
    parse_cameras(&text).map_err(|e| IoError::at(path, e))
}

pub fn write_cameras(path: &Path, cams: &[Camera]) -> Result<(), IoError> {
    let mut w = create(path)?;
    writeln!(w, "# width height fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz")?;
    for c in cams {
        writeln!(w, "{}", format_camera(c))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_text_round_trip() {
        let cam = Camera::look_at(Vec3::new(1.0, -3.0, 2.0), Vec3::zeros(), Vec3::z(), 57.3, 40, 30).unwrap();
        let parsed = parse_cameras(&format!("# header\n{}\n\n", format_camera(&cam))).unwrap();
        assert_eq!(parsed, vec![cam]);
        assert!(parse_cameras("1 2 3").is_err());
    }
}
