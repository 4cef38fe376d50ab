//! RGB-D dataset layout and pipeline configuration.
//!
//! A dataset directory holds
//!
//! ```text
//! intrinsics.json   {"fx", "fy", "cx", "cy", "width", "height", "depth_scale"}
//! trajectory.txt    per frame: an index line, then 4 rows of a camera-to-world matrix
//! depth/000000.pgm  16-bit depth, one file per trajectory index
//! color/000000.ppm  optional 8-bit color
//! ```
//!
//! The pipeline config is `key = value` text; `#` starts a comment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::image::{read_color, read_depth, write_color, write_depth, DEFAULT_DEPTH_SCALE};
use crate::error::{format_err, invalid, Error, Result};
use crate::tsdf::{pose_from_matrix, pose_to_matrix, synthetic, Allocation, Frame, Intrinsics, Pose, TsdfConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_scale")]
    pub depth_scale: f64,
}

fn default_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

impl CameraFile {
    pub fn new(intr: &Intrinsics, depth_scale: f64) -> Self {
        Self {
            fx: intr.fx,
            fy: intr.fy,
            cx: intr.cx,
            cy: intr.cy,
            width: intr.width,
            height: intr.height,
            depth_scale,
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics { fx: self.fx, fy: self.fy, cx: self.cx, cy: self.cy, width: self.width, height: self.height }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::from(e).at(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::from(e).at(path))
}

pub fn parse_camera(text: &str) -> Result<CameraFile> {
    let cam: CameraFile = serde_json::from_str(text).map_err(|e| format_err(format!("bad intrinsics: {e}")))?;
    cam.intrinsics().validate()?;
    if !(cam.depth_scale > 0.0) {
        return invalid(format!("depth_scale must be positive, got {}", cam.depth_scale));
    }
    Ok(cam)
}

pub fn read_camera(path: &Path) -> Result<CameraFile> {
    parse_camera(&read_text(path)?).map_err(|e| e.at(path))
}

pub fn write_camera(path: &Path, cam: &CameraFile) -> Result<()> {
    let text = serde_json::to_string_pretty(cam).map_err(|e| format_err(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

/// Parses `(frame index, pose)` blocks. Extra tokens after the index are
/// ignored so metadata lines like `0 0 1` are accepted.
pub fn parse_trajectory(text: &str) -> Result<Vec<(usize, Pose)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut out = Vec::new();
    while let Some((no, head)) = lines.next() {
        let first = head.split_whitespace().next().unwrap_or("");
        let index: usize =
            first.parse().map_err(|_| format_err(format!("line {no}: expected a frame index, got '{first}'")))?;
        let mut m = [[0.0; 4]; 4];
        for row in &mut m {
            let (no, l) = lines.next().ok_or_else(|| format_err(format!("frame {index}: matrix is cut short")))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(f64::from_str)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format_err(format!("line {no}: {e}")))?;
            if vals.len() != 4 {
                return Err(format_err(format!("line {no}: expected 4 numbers, got {}", vals.len())));
            }
            row.copy_from_slice(&vals);
        }
        let pose = pose_from_matrix(&m).map_err(|e| format_err(format!("frame {index}: {e}")))?;
        out.push((index, pose));
    }
    Ok(out)
}

pub fn format_trajectory(poses: &[(usize, Pose)]) -> String {
    let mut s = String::new();
    for (i, p) in poses {
        let _ = writeln!(s, "{i}");
        for row in pose_to_matrix(p) {
            let _ = writeln!(s, "{} {} {} {}", row[0], row[1], row[2], row[3]);
        }
    }
    s
}

pub fn read_trajectory(path: &Path) -> Result<Vec<(usize, Pose)>> {
    parse_trajectory(&read_text(path)?).map_err(|e| e.at(path))
}

pub fn write_trajectory(path: &Path, poses: &[(usize, Pose)]) -> Result<()> {
    write_text(path, &format_trajectory(poses))
}

/// Fast mode uses ray allocation and 8³ blocks; complete mode uses
/// neighborhood allocation, 16³ blocks and color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Fast,
    Complete,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Mode::Fast),
            "complete" => Ok(Mode::Complete),
            _ => invalid(format!("unknown mode '{s}' (expected fast or complete)")),
        }
    }
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Fast => "fast",
            Mode::Complete => "complete",
        }
    }

    pub fn defaults(&self) -> TsdfConfig {
        match self {
            Mode::Fast => TsdfConfig::fast(),
            Mode::Complete => TsdfConfig::complete(),
        }
    }
}

/// Paths here are relative to the dataset root.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub intrinsics: PathBuf,
    pub trajectory: PathBuf,
    pub depth_dir: PathBuf,
    pub color_dir: Option<PathBuf>,
    pub output: PathBuf,
    /// Initial block capacity of the volume.
    pub capacity: usize,
    pub tsdf: TsdfConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_mode(Mode::Fast)
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::InvalidArgument(format!("bad value '{v}' for '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => invalid(format!("bad value '{v}' for '{key}' (expected true or false)")),
    }
}

impl PipelineConfig {
    pub fn for_mode(mode: Mode) -> Self {
        Self {
            mode,
            intrinsics: "intrinsics.json".into(),
            trajectory: "trajectory.txt".into(),
            depth_dir: "depth".into(),
            color_dir: None,
            output: "volume.bin".into(),
            capacity: 1 << 12,
            tsdf: mode.defaults(),
        }
    }

    /// Parses `key = value` lines. `mode` picks the defaults; every other key
    /// overrides one field regardless of order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_err(format!("line {}: expected key = value", no + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mode = match pairs.iter().rev().find(|(k, _)| k == "mode") {
            Some((_, v)) => v.parse()?,
            None => Mode::Fast,
        };
        let mut c = Self::for_mode(mode);
        for (k, v) in &pairs {
            let t = &mut c.tsdf;
            match k.as_str() {
                "mode" => {}
                "intrinsics" => c.intrinsics = v.into(),
                "trajectory" => c.trajectory = v.into(),
                "depth_dir" => c.depth_dir = v.into(),
                "color_dir" => c.color_dir = Some(v.into()),
                "output" => c.output = v.into(),
                "capacity" => c.capacity = parse_value(k, v)?,
                "voxel_size" => t.voxel_size = parse_value(k, v)?,
                "block_resolution" => t.block_resolution = parse_value(k, v)?,
                "truncation" => t.truncation = parse_value(k, v)?,
                "frame_weight" => t.frame_weight = parse_value(k, v)?,
                "max_weight" => t.max_weight = parse_value(k, v)?,
                "depth_min" => t.depth_min = parse_value(k, v)?,
                "depth_max" => t.depth_max = parse_value(k, v)?,
                "max_steps" => t.max_steps = parse_value(k, v)?,
                "ray_distance" => t.ray_distance = parse_bool(k, v)?,
                "color" => t.color = parse_bool(k, v)?,
                "backend" => t.backend = v.parse()?,
                "allocation" => {
                    t.allocation = match v.as_str() {
                        "ray" => Allocation::Ray,
                        "neighborhood" => Allocation::Neighborhood,
                        _ => return invalid(format!("bad value '{v}' for 'allocation' (expected ray or neighborhood)")),
                    }
                }
                _ => return invalid(format!("unknown config key '{k}'")),
            }
        }
        c.tsdf.validate()?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|e| e.at(path))
    }

    pub fn to_text(&self) -> String {
        let t = &self.tsdf;
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mode", &self.mode.name());
        kv("intrinsics", &self.intrinsics.display());
        kv("trajectory", &self.trajectory.display());
        kv("depth_dir", &self.depth_dir.display());
        if let Some(c) = &self.color_dir {
            kv("color_dir", &c.display());
        }
        kv("output", &self.output.display());
        kv("capacity", &self.capacity);
        kv("voxel_size", &t.voxel_size);
        kv("block_resolution", &t.block_resolution);
        kv("truncation", &t.truncation);
        kv("frame_weight", &t.frame_weight);
        kv("max_weight", &t.max_weight);
        kv("depth_min", &t.depth_min);
        kv("depth_max", &t.depth_max);
        kv("max_steps", &t.max_steps);
        kv("ray_distance", &t.ray_distance);
        kv("color", &t.color);
        kv("backend", &t.backend.name());
        kv(
            "allocation",
            &match t.allocation {
                Allocation::Ray => "ray",
                Allocation::Neighborhood => "neighborhood",
            },
        );
        s
    }
}

pub fn depth_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:06}.pgm"))
}

pub fn color_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:06}.ppm"))
}

/// A dataset opened against a root directory. Frames load lazily.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub camera: CameraFile,
    pub poses: Vec<(usize, Pose)>,
    depth_dir: PathBuf,
    color_dir: Option<PathBuf>,
}

impl Dataset {
    pub fn open(root: &Path, config: &PipelineConfig) -> Result<Self> {
        let camera = read_camera(&root.join(&config.intrinsics))?;
        let poses = read_trajectory(&root.join(&config.trajectory))?;
        let depth_dir = root.join(&config.depth_dir);
        if !depth_dir.is_dir() {
            return Err(format_err("depth directory not found").at(&depth_dir));
        }
        Ok(Self { camera, poses, depth_dir, color_dir: config.color_dir.as_ref().map(|c| root.join(c)) })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// The `k`-th frame of the trajectory.
    pub fn frame(&self, k: usize) -> Result<Frame> {
        let (index, pose) = self.poses[k];
        let intr = self.camera.intrinsics();
        let path = depth_path(&self.depth_dir, index);
        let depth = read_depth(&path, self.camera.depth_scale)?;
        let mut frame = Frame::new(depth, intr, pose).map_err(|e| e.at(&path))?;
        if let Some(dir) = &self.color_dir {
            let path = color_path(dir, index);
            let (w, h, rgb) = read_color(&path)?;
            if (w, h) != (intr.width, intr.height) {
                return Err(format_err(format!("color image is {w}x{h}, expected {}x{}", intr.width, intr.height))
                    .at(&path));
            }
            frame.color = Some(rgb);
        }
        Ok(frame)
    }
}

/// Built-in scenes for self-contained runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scene {
    /// The plane `z = 1` seen head-on.
    Plane,
    /// A sphere of radius 0.5 centered at `(0, 0, 1.5)`.
    Sphere,
}

impl FromStr for Scene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(Scene::Plane),
            "sphere" => Ok(Scene::Sphere),
            _ => invalid(format!("unknown scene '{s}' (expected plane or sphere)")),
        }
    }
}

pub const PLANE_Z: f64 = 1.0;
pub const SPHERE_CENTER: [f64; 3] = [0.0, 0.0, 1.5];
pub const SPHERE_RADIUS: f64 = 0.5;

/// Rendered frames of a scene from slightly jittered poses.
pub fn scene_frames(scene: Scene, n: usize) -> Vec<Frame> {
    let intr = synthetic::default_intrinsics();
    synthetic::jitter_poses(n)
        .into_iter()
        .map(|pose| {
            let depth = match scene {
                Scene::Plane => synthetic::render_plane(&intr, &pose, PLANE_Z),
                Scene::Sphere => synthetic::render_sphere(&intr, &pose, SPHERE_CENTER, SPHERE_RADIUS),
            };
            // A simple gradient so color integration has something to average.
            let color = (0..intr.height)
                .flat_map(|v| (0..intr.width).map(move |u| [(u * 255 / intr.width) as u8, (v * 255 / intr.height) as u8, 128]))
                .collect();
            Frame { depth, color: Some(color), intrinsics: intr, pose }
        })
        .collect()
}

/// Writes a synthetic dataset with `n` frames plus a `config.txt` under
/// `root`, returning the config.
pub fn write_synthetic(root: &Path, scene: Scene, n: usize, mode: Mode) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::for_mode(mode);
    config.color_dir = Some("color".into());
    let depth_dir = root.join(&config.depth_dir);
    let color_dir = root.join("color");
    for d in [&depth_dir, &color_dir] {
        fs::create_dir_all(d).map_err(|e| Error::from(e).at(d))?;
    }
    let frames = scene_frames(scene, n);
    let intr = synthetic::default_intrinsics();
    write_camera(&root.join(&config.intrinsics), &CameraFile::new(&intr, DEFAULT_DEPTH_SCALE))?;
    let poses: Vec<(usize, Pose)> = frames.iter().enumerate().map(|(i, f)| (i, f.pose)).collect();
    write_trajectory(&root.join(&config.trajectory), &poses)?;
    for (i, f) in frames.iter().enumerate() {
        write_depth(&depth_path(&depth_dir, i), &f.depth, DEFAULT_DEPTH_SCALE)?;
        write_color(&color_path(&color_dir, i), intr.width, intr.height, f.color.as_deref().unwrap_or(&[]))?;
    }
    write_text(&root.join("config.txt"), &config.to_text())?;
    Ok(config)
}
