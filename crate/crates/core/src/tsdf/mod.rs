//! Spatially hashed TSDF volume.
//!
//! The global map stores one voxel block per block coordinate. Its first
//! value buffer is `ℓ³ × 2` f32, interleaved `(d, w)` per voxel, voxel
//! `(x, y, z)` at linear position `(z·ℓ + y)·ℓ + x`. Distances are metric
//! and clamped to `[-μ, μ]`; they are not normalized. When color is
//! enabled a second buffer holds `ℓ³ × 3` f32 RGB means in `[0, 255]`.
//!
//! Voxel `v` of block `b` samples the world point `((b·ℓ + v) + 0.5)·s`.

mod alloc;
mod integrate;
mod mc_table;
mod mesh;
mod raycast;
pub mod synthetic;

use std::io::{Read, Write};

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};

use crate::error::{invalid, Error, Result};
use crate::hashmap::{read_snapshot, write_snapshot, Backend, SpatialHashMap, ValueSchema};

pub use integrate::fuse;
pub use mesh::TriangleMesh;
pub use raycast::{RaycastMode, RaycastResult};

/// Camera-to-world rigid transform.
pub type Pose = Isometry3<f64>;

/// Builds a pose from a row-major 4×4 matrix. The rotation block must be
/// orthonormal with determinant +1 within `1e-6`.
pub fn pose_from_matrix(m: &[[f64; 4]; 4]) -> Result<Pose> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return invalid("pose contains non-finite entries");
    }
    let r = Matrix3::new(
        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
    );
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if err > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
        return invalid(format!("pose rotation is not orthonormal (error {err:.2e})"));
    }
    if m[3] != [0.0, 0.0, 0.0, 1.0] {
        return invalid("pose bottom row must be 0 0 0 1");
    }
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    Ok(Isometry3::from_parts(Translation3::new(m[0][3], m[1][3], m[2][3]), rot))
}

pub fn pose_to_matrix(p: &Pose) -> [[f64; 4]; 4] {
    let h = p.to_homogeneous();
    let mut out = [[0.0; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = h[(r, c)];
        }
    }
    out
}

/// Pinhole intrinsics. Pixel `(u, v)` has its center at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return invalid("intrinsics need fx, fy > 0 and finite principal point");
        }
        if self.width == 0 || self.height == 0 {
            return invalid("image size must be positive");
        }
        Ok(())
    }

    /// Camera-frame point to continuous pixel coordinates.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Nearest pixel of a camera-frame point in front of the camera.
    #[inline]
    pub fn pixel_of(&self, p: &Vector3<f64>) -> Option<(usize, usize)> {
        if p.z <= 0.0 {
            return None;
        }
        let (u, v) = self.project(p);
        let (u, v) = (u.round(), v.round());
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }

    /// Camera-frame ray through pixel `(u, v)`, scaled to unit z.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Depth image in meters, row-major; zero marks invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub depth: DepthImage,
    /// Optional RGB image with the depth image's layout.
    pub color: Option<Vec<[u8; 3]>>,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

impl Frame {
    pub fn new(depth: DepthImage, intrinsics: Intrinsics, pose: Pose) -> Result<Self> {
        let f = Self { depth, color: None, intrinsics, pose };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if self.depth.width != w || self.depth.height != h || self.depth.data.len() != w * h {
            return invalid(format!(
                "depth image is {}x{}, intrinsics say {w}x{h}",
                self.depth.width, self.depth.height
            ));
        }
        if self.color.as_ref().is_some_and(|c| c.len() != w * h) {
            return invalid("color image size does not match depth");
        }
        Ok(())
    }
}

/// Which blocks a depth pixel allocates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocation {
    /// Blocks crossed by the camera ray within `±μ` of the measured surface.
    Ray,
    /// The surface block and its 26 neighbors.
    Neighborhood,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsdfConfig {
    /// Voxel edge length `s` in meters.
    pub voxel_size: f64,
    /// Voxels per block edge `ℓ`.
    pub block_resolution: usize,
    /// Truncation distance `μ` in meters.
    pub truncation: f64,
    /// Weight added by every observation.
    pub frame_weight: f32,
    pub max_weight: f32,
    pub depth_min: f64,
    pub depth_max: f64,
    pub max_steps: usize,
    /// Measure `r` as distance along the ray instead of camera z.
    pub ray_distance: bool,
    pub allocation: Allocation,
    pub color: bool,
    pub backend: Backend,
}

impl TsdfConfig {
    pub fn fast() -> Self {
        Self {
            voxel_size: 0.0058,
            block_resolution: 8,
            truncation: 0.04,
            frame_weight: 1.0,
            max_weight: 64.0,
            depth_min: 0.2,
            depth_max: 3.0,
            max_steps: 256,
            ray_distance: false,
            allocation: Allocation::Ray,
            color: false,
            backend: Backend::Generic,
        }
    }

    pub fn complete() -> Self {
        Self { block_resolution: 16, allocation: Allocation::Neighborhood, color: true, ..Self::fast() }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.voxel_size;
        if !(s > 0.0 && s.is_finite()) {
            return invalid(format!("voxel size must be positive, got {s}"));
        }
        if !matches!(self.block_resolution, 8 | 16) {
            return invalid(format!("block resolution must be 8 or 16, got {}", self.block_resolution));
        }
        if !(self.truncation > s && self.truncation.is_finite()) {
            return invalid(format!("truncation {} must exceed the voxel size {s}", self.truncation));
        }
        if !(self.frame_weight > 0.0 && self.max_weight >= self.frame_weight) {
            return invalid("need 0 < frame weight <= max weight");
        }
        if !(self.depth_min >= 0.0 && self.depth_min < self.depth_max) {
            return invalid(format!("bad depth range [{}, {}]", self.depth_min, self.depth_max));
        }
        if self.max_steps == 0 {
            return invalid("max steps must be positive");
        }
        Ok(())
    }

    #[inline]
    pub fn block_size(&self) -> f64 {
        self.voxel_size * self.block_resolution as f64
    }

    #[inline]
    pub fn voxels_per_block(&self) -> usize {
        self.block_resolution.pow(3)
    }

    /// Block containing world point `x`.
    pub fn block_of(&self, x: [f64; 3]) -> [i32; 3] {
        let b = self.block_size();
        x.map(|c| (c / b).floor() as i32)
    }

    /// Voxel of `x` inside `block`, each component in `[0, ℓ)` when
    /// `block == block_of(x)`.
    pub fn voxel_of(&self, x: [f64; 3], block: [i32; 3]) -> [usize; 3] {
        let (s, b) = (self.voxel_size, self.block_size());
        let l = self.block_resolution as i64;
        let mut out = [0usize; 3];
        for d in 0..3 {
            let v = ((x[d] - block[d] as f64 * b) / s).floor() as i64;
            // Rounding at block faces can land one voxel outside.
            out[d] = v.clamp(0, l - 1) as usize;
        }
        out
    }

    /// Global voxel coordinate of `x`.
    #[inline]
    pub fn global_voxel_of(&self, x: &Vector3<f64>) -> [i64; 3] {
        let s = self.voxel_size;
        [(x.x / s).floor() as i64, (x.y / s).floor() as i64, (x.z / s).floor() as i64]
    }

    /// World position of a global voxel's sample point.
    #[inline]
    pub fn voxel_center(&self, g: [i64; 3]) -> Point3<f64> {
        let s = self.voxel_size;
        Point3::new((g[0] as f64 + 0.5) * s, (g[1] as f64 + 0.5) * s, (g[2] as f64 + 0.5) * s)
    }

    fn schemas(&self) -> Vec<ValueSchema> {
        let n = self.voxels_per_block();
        let mut s = vec![ValueSchema::of::<f32>(n * 2)];
        if self.color {
            s.push(ValueSchema::of::<f32>(n * 3));
        }
        s
    }
}

/// Splits a global voxel coordinate into block and in-block voxel.
#[inline]
pub(crate) fn split_voxel(g: [i64; 3], l: usize) -> ([i32; 3], [usize; 3]) {
    let l = l as i64;
    let b = g.map(|c| c.div_euclid(l) as i32);
    let v = g.map(|c| c.rem_euclid(l) as usize);
    (b, v)
}

#[inline]
pub(crate) fn voxel_linear(v: [usize; 3], l: usize) -> usize {
    (v[2] * l + v[1]) * l + v[0]
}

/// Sparse voxel block volume with a per-frame local map.
#[derive(Debug)]
pub struct VoxelBlockGrid {
    config: TsdfConfig,
    global: SpatialHashMap,
    /// Block coordinate to global buffer index, rebuilt by each allocation.
    local: Option<SpatialHashMap>,
}

const TRAILER_MAGIC: [u8; 4] = *b"TSDF";
const TRAILER_VERSION: u32 = 1;

impl VoxelBlockGrid {
    /// An empty grid. `capacity` is the initial block count; the global map
    /// doubles as needed.
    pub fn new(config: TsdfConfig, capacity: usize) -> Result<Self> {
        config.validate()?;
        let global = SpatialHashMap::new(capacity.max(1), 3, &config.schemas(), config.backend)?;
        Ok(Self { config, global, local: None })
    }

    pub fn config(&self) -> &TsdfConfig {
        &self.config
    }

    pub fn global_map(&self) -> &SpatialHashMap {
        &self.global
    }

    pub fn local_map(&self) -> Option<&SpatialHashMap> {
        self.local.as_ref()
    }

    pub fn block_count(&self) -> usize {
        self.global.size()
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty()
    }

    /// Global buffer indices of all allocated blocks, ascending.
    pub fn active_blocks(&self) -> Vec<u32> {
        let mut a = self.global.active_indices();
        a.sort_unstable();
        a
    }

    pub fn block_coord(&self, index: u32) -> [i32; 3] {
        let k = self.global.key_rows().row(index as usize);
        [k[0], k[1], k[2]]
    }

    /// `(d, w)` pairs of one block.
    pub fn block_payload(&self, index: u32) -> &[f32] {
        self.global.values::<f32>(0).expect("tsdf buffer").row(index as usize)
    }

    pub fn block_payload_mut(&mut self, index: u32) -> &mut [f32] {
        self.global.values_mut::<f32>(0).expect("tsdf buffer").into_row_mut(index as usize)
    }

    pub fn block_color(&self, index: u32) -> Option<&[f32]> {
        if !self.config.color {
            return None;
        }
        Some(self.global.values::<f32>(1).expect("color buffer").row(index as usize))
    }

    /// `(d, w)` at a global voxel coordinate through the global map.
    pub fn voxel(&self, g: [i64; 3]) -> Option<(f32, f32)> {
        let l = self.config.block_resolution;
        let (b, v) = split_voxel(g, l);
        let i = self.global.find_one(&b)?;
        let p = self.block_payload(i);
        let k = voxel_linear(v, l) * 2;
        Some((p[k], p[k + 1]))
    }

    /// Allocates blocks (if missing) for explicit block coordinates and
    /// returns their global indices. New blocks start at `(d, w) = (0, 0)`.
    pub fn activate_blocks(&mut self, coords: &[[i32; 3]]) -> Result<Vec<u32>> {
        let flat: &[i32] = bytemuck::cast_slice(coords);
        let before = self.global.find(flat)?;
        let r = self.global.activate(flat)?;
        let fresh: Vec<u32> = r
            .indices
            .iter()
            .zip(&before.masks)
            .filter(|(_, &was)| !was)
            .map(|(&i, _)| i)
            .collect();
        self.clear_blocks(&fresh);
        Ok(r.indices)
    }

    fn clear_blocks(&mut self, indices: &[u32]) {
        if indices.is_empty() {
            return;
        }
        for s in 0..self.global.value_schemas().len() {
            let mut rows = self.global.value_bytes_mut(s);
            for &i in indices {
                rows.row_mut(i as usize).fill(0);
            }
        }
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        write_snapshot(&self.global, &mut w)?;
        let c = &self.config;
        w.write_all(&TRAILER_MAGIC)?;
        w.write_all(&TRAILER_VERSION.to_le_bytes())?;
        for v in [c.voxel_size, c.truncation, c.depth_min, c.depth_max] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [c.frame_weight, c.max_weight] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [c.block_resolution as u32, c.max_steps as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let flags = c.ray_distance as u8
            | ((c.allocation == Allocation::Neighborhood) as u8) << 1
            | (c.color as u8) << 2
            | ((c.backend == Backend::IntegerDelegate) as u8) << 3;
        w.write_all(&[flags])?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let global = read_snapshot(&mut r, Backend::Generic)?;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != TRAILER_MAGIC {
            return Err(Error::Format("snapshot has no volume trailer".into()));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b)?;
        if u32::from_le_bytes(u32b) != TRAILER_VERSION {
            return Err(Error::Format("unsupported volume trailer version".into()));
        }
        let mut f64s = [0.0f64; 4];
        for v in &mut f64s {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let mut f32s = [0.0f32; 2];
        for v in &mut f32s {
            r.read_exact(&mut u32b)?;
            *v = f32::from_le_bytes(u32b);
        }
        let mut u32s = [0u32; 2];
        for v in &mut u32s {
            r.read_exact(&mut u32b)?;
            *v = u32::from_le_bytes(u32b);
        }
        let mut flags = [0u8; 1];
        r.read_exact(&mut flags)?;
        let flags = flags[0];
        let config = TsdfConfig {
            voxel_size: f64s[0],
            truncation: f64s[1],
            depth_min: f64s[2],
            depth_max: f64s[3],
            frame_weight: f32s[0],
            max_weight: f32s[1],
            block_resolution: u32s[0] as usize,
            max_steps: u32s[1] as usize,
            ray_distance: flags & 1 != 0,
            allocation: if flags & 2 != 0 { Allocation::Neighborhood } else { Allocation::Ray },
            color: flags & 4 != 0,
            backend: if flags & 8 != 0 { Backend::IntegerDelegate } else { Backend::Generic },
        };
        config.validate().map_err(|e| Error::Format(format!("volume trailer: {e}")))?;
        if global.arity() != 3 || global.value_schemas() != config.schemas() {
            return Err(Error::Format("volume payload layout does not match its config".into()));
        }
        let global = if config.backend == Backend::Generic {
            global
        } else {
            let mut bytes = Vec::new();
            write_snapshot(&global, &mut bytes)?;
            read_snapshot(bytes.as_slice(), config.backend)?
        };
        Ok(Self { config, global, local: None })
    }
}
