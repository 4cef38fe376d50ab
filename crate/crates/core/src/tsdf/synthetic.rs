//! Analytic scenes: rendered depth frames and directly filled volumes.

use nalgebra::{Translation3, UnitQuaternion, Vector3};

use super::{DepthImage, Frame, Intrinsics, Pose, VoxelBlockGrid};
use crate::error::{invalid, Result};

/// A 320×240 pinhole camera with a ~56° horizontal field of view.
pub fn default_intrinsics() -> Intrinsics {
    Intrinsics { fx: 300.0, fy: 300.0, cx: 159.5, cy: 119.5, width: 320, height: 240 }
}

fn render(intr: &Intrinsics, pose: &Pose, hit: impl Fn(Vector3<f64>, Vector3<f64>) -> Option<f64>) -> DepthImage {
    let mut img = DepthImage::new(intr.width, intr.height);
    let origin = pose.translation.vector;
    for v in 0..intr.height {
        for u in 0..intr.width {
            let dir = pose.rotation * intr.ray(u as f64, v as f64);
            if let Some(t) = hit(origin, dir) {
                img.data[v * intr.width + u] = t as f32;
            }
        }
    }
    img
}

/// Camera-z depth of the plane `z = plane_z` (world) seen from `pose`.
pub fn render_plane(intr: &Intrinsics, pose: &Pose, plane_z: f64) -> DepthImage {
    render(intr, pose, |o, d| {
        let t = (plane_z - o.z) / d.z;
        (d.z.abs() > 1e-12 && t > 0.0).then_some(t)
    })
}

/// Camera-z depth of a sphere seen from `pose`.
pub fn render_sphere(intr: &Intrinsics, pose: &Pose, center: [f64; 3], radius: f64) -> DepthImage {
    let c = Vector3::from(center);
    render(intr, pose, |o, d| {
        // |o + t d - c|^2 = r^2
        let oc = o - c;
        let a = d.dot(&d);
        let b = 2.0 * d.dot(&oc);
        let disc = b * b - 4.0 * a * (oc.dot(&oc) - radius * radius);
        if disc < 0.0 {
            return None;
        }
        let t = (-b - disc.sqrt()) / (2.0 * a);
        (t > 0.0).then_some(t)
    })
}

/// Slightly varying translation-only poses looking down +z.
pub fn jitter_poses(n: usize) -> Vec<Pose> {
    (0..n)
        .map(|j| {
            let a = j as f64 * 0.7;
            Pose::from_parts(
                Translation3::new(0.012 * a.sin() + 0.0013, 0.009 * a.cos() - 0.0021, 0.01 * (a * 0.5).sin()),
                UnitQuaternion::identity(),
            )
        })
        .collect()
}

/// `n` frames of the plane `z = plane_z` with the default camera.
pub fn plane_frames(n: usize, plane_z: f64) -> Vec<Frame> {
    let intr = default_intrinsics();
    jitter_poses(n)
        .into_iter()
        .map(|pose| Frame { depth: render_plane(&intr, &pose, plane_z), color: None, intrinsics: intr, pose })
        .collect()
}

/// Writes `d(x) = clamp(f(x), -μ, μ)` with weight 1 into every voxel of
/// the given blocks, allocating them first.
pub fn fill_blocks(grid: &mut VoxelBlockGrid, blocks: &[[i32; 3]], f: impl Fn([f64; 3]) -> f64) -> Result<()> {
    let indices = grid.activate_blocks(blocks)?;
    let c = *grid.config();
    let l = c.block_resolution as i64;
    let mu = c.truncation;
    for (&i, b) in indices.iter().zip(blocks) {
        let payload = grid.block_payload_mut(i);
        for z in 0..l {
            for y in 0..l {
                for x in 0..l {
                    let p = c.voxel_center([b[0] as i64 * l + x, b[1] as i64 * l + y, b[2] as i64 * l + z]);
                    let k = (((z * l + y) * l + x) * 2) as usize;
                    payload[k] = f([p.x, p.y, p.z]).clamp(-mu, mu) as f32;
                    payload[k + 1] = 1.0;
                }
            }
        }
    }
    Ok(())
}

/// Blocks within `margin` of the zero set of a field, found by scanning a
/// bounding box of blocks.
fn band_blocks(
    grid: &VoxelBlockGrid,
    lo: [f64; 3],
    hi: [f64; 3],
    f: &impl Fn([f64; 3]) -> f64,
) -> Vec<[i32; 3]> {
    let c = grid.config();
    let size = c.block_size();
    let half_diag = size * 3f64.sqrt() / 2.0;
    let (b0, b1) = (c.block_of(lo), c.block_of(hi));
    let mut out = Vec::new();
    for z in b0[2]..=b1[2] {
        for y in b0[1]..=b1[1] {
            for x in b0[0]..=b1[0] {
                let center = [(x as f64 + 0.5) * size, (y as f64 + 0.5) * size, (z as f64 + 0.5) * size];
                if f(center).abs() <= c.truncation + half_diag {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Fills the truncation band of a sphere analytically.
pub fn fill_sphere(grid: &mut VoxelBlockGrid, center: [f64; 3], radius: f64) -> Result<()> {
    if !(radius > 0.0) {
        return invalid(format!("sphere radius must be positive, got {radius}"));
    }
    let f = |p: [f64; 3]| {
        ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt() - radius
    };
    let pad = radius + grid.config().truncation + grid.config().block_size();
    let blocks = band_blocks(grid, center.map(|c| c - pad), center.map(|c| c + pad), &f);
    fill_blocks(grid, &blocks, f)
}

/// Fills the band of the plane `z = z0` over `|x|, |y| <= half_extent`.
pub fn fill_plane(grid: &mut VoxelBlockGrid, z0: f64, half_extent: f64) -> Result<()> {
    let pad = grid.config().truncation + grid.config().block_size();
    let f = |p: [f64; 3]| p[2] - z0;
    let blocks = band_blocks(grid, [-half_extent, -half_extent, z0 - pad], [half_extent, half_extent, z0 + pad], &f);
    fill_blocks(grid, &blocks, f)
}
