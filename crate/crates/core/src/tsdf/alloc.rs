use nalgebra::Vector3;
use rayon::prelude::*;

use super::{Allocation, Frame, TsdfConfig, VoxelBlockGrid};
use crate::error::Result;
use crate::hashmap::{SpatialHashMap, ValueSchema};

/// Blocks whose half-open extent the segment `a → b` passes through, in
/// traversal order.
pub(crate) fn blocks_on_segment(a: Vector3<f64>, b: Vector3<f64>, block: f64, out: &mut Vec<[i32; 3]>) {
    let dir = b - a;
    let mut cur = [0i64; 3];
    let end: [i64; 3] = [0, 1, 2].map(|d| (b[d] / block).floor() as i64);
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for d in 0..3 {
        cur[d] = (a[d] / block).floor() as i64;
        if dir[d] > 0.0 {
            step[d] = 1;
            t_max[d] = ((cur[d] + 1) as f64 * block - a[d]) / dir[d];
            t_delta[d] = block / dir[d];
        } else if dir[d] < 0.0 {
            step[d] = -1;
            t_max[d] = (cur[d] as f64 * block - a[d]) / dir[d];
            t_delta[d] = -block / dir[d];
        }
    }
    // Bounded by the number of boundaries the segment can cross.
    let limit = 3 + (0..3).map(|d| (end[d] - cur[d]).unsigned_abs()).sum::<u64>();
    for _ in 0..=limit {
        out.push(cur.map(|c| c as i32));
        if cur == end {
            break;
        }
        let d = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[d] > 1.0 {
            break;
        }
        cur[d] += step[d];
        t_max[d] += t_delta[d];
    }
}

/// Block coordinates one depth pixel asks for, before deduplication.
pub(crate) fn pixel_candidates(
    config: &TsdfConfig,
    frame: &Frame,
    u: usize,
    v: usize,
    out: &mut Vec<[i32; 3]>,
) {
    let depth = frame.depth.get(u, v) as f64;
    if depth <= 0.0 || depth < config.depth_min || depth > config.depth_max || !depth.is_finite() {
        return;
    }
    let ray = frame.intrinsics.ray(u as f64, v as f64);
    let origin = frame.pose.translation.vector;
    let dir = frame.pose.rotation * ray;
    let surface = origin + dir * depth;
    match config.allocation {
        Allocation::Ray => {
            let unit = dir / dir.norm();
            let mu = config.truncation;
            blocks_on_segment(surface - unit * mu, surface + unit * mu, config.block_size(), out);
        }
        Allocation::Neighborhood => {
            let c = config.block_of([surface.x, surface.y, surface.z]);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        out.push([c[0] + dx, c[1] + dy, c[2] + dz]);
                    }
                }
            }
        }
    }
}

impl VoxelBlockGrid {
    /// Allocates the blocks observed by `frame` and rebuilds the local map
    /// (block coordinate to global buffer index). Returns the global
    /// indices of this frame's blocks.
    pub fn allocate_blocks(&mut self, frame: &Frame) -> Result<Vec<u32>> {
        frame.validate()?;
        let config = self.config;
        let w = frame.intrinsics.width;
        let candidates: Vec<[i32; 3]> = (0..frame.intrinsics.height)
            .into_par_iter()
            .flat_map_iter(|v| {
                let mut out = Vec::new();
                for u in 0..w {
                    pixel_candidates(&config, frame, u, v, &mut out);
                }
                out
            })
            .collect();

        let mut local =
            SpatialHashMap::new(candidates.len().max(1), 3, &[ValueSchema::of::<u32>(1)], config.backend)?;
        local.activate(bytemuck::cast_slice(&candidates))?;
        let mut unique = local.active_indices();
        unique.sort_unstable();
        let coords = local.gather_keys(&unique);
        let global = self.activate_blocks(bytemuck::cast_slice(&coords))?;
        {
            let mut rows = local.values_mut::<u32>(0)?;
            for (&l, &g) in unique.iter().zip(&global) {
                rows.row_mut(l as usize)[0] = g;
            }
        }
        self.local = Some(local);
        Ok(global)
    }
}
