use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::{split_voxel, voxel_linear, Intrinsics, Pose, VoxelBlockGrid};
use crate::error::{invalid, Result};
use crate::hashmap::{SpatialHashMap, ValueSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RaycastMode {
    /// Query every allocated block through the global map.
    #[default]
    Global,
    /// Query only the blocks of the current local map.
    Local,
}

impl std::str::FromStr for RaycastMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Self::Global),
            "local" => Ok(Self::Local),
            _ => invalid(format!("unknown raycast mode '{s}' (expected global or local)")),
        }
    }
}

/// Rendered depth (camera z, meters) with a hit mask, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RaycastResult {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
    pub mask: Vec<bool>,
}

impl RaycastResult {
    pub fn hits(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Block lookup that remembers the last block it resolved.
struct Lookup<'a> {
    grid: &'a VoxelBlockGrid,
    local: Option<&'a SpatialHashMap>,
    last: Option<([i32; 3], Option<u32>)>,
}

impl Lookup<'_> {
    fn block(&mut self, b: [i32; 3]) -> Option<u32> {
        if let Some((k, i)) = self.last {
            if k == b {
                return i;
            }
        }
        let i = match self.local {
            None => self.grid.global.find_one(&b),
            Some(local) => local
                .find_one(&b)
                .map(|j| local.values::<u32>(0).expect("local index buffer").row(j as usize)[0]),
        };
        self.last = Some((b, i));
        i
    }

    fn voxel(&mut self, g: [i64; 3]) -> Option<f32> {
        let l = self.grid.config.block_resolution;
        let (b, v) = split_voxel(g, l);
        let i = self.block(b)?;
        let p = self.grid.block_payload(i);
        let k = voxel_linear(v, l) * 2;
        (p[k + 1] > 0.0).then_some(p[k])
    }

    /// Trilinear distance at `p`; `None` unless all 8 surrounding voxels are
    /// observed.
    fn sample(&mut self, p: &Vector3<f64>) -> Option<f32> {
        let s = self.grid.config.voxel_size;
        let q = p / s - Vector3::repeat(0.5);
        let base = [q.x.floor(), q.y.floor(), q.z.floor()];
        let f = [q.x - base[0], q.y - base[1], q.z - base[2]];
        let base = base.map(|c| c as i64);
        let mut acc = 0.0f64;
        for c in 0..8 {
            let o = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let d = self.voxel([base[0] + o[0] as i64, base[1] + o[1] as i64, base[2] + o[2] as i64])?;
            let w: f64 = (0..3).map(|k| if o[k] == 1 { f[k] } else { 1.0 - f[k] }).product();
            acc += w * d as f64;
        }
        Some(acc as f32)
    }
}

impl VoxelBlockGrid {
    fn block_corners(&self, b: [i32; 3]) -> [Point3<f64>; 8] {
        let size = self.config.block_size();
        std::array::from_fn(|c| {
            Point3::new(
                (b[0] + (c & 1) as i32) as f64 * size,
                (b[1] + ((c >> 1) & 1) as i32) as f64 * size,
                (b[2] + ((c >> 2) & 1) as i32) as f64 * size,
            )
        })
    }

    /// Per-pixel `[near, far]` camera-z range covered by the given blocks.
    fn depth_bounds(&self, intr: &Intrinsics, pose: &Pose, blocks: &[[i32; 3]]) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (intr.width, intr.height);
        let mut near = vec![f64::INFINITY; w * h];
        let mut far = vec![f64::NEG_INFINITY; w * h];
        let to_cam = pose.inverse();
        let boxes: Vec<Option<(usize, usize, usize, usize, f64, f64)>> = blocks
            .par_iter()
            .map(|&b| {
                let mut umin = f64::INFINITY;
                let mut umax = f64::NEG_INFINITY;
                let mut vmin = f64::INFINITY;
                let mut vmax = f64::NEG_INFINITY;
                let mut zmin = f64::INFINITY;
                let mut zmax = f64::NEG_INFINITY;
                let mut behind = false;
                for p in self.block_corners(b) {
                    let c = to_cam * p;
                    zmin = zmin.min(c.z);
                    zmax = zmax.max(c.z);
                    if c.z <= 1e-6 {
                        behind = true;
                        continue;
                    }
                    let (u, v) = intr.project(&c.coords);
                    umin = umin.min(u);
                    umax = umax.max(u);
                    vmin = vmin.min(v);
                    vmax = vmax.max(v);
                }
                if zmax <= 1e-6 {
                    return None;
                }
                if behind {
                    // The block straddles the camera plane; it may cover any pixel.
                    return Some((0, w - 1, 0, h - 1, 0.0, zmax));
                }
                let clamp = |x: f64, n: usize| x.clamp(0.0, (n - 1) as f64) as usize;
                if umax < -0.5 || vmax < -0.5 || umin > w as f64 - 0.5 || vmin > h as f64 - 0.5 {
                    return None;
                }
                Some((clamp(umin.floor(), w), clamp(umax.ceil(), w), clamp(vmin.floor(), h), clamp(vmax.ceil(), h), zmin, zmax))
            })
            .collect();
        for (u0, u1, v0, v1, z0, z1) in boxes.into_iter().flatten() {
            for v in v0..=v1 {
                for u in u0..=u1 {
                    let i = v * w + u;
                    near[i] = near[i].min(z0);
                    far[i] = far[i].max(z1);
                }
            }
        }
        (near, far)
    }

    /// Renders depth from `pose` by marching rays through the volume.
    pub fn raycast(&self, intr: &Intrinsics, pose: &Pose, mode: RaycastMode) -> Result<RaycastResult> {
        intr.validate()?;
        let local = match mode {
            RaycastMode::Global => None,
            RaycastMode::Local => match &self.local {
                Some(l) => Some(l),
                None => return invalid("local raycast needs a local map; allocate a frame or select view blocks first"),
            },
        };
        let (w, h) = (intr.width, intr.height);
        let mut out = RaycastResult { width: w, height: h, depth: vec![0.0; w * h], mask: vec![false; w * h] };
        let blocks: Vec<[i32; 3]> = match local {
            None => self.active_blocks().iter().map(|&b| self.block_coord(b)).collect(),
            Some(l) => bytemuck::cast_slice::<i32, [i32; 3]>(&l.gather_keys(&l.active_indices())).to_vec(),
        };
        if blocks.is_empty() {
            return Ok(out);
        }
        let (near, far) = self.depth_bounds(intr, pose, &blocks);
        let c = &self.config;
        let (s, block) = (c.voxel_size, c.block_size());
        let origin = pose.translation.vector;
        out.depth
            .par_chunks_mut(w)
            .zip(out.mask.par_chunks_mut(w))
            .enumerate()
            .for_each(|(v, (depth_row, mask_row))| {
                let mut lookup = Lookup { grid: self, local, last: None };
                for u in 0..w {
                    let i = v * w + u;
                    if near[i] > far[i] {
                        continue;
                    }
                    let dir = pose.rotation * intr.ray(u as f64, v as f64);
                    let len = dir.norm();
                    let mut t = near[i].max(0.0);
                    let t_end = far[i];
                    let mut prev: Option<(f64, f32)> = None;
                    for _ in 0..c.max_steps {
                        if t > t_end {
                            break;
                        }
                        let p = origin + dir * t;
                        match lookup.sample(&p) {
                            None => {
                                prev = None;
                                t += block / len;
                            }
                            Some(d) => {
                                if let Some((tp, dp)) = prev {
                                    if dp > 0.0 && d <= 0.0 {
                                        let hit = tp + (t - tp) * (dp / (dp - d)) as f64;
                                        depth_row[u] = hit as f32;
                                        mask_row[u] = true;
                                        break;
                                    }
                                }
                                prev = Some((t, d));
                                t += (d as f64).max(s / 2.0) / len;
                            }
                        }
                    }
                }
            });
        Ok(out)
    }

    /// Rebuilds the local map from the allocated blocks that the view at
    /// `pose` can see, for local-mode raycasting without a fresh frame.
    /// Returns the number of selected blocks.
    pub fn select_view_blocks(&mut self, intr: &Intrinsics, pose: &Pose) -> Result<usize> {
        intr.validate()?;
        let to_cam = pose.inverse();
        let active = self.active_blocks();
        let (w, h) = (intr.width as f64, intr.height as f64);
        let visible: Vec<u32> = active
            .par_iter()
            .copied()
            .filter(|&i| {
                let corners = self.block_corners(self.block_coord(i));
                let cam: Vec<Point3<f64>> = corners.iter().map(|p| to_cam * p).collect();
                if cam.iter().all(|p| p.z <= 0.0) {
                    return false;
                }
                if cam.iter().any(|p| p.z <= 1e-6) {
                    return true;
                }
                let uv: Vec<(f64, f64)> = cam.iter().map(|p| intr.project(&p.coords)).collect();
                let umin = uv.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
                let umax = uv.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
                let vmin = uv.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let vmax = uv.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                umax >= -0.5 && vmax >= -0.5 && umin <= w - 0.5 && vmin <= h - 0.5
            })
            .collect();
        let keys = self.global.gather_keys(&visible);
        let mut local =
            SpatialHashMap::new(visible.len().max(1), 3, &[ValueSchema::of::<u32>(1)], self.config.backend)?;
        local.insert_typed(&keys, &visible)?;
        self.local = Some(local);
        Ok(visible.len())
    }
}
