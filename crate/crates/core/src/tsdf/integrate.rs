use rayon::prelude::*;

use super::{Frame, VoxelBlockGrid};
use crate::error::{invalid, Result};
use crate::hashmap::NIL;

/// Running weighted mean of one voxel: folds observation `dj` with weight
/// `wj` into `(d, w)`. The weight saturates at `w_max`.
#[inline]
pub fn fuse(d: f32, w: f32, dj: f32, wj: f32, w_max: f32) -> (f32, f32) {
    let sum = w + wj;
    ((w * d + wj * dj) / sum, sum.min(w_max))
}

impl VoxelBlockGrid {
    /// Fuses `frame` into the blocks at global indices `blocks`.
    pub fn integrate(&mut self, frame: &Frame, blocks: &[u32]) -> Result<()> {
        frame.validate()?;
        if blocks.is_empty() {
            return Ok(());
        }
        let capacity = self.global.capacity();
        let mut slot = vec![NIL; capacity];
        for (k, &b) in blocks.iter().enumerate() {
            if b as usize >= capacity {
                return invalid(format!("block index {b} outside capacity {capacity}"));
            }
            slot[b as usize] = k as u32;
        }
        let coords = self.global.gather_keys(blocks);
        let config = self.config;
        let l = config.block_resolution;
        let n = config.voxels_per_block();
        let world_to_cam = frame.pose.inverse();
        let intr = frame.intrinsics;
        let mu = config.truncation as f32;
        let wj = config.frame_weight;
        let color_img = frame.color.as_deref().filter(|_| config.color);

        let fuse_block = |k: usize, tsdf: &mut [f32], mut color: Option<&mut [f32]>| {
            let b = &coords[3 * k..3 * k + 3];
            for vz in 0..l {
                for vy in 0..l {
                    for vx in 0..l {
                        let g = [
                            b[0] as i64 * l as i64 + vx as i64,
                            b[1] as i64 * l as i64 + vy as i64,
                            b[2] as i64 * l as i64 + vz as i64,
                        ];
                        let pc = world_to_cam * config.voxel_center(g);
                        let Some((u, v)) = intr.pixel_of(&pc.coords) else { continue };
                        let depth = frame.depth.get(u, v) as f64;
                        if depth <= 0.0 || depth < config.depth_min || depth > config.depth_max {
                            continue;
                        }
                        let (measured, r) = if config.ray_distance {
                            (depth * intr.ray(u as f64, v as f64).norm(), pc.coords.norm())
                        } else {
                            (depth, pc.z)
                        };
                        if r < config.depth_min || r > config.depth_max {
                            continue;
                        }
                        let dj = (measured - r) as f32;
                        if dj < -mu {
                            continue;
                        }
                        let i = (vz * l + vy) * l + vx;
                        let (d, w) = (tsdf[2 * i], tsdf[2 * i + 1]);
                        let (nd, nw) = fuse(d, w, dj.min(mu), wj, config.max_weight);
                        tsdf[2 * i] = nd;
                        tsdf[2 * i + 1] = nw;
                        if let (Some(col), Some(img)) = (color.as_deref_mut(), color_img) {
                            let px = img[v * intr.width + u];
                            for c in 0..3 {
                                let old = col[3 * i + c];
                                col[3 * i + c] = (w * old + wj * px[c] as f32) / (w + wj);
                            }
                        }
                    }
                }
            }
        };

        if config.color {
            let (tsdf, color) = self.global.values_mut_pair::<f32, f32>(0, 1)?;
            tsdf.into_mut_slice()
                .par_chunks_mut(2 * n)
                .zip(color.into_mut_slice().par_chunks_mut(3 * n))
                .enumerate()
                .filter(|(i, _)| slot[*i] != NIL)
                .for_each(|(i, (t, c))| fuse_block(slot[i] as usize, t, Some(c)));
        } else {
            self.global
                .values_mut::<f32>(0)?
                .into_mut_slice()
                .par_chunks_mut(2 * n)
                .enumerate()
                .filter(|(i, _)| slot[*i] != NIL)
                .for_each(|(i, t)| fuse_block(slot[i] as usize, t, None));
        }
        Ok(())
    }

    /// Allocation followed by integration.
    pub fn integrate_frame(&mut self, frame: &Frame) -> Result<Vec<u32>> {
        let blocks = self.allocate_blocks(frame)?;
        self.integrate(frame, &blocks)?;
        Ok(blocks)
    }
}
