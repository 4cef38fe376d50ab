//! Surface extraction at TSDF zero crossings.
//!
//! Every voxel owns the three edges leaving it in +x, +y and +z, so each
//! crossing edge produces exactly one vertex. Reads past a block face go
//! through a 27-entry neighbor table per block.

use rayon::prelude::*;

use super::mc_table::{corner_offset, table, EDGES};
use super::VoxelBlockGrid;
use crate::geometry::{radius_neighbors, PointCloud};
use crate::hashmap::NIL;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    /// Unit normals pointing toward positive distance.
    pub normals: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Crossing vertices of one block, sorted by `code = voxel * 3 + axis`.
#[derive(Default)]
struct BlockVertices {
    codes: Vec<u32>,
    positions: Vec<[f64; 3]>,
    normals: Vec<[f64; 3]>,
}

struct Extractor<'a> {
    grid: &'a VoxelBlockGrid,
    l: usize,
    /// Global buffer index per active block.
    blocks: Vec<u32>,
    coords: Vec<[i32; 3]>,
    /// 27 neighbor positions (into `blocks`) per active block.
    neighbors: Vec<u32>,
    tsdf: crate::hashmap::Rows<'a, f32>,
}

impl<'a> Extractor<'a> {
    fn new(grid: &'a VoxelBlockGrid) -> Self {
        let blocks = grid.active_blocks();
        let coords: Vec<[i32; 3]> = blocks.iter().map(|&b| grid.block_coord(b)).collect();
        let mut position = vec![NIL; grid.global.capacity()];
        for (k, &b) in blocks.iter().enumerate() {
            position[b as usize] = k as u32;
        }
        let found = radius_neighbors(&grid.global, &coords, 1).expect("3D keys");
        let neighbors = found
            .indices
            .iter()
            .zip(&found.masks)
            .map(|(&i, &m)| if m { position[i as usize] } else { NIL })
            .collect();
        let tsdf = grid.global.values::<f32>(0).expect("tsdf buffer");
        Self { grid, l: grid.config.block_resolution, blocks, coords, neighbors, tsdf }
    }

    /// Resolves an in-block coordinate in `[-1, ℓ]` to (block position, voxel).
    #[inline]
    fn resolve(&self, k: usize, v: [i64; 3]) -> Option<(usize, [usize; 3])> {
        let l = self.l as i64;
        let mut slot = 0;
        let mut local = [0usize; 3];
        for d in (0..3).rev() {
            let off = v[d].div_euclid(l);
            debug_assert!((-1..=1).contains(&off));
            slot = slot * 3 + (off + 1) as usize;
            local[d] = v[d].rem_euclid(l) as usize;
        }
        let n = self.neighbors[k * 27 + slot];
        (n != NIL).then_some((n as usize, local))
    }

    /// Distance at an in-block coordinate, if observed.
    #[inline]
    fn sample(&self, k: usize, v: [i64; 3]) -> Option<f32> {
        let (b, local) = self.resolve(k, v)?;
        let p = self.tsdf.row(self.blocks[b] as usize);
        let i = ((local[2] * self.l + local[1]) * self.l + local[0]) * 2;
        (p[i + 1] > 0.0).then_some(p[i])
    }

    fn gradient(&self, k: usize, v: [i64; 3], d0: f32) -> [f64; 3] {
        let mut g = [0.0; 3];
        for axis in 0..3 {
            let mut lo = v;
            let mut hi = v;
            lo[axis] -= 1;
            hi[axis] += 1;
            g[axis] = match (self.sample(k, lo), self.sample(k, hi)) {
                (Some(a), Some(b)) => (b - a) as f64 / 2.0,
                (None, Some(b)) => (b - d0) as f64,
                (Some(a), None) => (d0 - a) as f64,
                (None, None) => 0.0,
            };
        }
        g
    }

    fn world(&self, k: usize, v: [i64; 3]) -> [f64; 3] {
        let l = self.l as i64;
        let b = self.coords[k];
        let c = self.grid.config.voxel_center([
            b[0] as i64 * l + v[0],
            b[1] as i64 * l + v[1],
            b[2] as i64 * l + v[2],
        ]);
        [c.x, c.y, c.z]
    }

    fn block_vertices(&self, k: usize) -> BlockVertices {
        let l = self.l as i64;
        let mut out = BlockVertices::default();
        for z in 0..l {
            for y in 0..l {
                for x in 0..l {
                    let v = [x, y, z];
                    let Some(d0) = self.sample(k, v) else { continue };
                    for axis in 0..3 {
                        let mut w = v;
                        w[axis] += 1;
                        let Some(d1) = self.sample(k, w) else { continue };
                        if (d0 < 0.0) == (d1 < 0.0) {
                            continue;
                        }
                        let t = (d0 / (d0 - d1)) as f64;
                        let (p0, p1) = (self.world(k, v), self.world(k, w));
                        let (g0, g1) = (self.gradient(k, v, d0), self.gradient(k, w, d1));
                        let mut n = [0.0; 3];
                        let mut p = [0.0; 3];
                        for d in 0..3 {
                            p[d] = p0[d] + t * (p1[d] - p0[d]);
                            n[d] = g0[d] + t * (g1[d] - g0[d]);
                        }
                        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                        if len > 0.0 {
                            n = n.map(|c| c / len);
                        }
                        let code = ((z * l + y) * l + x) as u32 * 3 + axis as u32;
                        out.codes.push(code);
                        out.positions.push(p);
                        out.normals.push(n);
                    }
                }
            }
        }
        out
    }

    fn vertices(&self) -> Vec<BlockVertices> {
        (0..self.blocks.len()).into_par_iter().map(|k| self.block_vertices(k)).collect()
    }

    fn cell_triangles(
        &self,
        k: usize,
        v: [i64; 3],
        verts: &[BlockVertices],
        offsets: &[u32],
        out: &mut Vec<[u32; 3]>,
    ) -> Option<()> {
        let mut config = 0usize;
        for c in 0..8 {
            let o = corner_offset(c);
            let s = self.sample(k, [v[0] + o[0] as i64, v[1] + o[1] as i64, v[2] + o[2] as i64])?;
            if s < 0.0 {
                config |= 1 << c;
            }
        }
        let tris = &table()[config];
        if tris.is_empty() {
            return Some(());
        }
        let mut ids = [NIL; 12];
        for &e in tris.iter().flatten() {
            let e = e as usize;
            if ids[e] != NIL {
                continue;
            }
            let (a, _, axis) = EDGES[e];
            let o = corner_offset(a);
            let (b, local) = self.resolve(k, [v[0] + o[0] as i64, v[1] + o[1] as i64, v[2] + o[2] as i64])?;
            let code = ((local[2] * self.l + local[1]) * self.l + local[0]) as u32 * 3 + axis as u32;
            let pos = verts[b].codes.binary_search(&code).ok()?;
            ids[e] = offsets[b] + pos as u32;
        }
        out.extend(tris.iter().map(|t| t.map(|e| ids[e as usize])));
        Some(())
    }

    fn block_triangles(&self, k: usize, verts: &[BlockVertices], offsets: &[u32]) -> Vec<[u32; 3]> {
        let l = self.l as i64;
        let mut out = Vec::new();
        for z in 0..l {
            for y in 0..l {
                for x in 0..l {
                    self.cell_triangles(k, [x, y, z], verts, offsets, &mut out);
                }
            }
        }
        out
    }
}

impl VoxelBlockGrid {
    /// Triangle mesh of the zero level set over observed voxels.
    pub fn extract_mesh(&self) -> TriangleMesh {
        if self.is_empty() {
            return TriangleMesh::default();
        }
        let ex = Extractor::new(self);
        let verts = ex.vertices();
        let mut offsets = Vec::with_capacity(verts.len());
        let mut total = 0u32;
        for v in &verts {
            offsets.push(total);
            total += v.codes.len() as u32;
        }
        let triangles: Vec<[u32; 3]> = (0..verts.len())
            .into_par_iter()
            .flat_map_iter(|k| ex.block_triangles(k, &verts, &offsets))
            .collect();
        let mut mesh = TriangleMesh {
            vertices: Vec::with_capacity(total as usize),
            normals: Vec::with_capacity(total as usize),
            triangles,
        };
        for v in verts {
            mesh.vertices.extend(v.positions);
            mesh.normals.extend(v.normals);
        }
        mesh
    }

    /// Zero-crossing points with normals, the vertex pass of
    /// [`extract_mesh`](Self::extract_mesh) without faces.
    pub fn extract_points(&self) -> PointCloud {
        if self.is_empty() {
            return PointCloud::default();
        }
        let ex = Extractor::new(self);
        let mut pc = PointCloud { normals: Some(Vec::new()), ..PointCloud::default() };
        for v in ex.vertices() {
            pc.positions.extend(v.positions);
            pc.normals.as_mut().unwrap().extend(v.normals.iter().map(|n| n.map(|c| c as f32)));
        }
        pc
    }
}
