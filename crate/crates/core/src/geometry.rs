//! Batch geometry on top of the map: voxelization, lattice neighbors, cube
//! embedding and set intersection.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::hashmap::{Backend, BatchResult, SpatialHashMap, SpatialHashSet};

/// Points with optional per-point attributes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<[f64; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub normals: Option<Vec<[f32; 3]>>,
}

impl PointCloud {
    pub fn from_positions(positions: Vec<[f64; 3]>) -> Self {
        Self { positions, colors: None, normals: None }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.colors.as_ref().is_some_and(|c| c.len() != n) {
            return invalid(format!("{} colors for {n} points", self.colors.as_ref().unwrap().len()));
        }
        if self.normals.as_ref().is_some_and(|c| c.len() != n) {
            return invalid(format!("{} normals for {n} points", self.normals.as_ref().unwrap().len()));
        }
        Ok(())
    }

    /// Gathers the points (and their attributes) at `indices`.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            colors: self.colors.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            normals: self.normals.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// Floors `p / s` into a voxel coordinate. Fails on non-finite input or on
/// coordinates that do not fit in 32 bits.
pub fn quantize(p: [f64; 3], s: f64) -> Option<[i32; 3]> {
    let mut v = [0i32; 3];
    for d in 0..3 {
        let q = (p[d] / s).floor();
        if !q.is_finite() || q < i32::MIN as f64 || q > i32::MAX as f64 {
            return None;
        }
        v[d] = q as i32;
    }
    Some(v)
}

#[derive(Debug, Clone, Default)]
pub struct Voxelized {
    /// Distinct voxel coordinates.
    pub coords: Vec<[i32; 3]>,
    /// For each voxel, the input index of one point inside it.
    pub indices: Vec<usize>,
}

pub fn voxel_downsample(points: &[[f64; 3]], s: f64, backend: Backend) -> Result<Voxelized> {
    if !(s > 0.0 && s.is_finite()) {
        return invalid(format!("voxel size must be positive, got {s}"));
    }
    if points.is_empty() {
        return Ok(Voxelized::default());
    }
    let coords: Vec<[i32; 3]> = points
        .par_iter()
        .map(|&p| quantize(p, s))
        .collect::<Option<_>>()
        .map_or_else(|| invalid("point coordinate not representable at this voxel size"), Ok)?;
    let mut set = SpatialHashSet::new(points.len(), 3, backend)?;
    let result = set.insert(bytemuck::cast_slice(&coords))?;
    let (coords, indices) = result
        .masks
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(j, _)| (coords[j], j))
        .unzip();
    Ok(Voxelized { coords, indices })
}

/// Offsets of the `(2r+1)^3` lattice cube, x fastest.
pub fn lattice_offsets(r: u32) -> Vec<[i32; 3]> {
    let r = r as i32;
    let mut out = Vec::with_capacity(((2 * r + 1) as usize).pow(3));
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                out.push([dx, dy, dz]);
            }
        }
    }
    out
}

/// Looks up every lattice offset in `[-r, r]^3` around each coordinate.
/// Entry `j * (2r+1)^3 + o` corresponds to `coords[j] + lattice_offsets(r)[o]`.
pub fn radius_neighbors(map: &SpatialHashMap, coords: &[[i32; 3]], r: u32) -> Result<BatchResult> {
    if map.arity() != 3 {
        return invalid(format!("neighbor search needs 3D keys, map has arity {}", map.arity()));
    }
    let offsets = lattice_offsets(r);
    let queries: Vec<i32> = coords
        .par_iter()
        .flat_map_iter(|c| {
            offsets.iter().flat_map(move |o| {
                [c[0].wrapping_add(o[0]), c[1].wrapping_add(o[1]), c[2].wrapping_add(o[2])]
            })
        })
        .collect();
    map.find(&queries)
}

/// The 8 corners of the grid cell around each point and their trilinear
/// weights. Corner `k` sits at offset `(k & 1, (k >> 1) & 1, (k >> 2) & 1)`.
#[derive(Debug, Clone, Default)]
pub struct CubeEmbedding {
    pub corners: Vec<[[i32; 3]; 8]>,
    pub weights: Vec<[f64; 8]>,
}

pub fn cube_embed(points: &[[f64; 3]], g: f64) -> Result<CubeEmbedding> {
    if !(g > 0.0 && g.is_finite()) {
        return invalid(format!("grid spacing must be positive, got {g}"));
    }
    let cells: Vec<([[i32; 3]; 8], [f64; 8])> = points
        .par_iter()
        .map(|&p| {
            let base = quantize(p, g)?;
            let mut frac = [0.0; 3];
            for d in 0..3 {
                frac[d] = (p[d] / g - base[d] as f64).clamp(0.0, 1.0);
            }
            let mut corners = [[0i32; 3]; 8];
            let mut weights = [0.0; 8];
            for k in 0..8 {
                let mut w = 1.0;
                for d in 0..3 {
                    let bit = (k >> d) & 1;
                    corners[k][d] = base[d].wrapping_add(bit as i32);
                    w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                }
                weights[k] = w;
            }
            Some((corners, weights))
        })
        .collect::<Option<_>>()
        .map_or_else(|| invalid("point coordinate not representable at this grid spacing"), Ok)?;
    let (corners, weights) = cells.into_iter().unzip();
    Ok(CubeEmbedding { corners, weights })
}

/// Elements of `k2` (with multiplicity) that also occur in `k1`.
pub fn set_intersection(k1: &[i32], k2: &[i32], arity: usize, backend: Backend) -> Result<Vec<i32>> {
    if arity == 0 || k1.len() % arity != 0 || k2.len() % arity != 0 {
        return invalid(format!("key batches are not multiples of arity {arity}"));
    }
    let n1 = k1.len() / arity;
    if n1 == 0 || k2.is_empty() {
        return Ok(Vec::new());
    }
    let mut set = SpatialHashSet::new(n1, arity, backend)?;
    set.insert(k1)?;
    let found = set.find(k2)?;
    Ok(k2
        .chunks_exact(arity)
        .zip(&found.masks)
        .filter(|(_, &m)| m)
        .flat_map(|(k, _)| k.iter().copied())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_not_truncation() {
        assert_eq!(quantize([-0.5, 0.0, 0.4], 1.0), Some([-1, 0, 0]));
        assert_eq!(quantize([f64::NAN, 0.0, 0.0], 1.0), None);
        assert_eq!(quantize([1e300, 0.0, 0.0], 1.0), None);
    }

    #[test]
    fn downsample_small() {
        let pts = [[0.1, 0.1, 0.1], [0.2, 0.2, 0.2], [1.1, 0.0, 0.0]];
        for b in [Backend::Generic, Backend::IntegerDelegate] {
            let v = voxel_downsample(&pts, 1.0, b).unwrap();
            let mut pairs: Vec<_> = v.coords.iter().copied().zip(v.indices.iter().copied()).collect();
            pairs.sort();
            assert_eq!(pairs.len(), 2);
            assert_eq!(pairs[0].0, [0, 0, 0]);
            assert!(pairs[0].1 <= 1);
            assert_eq!(pairs[1], ([1, 0, 0], 2));
        }
        assert!(voxel_downsample(&pts, 0.0, Backend::Generic).is_err());
        assert!(voxel_downsample(&[], 1.0, Backend::Generic).unwrap().coords.is_empty());
    }

    #[test]
    fn offsets_cover_cube() {
        assert_eq!(lattice_offsets(0), vec![[0, 0, 0]]);
        let o = lattice_offsets(1);
        assert_eq!(o.len(), 27);
        assert_eq!(o[13], [0, 0, 0]);
        assert_eq!(o[0], [-1, -1, -1]);
        assert_eq!(o[1], [0, -1, -1]);
    }

    #[test]
    fn face_neighbors_only() {
        let mut set = SpatialHashSet::new(16, 3, Backend::Generic).unwrap();
        let mut keys = vec![0, 0, 0];
        for d in 0..3 {
            for s in [-1, 1] {
                let mut k = [0; 3];
                k[d] = s;
                keys.extend_from_slice(&k);
            }
        }
        set.insert(&keys).unwrap();
        let r = radius_neighbors(set.as_map(), &[[0, 0, 0]], 1).unwrap();
        assert_eq!(r.len(), 27);
        assert_eq!(r.count(), 7);
        let r0 = radius_neighbors(set.as_map(), &[[0, 0, 0], [5, 5, 5]], 0).unwrap();
        assert_eq!(r0.masks, vec![true, false]);
    }

    #[test]
    fn trilinear_cases() {
        let e = cube_embed(&[[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [0.25, 0.0, 0.0]], 1.0).unwrap();
        assert_eq!(e.weights[0], [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(e.weights[1].iter().all(|&w| w == 0.125));
        assert_eq!(e.weights[2][0], 0.75);
        assert_eq!(e.weights[2][1], 0.25);
        assert_eq!(e.weights[2][2..], [0.0; 6]);
        assert_eq!(e.corners[2][7], [1, 1, 1]);
        assert!(cube_embed(&[[0.0; 3]], -1.0).is_err());
    }

    #[test]
    fn intersection_keeps_duplicates() {
        let a = [1, 2, 3];
        let b = [3, 4, 3];
        assert_eq!(set_intersection(&a, &b, 1, Backend::Generic).unwrap(), vec![3, 3]);
        assert!(set_intersection(&[], &b, 1, Backend::Generic).unwrap().is_empty());
        assert_eq!(set_intersection(&[1, 2], &[1, 2], 1, Backend::IntegerDelegate).unwrap(), vec![1, 2]);
    }

    #[test]
    fn select_gathers_attributes() {
        let pc = PointCloud {
            positions: vec![[0.0; 3], [1.0; 3]],
            colors: Some(vec![[1, 2, 3], [4, 5, 6]]),
            normals: None,
        };
        pc.validate().unwrap();
        let s = pc.select(&[1]);
        assert_eq!(s.positions, vec![[1.0; 3]]);
        assert_eq!(s.colors, Some(vec![[4, 5, 6]]));
    }
}
