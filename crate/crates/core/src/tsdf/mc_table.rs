//! Marching-cubes triangulation built from per-face rules.
//!
//! Corner `k` of a cell sits at `(k & 1, (k >> 1) & 1, (k >> 2) & 1)`. A
//! configuration has bit `k` set when corner `k` is inside (negative). On
//! each face the crossing edges are paired so that negative corners stay
//! separated on ambiguous faces; the rule depends only on the face's own
//! corners, so neighboring cells agree on their shared face. Face segments
//! chain into closed loops which are fanned into triangles.

use std::sync::OnceLock;

/// Edge `e` joins corners `EDGES[e].0` (lower) and `EDGES[e].1` along axis `EDGES[e].2`.
pub(crate) const EDGES: [(usize, usize, usize); 12] = {
    let mut out = [(0, 0, 0); 12];
    let mut axis = 0;
    while axis < 3 {
        let mut j = 0;
        let mut k = 0;
        while k < 8 {
            if k & (1 << axis) == 0 {
                out[axis * 4 + j] = (k, k | (1 << axis), axis);
                j += 1;
            }
            k += 1;
        }
        axis += 1;
    }
    out
};

#[inline]
pub(crate) fn corner_offset(k: usize) -> [usize; 3] {
    [k & 1, (k >> 1) & 1, (k >> 2) & 1]
}

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|&(p, q, _)| (p, q) == (a, b) || (p, q) == (b, a))
        .expect("corners share an edge")
}

/// Corners of each face, counter-clockwise seen from outside the cell.
fn faces() -> [[usize; 4]; 6] {
    let mut out = [[0; 4]; 6];
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for side in 0..2 {
            let mut cyc = [(0, 0), (1, 0), (1, 1), (0, 1)].map(|(x, y)| side << a | x << b | y << c);
            if side == 0 {
                cyc.reverse();
            }
            out[a * 2 + side] = cyc;
        }
    }
    out
}

fn build(config: usize) -> Vec<[u8; 3]> {
    let neg = |k: usize| config >> k & 1 == 1;
    let mut next = [usize::MAX; 12];
    for face in faces() {
        // Crossings in counter-clockwise order: (edge, enters negative region).
        let crossings: Vec<(usize, bool)> = (0..4)
            .filter_map(|i| {
                let (p, q) = (face[i], face[(i + 1) % 4]);
                (neg(p) != neg(q)).then(|| (edge_between(p, q), neg(q)))
            })
            .collect();
        for (i, &(e, enter)) in crossings.iter().enumerate() {
            if enter {
                let (exit, is_enter) = crossings[(i + 1) % crossings.len()];
                debug_assert!(!is_enter);
                next[e] = exit;
            }
        }
    }
    let mut seen = [false; 12];
    let mut tris = Vec::new();
    for start in 0..12 {
        if next[start] == usize::MAX || seen[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut e = start;
        while !seen[e] {
            seen[e] = true;
            ring.push(e as u8);
            e = next[e];
        }
        for i in 1..ring.len() - 1 {
            tris.push([ring[0], ring[i], ring[i + 1]]);
        }
    }
    tris
}

/// Triangles, as cell edge indices, for each of the 256 configurations.
pub(crate) fn table() -> &'static [Vec<[u8; 3]>] {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(build).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn edge_point(e: usize) -> [f64; 3] {
        let (a, b, _) = EDGES[e];
        let (pa, pb) = (corner_offset(a), corner_offset(b));
        [0, 1, 2].map(|d| (pa[d] + pb[d]) as f64 / 2.0)
    }

    #[test]
    fn edges_are_axis_aligned() {
        for &(a, b, axis) in &EDGES {
            assert_eq!(b - a, 1 << axis);
        }
    }

    #[test]
    fn trivial_and_counts() {
        let t = table();
        assert!(t[0].is_empty() && t[255].is_empty());
        assert_eq!(t[1].len(), 1);
        assert_eq!(t[0b0000_0011].len(), 2);
        // Two opposite corners stay separate.
        assert_eq!(t[0b1000_0001].len(), 2);
        // Complements have the same topology away from ambiguous faces.
        assert_eq!(t[0b0001_0111].len(), t[255 - 0b0001_0111].len());
    }

    #[test]
    fn every_cell_patch_closes_against_faces() {
        // Inside a cell, each triangle edge is either shared by two
        // triangles or lies on a cell face.
        for tris in table() {
            let mut uses: HashMap<(u8, u8), usize> = HashMap::new();
            for t in tris {
                for i in 0..3 {
                    let (a, b) = (t[i], t[(i + 1) % 3]);
                    *uses.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
            for ((a, b), n) in uses {
                let (pa, pb) = (edge_point(a as usize), edge_point(b as usize));
                let on_face = (0..3).any(|d| pa[d] == pb[d] && (pa[d] == 0.0 || pa[d] == 1.0));
                assert!(n == 2 || (n == 1 && on_face), "edge {a}-{b} used {n} times");
            }
        }
    }

    #[test]
    fn normals_face_outside() {
        // Each patch faces toward positive distance.
        for c in 1..255usize {
            for t in &table()[c] {
                let [a, b, d] = t.map(|e| edge_point(e as usize));
                let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                let v = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
                let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
                // Field that is negative exactly on the configuration's corners,
                // interpolated trilinearly: its gradient at the centroid.
                let centroid = [0, 1, 2].map(|k| (a[k] + b[k] + d[k]) / 3.0);
                let f = |p: [f64; 3]| -> f64 {
                    (0..8)
                        .map(|k| {
                            let o = corner_offset(k);
                            let w: f64 = (0..3).map(|d| if o[d] == 1 { p[d] } else { 1.0 - p[d] }).product();
                            w * if c >> k & 1 == 1 { -1.0 } else { 1.0 }
                        })
                        .sum()
                };
                let h = 1e-4;
                let grad = [0, 1, 2].map(|k| {
                    let mut p = centroid;
                    let mut q = centroid;
                    p[k] += h;
                    q[k] -= h;
                    (f(p) - f(q)) / (2.0 * h)
                });
                let dot: f64 = (0..3).map(|k| n[k] * grad[k]).sum();
                assert!(dot >= 0.0, "config {c} triangle {t:?}");
            }
        }
    }
}
