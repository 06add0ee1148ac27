//! Dense voxel grid of skinning weights over the canonical bounding box.
//!
//! Each voxel stores the weight row of its nearest template vertex; queries
//! interpolate trilinearly between voxel centers and clamp outside the box.

use super::SkinnedTemplate;
use crate::math::V3;
use crate::{Result, SgiaError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkinningGrid {
    pub res: [usize; 3],
    pub min: V3,
    pub max: V3,
    pub n_bones: usize,
    /// Row-major `(z, y, x)` voxel weights, `n_bones` entries per voxel.
    pub weights: Vec<f64>,
}

/// Bake a skinning grid covering the template AABB inflated by 10%.
pub fn bake_skinning_grid(tpl: &SkinnedTemplate, resolution: [usize; 3]) -> Result<SkinningGrid> {
    if tpl.vertices.is_empty() {
        return Err(SgiaError::InvalidTemplate("cannot bake a grid for an empty template".into()));
    }
    if resolution.iter().any(|&r| r < 2) {
        return Err(SgiaError::InvalidInput("grid resolution must be >= 2 per axis".into()));
    }
    let (lo, hi) = tpl.aabb();
    let pad = (hi - lo) * 0.05 + V3::repeat(1e-9);
    let min = lo - pad;
    let max = hi + pad;
    let n_bones = tpl.n_joints();
    let [rx, ry, rz] = resolution;
    let n_vox = rx * ry * rz;
    let cell = V3::new(
        (max.x - min.x) / rx as f64,
        (max.y - min.y) / ry as f64,
        (max.z - min.z) / rz as f64,
    );
    let rows: Vec<usize> = (0..n_vox)
        .into_par_iter()
        .map(|v| {
            let x = v % rx;
            let y = (v / rx) % ry;
            let z = v / (rx * ry);
            let c = V3::new(
                min.x + (x as f64 + 0.5) * cell.x,
                min.y + (y as f64 + 0.5) * cell.y,
                min.z + (z as f64 + 0.5) * cell.z,
            );
            let mut best = (f64::INFINITY, 0usize);
            for (i, p) in tpl.vertices.iter().enumerate() {
                let d = (p - c).norm_squared();
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        })
        .collect();
    let mut weights = vec![0.0; n_vox * n_bones];
    for (v, &vert) in rows.iter().enumerate() {
        weights[v * n_bones..(v + 1) * n_bones].copy_from_slice(&tpl.weights[vert]);
    }
    Ok(SkinningGrid {
        res: resolution,
        min,
        max,
        n_bones,
        weights,
    })
}

impl SkinningGrid {
    fn voxel(&self, x: usize, y: usize, z: usize) -> &[f64] {
        let v = (z * self.res[1] + y) * self.res[0] + x;
        &self.weights[v * self.n_bones..(v + 1) * self.n_bones]
    }

    /// Continuous voxel-center coordinates of `p`, clamped to the border.
    fn coords(&self, p: &V3) -> (V3, [bool; 3]) {
        let mut c = V3::zeros();
        let mut interior = [true; 3];
        for i in 0..3 {
            let cell = (self.max[i] - self.min[i]) / self.res[i] as f64;
            let raw = (p[i] - self.min[i]) / cell - 0.5;
            let hi = self.res[i] as f64 - 1.0;
            c[i] = raw.clamp(0.0, hi);
            interior[i] = raw > 0.0 && raw < hi;
        }
        (c, interior)
    }

    /// Trilinear weight query.
    pub fn query(&self, p: &V3) -> Vec<f64> {
        self.query_with_grad(p).0
    }

    /// Trilinear query plus the gradient of each weight w.r.t. `p`.
    /// The gradient is zero along clamped (out-of-box) axes.
    pub fn query_with_grad(&self, p: &V3) -> (Vec<f64>, Vec<V3>) {
        let (c, interior) = self.coords(p);
        let i0 = [
            (c.x.floor() as usize).min(self.res[0] - 2),
            (c.y.floor() as usize).min(self.res[1] - 2),
            (c.z.floor() as usize).min(self.res[2] - 2),
        ];
        let f = V3::new(c.x - i0[0] as f64, c.y - i0[1] as f64, c.z - i0[2] as f64);
        let mut out = vec![0.0; self.n_bones];
        let mut grad = vec![V3::zeros(); self.n_bones];
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - f.x } else { f.x };
                    let wy = if dy == 0 { 1.0 - f.y } else { f.y };
                    let wz = if dz == 0 { 1.0 - f.z } else { f.z };
                    let sx = if dx == 0 { -1.0 } else { 1.0 };
                    let sy = if dy == 0 { -1.0 } else { 1.0 };
                    let sz = if dz == 0 { -1.0 } else { 1.0 };
                    let row = self.voxel(i0[0] + dx, i0[1] + dy, i0[2] + dz);
                    for (b, &w) in row.iter().enumerate() {
                        out[b] += wx * wy * wz * w;
                        grad[b].x += sx * wy * wz * w;
                        grad[b].y += wx * sy * wz * w;
                        grad[b].z += wx * wy * sz * w;
                    }
                }
            }
        }
        // chain rule: d coord / d p = 1 / cell, zeroed where clamped
        for g in &mut grad {
            for i in 0..3 {
                let cell = (self.max[i] - self.min[i]) / self.res[i] as f64;
                g[i] = if interior[i] { g[i] / cell } else { 0.0 };
            }
        }
        (out, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_vertex_template() -> SkinnedTemplate {
        // two well-separated vertices with one-hot weights, plus padding
        // vertices sharing the same rows so validation passes
        SkinnedTemplate::new(
            vec![
                V3::new(-1.0, 0.0, 0.0),
                V3::new(1.0, 0.0, 0.0),
                V3::new(-1.0, 0.1, 0.0),
                V3::new(1.0, 0.1, 0.0),
            ],
            vec![[0, 1, 2]],
            vec![V3::zeros(), V3::new(0.0, 1.0, 0.0)],
            vec![-1, 0],
            vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
            ],
            vec![V3::new(0.0, 0.0, 1.0); 4],
        )
        .unwrap()
    }

    #[test]
    fn query_at_vertex_reproduces_row() {
        let tpl = two_vertex_template();
        let grid = bake_skinning_grid(&tpl, [32, 8, 4]).unwrap();
        for (v, row) in tpl.vertices.iter().zip(&tpl.weights) {
            let q = grid.query(v);
            for (a, b) in q.iter().zip(row) {
                assert!((a - b).abs() < 1e-3, "got {a}, want {b}");
            }
        }
    }

    #[test]
    fn midpoint_is_convex_combination() {
        let tpl = two_vertex_template();
        let grid = bake_skinning_grid(&tpl, [16, 4, 4]).unwrap();
        let q = grid.query(&V3::new(0.0, 0.05, 0.0));
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for &w in &q {
            assert!((0.0..=1.0).contains(&w), "weight {w} outside [0,1]");
        }
    }

    #[test]
    fn outside_aabb_clamps_to_border() {
        let tpl = two_vertex_template();
        let grid = bake_skinning_grid(&tpl, [16, 4, 4]).unwrap();
        let far = grid.query(&V3::new(100.0, 0.0, 0.0));
        let border = grid.query(&V3::new(grid.max.x, 0.0, 0.0));
        for (a, b) in far.iter().zip(&border) {
            assert!((a - b).abs() < 1e-9);
        }
        let (_, g) = grid.query_with_grad(&V3::new(100.0, 0.0, 0.0));
        assert!(g.iter().all(|v| v.x == 0.0));
    }

    #[test]
    fn empty_template_errors() {
        let tpl = two_vertex_template();
        let mut empty = tpl.clone();
        empty.vertices.clear();
        assert!(bake_skinning_grid(&empty, [4, 4, 4]).is_err());
    }

    #[test]
    fn trilinear_gradient_matches_finite_differences() {
        let tpl = two_vertex_template();
        let grid = bake_skinning_grid(&tpl, [16, 6, 4]).unwrap();
        let p = V3::new(0.13, 0.04, 0.01);
        let (_, g) = grid.query_with_grad(&p);
        let eps = 1e-6;
        for b in 0..2 {
            for i in 0..3 {
                let mut pp = p;
                let mut pm = p;
                pp[i] += eps;
                pm[i] -= eps;
                let fd = (grid.query(&pp)[b] - grid.query(&pm)[b]) / (2.0 * eps);
                assert!((g[b][i] - fd).abs() < 1e-6, "b={b} i={i}: {} vs {}", g[b][i], fd);
            }
        }
    }
}
