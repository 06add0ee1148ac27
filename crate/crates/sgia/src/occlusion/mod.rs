//! Baked ambient occlusion: hemisphere ray casting against the posed
//! template mesh, cached per pose and transferred to surfels through
//! nearest-surface-point queries.
//!
//! AO here is the OCCLUSION fraction (ray hit = 1); shading multiplies
//! specular light by the visibility `1 - AO`.

mod bvh;

pub use bvh::{closest_point_triangle, ray_triangle, Bvh, NearestHit};

/// Convenience wrapper over [`Bvh::build`].
pub fn build_bvh(vertices: &[V3], faces: &[[u32; 3]]) -> Result<Bvh> {
    Bvh::build(vertices, faces)
}

use crate::math::V3;
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

use crate::shading::{cosine_sample, to_world};

/// Default ray budget per vertex.
pub const AO_RAYS: usize = 100;

fn mesh_diagonal(vertices: &[V3]) -> f64 {
    if vertices.is_empty() {
        return 0.0;
    }
    let mut lo = vertices[0];
    let mut hi = vertices[0];
    for v in vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (hi - lo).norm()
}

/// Occlusion fraction per vertex: cosine-weighted hemisphere rays about the
/// vertex normal, origin offset by `1e-3 x mesh diagonal` along the normal.
///
/// Deterministic: each vertex draws from a stream seeded with its index
/// mixed with the pose hash.
pub fn bake_vertex_ao(vertices: &[V3], normals: &[V3], bvh: &Bvh, rays_per_vertex: usize, pose_hash: u64) -> Vec<f64> {
    let eps = 1e-3 * mesh_diagonal(vertices);
    vertices
        .par_iter()
        .zip(normals)
        .enumerate()
        .map(|(vi, (v, n))| {
            let n = if n.norm() > 1e-9 { n.normalize() } else { V3::new(0.0, 0.0, 1.0) };
            let origin = v + n * eps;
            let mut rng = ChaCha8Rng::seed_from_u64(pose_hash ^ (vi as u64).wrapping_mul(0x9E3779B97F4A7C15));
            let mut hits = 0usize;
            for _ in 0..rays_per_vertex.max(1) {
                let local = cosine_sample(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
                let dir = to_world(&local, &n);
                if bvh.any_hit(&origin, &dir, 1e-9, f64::INFINITY) {
                    hits += 1;
                }
            }
            hits as f64 / rays_per_vertex.max(1) as f64
        })
        .collect()
}

/// Nearest-surface-point AO lookup for arbitrary query points, interpolated
/// barycentrically inside the containing triangle.
pub fn transfer_ao(points: &[V3], vertices: &[V3], faces: &[[u32; 3]], vertex_ao: &[f64], bvh: &Bvh) -> Vec<f64> {
    let diag = mesh_diagonal(vertices);
    points
        .par_iter()
        .map(|p| {
            let hit = bvh.nearest_point(p);
            if (p - hit.point).norm() > 0.1 * diag {
                log::warn!("occlusion query far from the template surface");
            }
            let f = faces[hit.tri];
            hit.bary[0] * vertex_ao[f[0] as usize]
                + hit.bary[1] * vertex_ao[f[1] as usize]
                + hit.bary[2] * vertex_ao[f[2] as usize]
        })
        .collect()
}

/// Per-pose cache of baked vertex occlusion.
#[derive(Default)]
pub struct AoCache {
    map: HashMap<u64, Arc<Vec<f64>>>,
}

impl AoCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, pose_hash: u64) -> Option<Arc<Vec<f64>>> {
        self.map.get(&pose_hash).cloned()
    }

    pub fn get_or_bake(
        &mut self,
        pose_hash: u64,
        vertices: &[V3],
        normals: &[V3],
        bvh: &Bvh,
        rays_per_vertex: usize,
    ) -> Result<Arc<Vec<f64>>> {
        if let Some(hit) = self.map.get(&pose_hash) {
            return Ok(hit.clone());
        }
        let baked = Arc::new(bake_vertex_ao(vertices, normals, bvh, rays_per_vertex, pose_hash));
        self.map.insert(pose_hash, baked.clone());
        Ok(baked)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests;
