//! Articulated triangle-mesh template with a joint hierarchy and per-vertex
//! skinning weights. Loaded from a self-describing JSON file.

use crate::math::V3;
use crate::{Result, SgiaError};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkinnedTemplate {
    /// Canonical (rest-pose) vertex positions.
    pub vertices: Vec<V3>,
    pub faces: Vec<[u32; 3]>,
    /// Rest-pose joint positions.
    pub joints: Vec<V3>,
    /// Parent joint index per joint; -1 for the root (joint 0).
    pub parents: Vec<i32>,
    /// Per-vertex skinning weights, each row of length `joints.len()`.
    pub weights: Vec<Vec<f64>>,
    pub normals: Vec<V3>,
    /// Optional linear blendshape table: `shape_dirs[v * n_beta + b]` is the
    /// displacement of vertex `v` per unit of shape coefficient `b`.
    #[serde(default)]
    pub shape_dirs: Option<Vec<V3>>,
    #[serde(default)]
    pub n_beta: usize,
}

impl SkinnedTemplate {
    pub fn new(
        vertices: Vec<V3>,
        faces: Vec<[u32; 3]>,
        joints: Vec<V3>,
        parents: Vec<i32>,
        weights: Vec<Vec<f64>>,
        normals: Vec<V3>,
    ) -> Result<Self> {
        let tpl = SkinnedTemplate {
            vertices,
            faces,
            joints,
            parents,
            weights,
            normals,
            shape_dirs: None,
            n_beta: 0,
        };
        tpl.validate()?;
        Ok(tpl)
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if nv == 0 {
            return Err(SgiaError::InvalidTemplate("empty template".into()));
        }
        if self.normals.len() != nv || self.weights.len() != nv {
            return Err(SgiaError::InvalidTemplate(
                "normals/weights length must match vertex count".into(),
            ));
        }
        let nj = self.joints.len();
        if self.parents.len() != nj || nj == 0 {
            return Err(SgiaError::InvalidTemplate("joint/parent arrays inconsistent".into()));
        }
        if self.parents[0] != -1 {
            return Err(SgiaError::InvalidTemplate("joint 0 must be the root (parent -1)".into()));
        }
        // parents must form a tree rooted at joint 0
        for (i, &p) in self.parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= nj {
                return Err(SgiaError::InvalidTemplate(format!("joint {i} has invalid parent {p}")));
            }
            // walk to the root, bounded by nj hops to detect cycles
            let mut cur = p as usize;
            let mut hops = 0;
            while cur != 0 {
                cur = self.parents[cur] as usize;
                hops += 1;
                if hops > nj {
                    return Err(SgiaError::InvalidTemplate(format!(
                        "cyclic joint hierarchy detected at joint {i}"
                    )));
                }
            }
        }
        for f in &self.faces {
            for &ix in f {
                if ix as usize >= nv {
                    return Err(SgiaError::InvalidTemplate(format!("face index {ix} out of range")));
                }
            }
        }
        for (i, row) in self.weights.iter().enumerate() {
            if row.len() != nj {
                return Err(SgiaError::InvalidTemplate(format!(
                    "weight row {i} has length {}, expected {nj}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(SgiaError::InvalidTemplate(format!(
                    "weight row {i} sums to {sum}, expected 1"
                )));
            }
            if row.iter().any(|&w| w < -1e-12) {
                return Err(SgiaError::InvalidTemplate(format!("weight row {i} has negative entries")));
            }
        }
        if let Some(sd) = &self.shape_dirs {
            if sd.len() != nv * self.n_beta {
                return Err(SgiaError::InvalidTemplate("shape_dirs length mismatch".into()));
            }
        }
        Ok(())
    }

    /// Apply shape coefficients through the blendshape table when present;
    /// without a table, `beta` is ignored.
    pub fn shaped_vertices(&self, beta: &[f64]) -> Vec<V3> {
        match &self.shape_dirs {
            Some(sd) if !beta.is_empty() => self
                .vertices
                .iter()
                .enumerate()
                .map(|(v, p)| {
                    let mut q = *p;
                    for (b, &coef) in beta.iter().enumerate().take(self.n_beta) {
                        q += sd[v * self.n_beta + b] * coef;
                    }
                    q
                })
                .collect(),
            _ => self.vertices.clone(),
        }
    }

    /// Axis-aligned bounding box of the canonical vertices.
    pub fn aabb(&self) -> (V3, V3) {
        let mut lo = V3::repeat(f64::INFINITY);
        let mut hi = V3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            for i in 0..3 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        (lo, hi)
    }

    /// Area-weighted vertex normals of an arbitrary vertex buffer sharing this
    /// template's faces.
    pub fn compute_vertex_normals(&self, verts: &[V3]) -> Vec<V3> {
        vertex_normals(verts, &self.faces)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let tpl: SkinnedTemplate = serde_json::from_reader(std::io::BufReader::new(f))?;
        tpl.validate()?;
        Ok(tpl)
    }
}

/// Area-weighted vertex normals; degenerate faces contribute nothing and
/// unsupported vertices fall back to +z.
pub fn vertex_normals(verts: &[V3], faces: &[[u32; 3]]) -> Vec<V3> {
    let mut acc = vec![V3::zeros(); verts.len()];
    for f in faces {
        let (a, b, c) = (f[0] as usize, f[1] as usize, f[2] as usize);
        let n = (verts[b] - verts[a]).cross(&(verts[c] - verts[a]));
        if n.norm() < 1e-12 {
            continue;
        }
        acc[a] += n;
        acc[b] += n;
        acc[c] += n;
    }
    acc.iter()
        .map(|n| if n.norm() > 1e-12 { n.normalize() } else { V3::new(0.0, 0.0, 1.0) })
        .collect()
}
