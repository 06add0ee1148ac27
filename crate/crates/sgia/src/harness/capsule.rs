//! Built-in "capsule-man" test subject: a chain of bulged capsule segments
//! along +y, one bone per segment, with smoothly blended skinning weights.

use crate::core::SkinnedTemplate;
use crate::math::V3;
use crate::{Result, SgiaError};

/// Parameters of the generated chain.
#[derive(Debug, Clone)]
pub struct CapsuleManSpec {
    /// Number of joints (2..=8); one capsule segment per joint.
    pub n_joints: usize,
    /// Approximate vertex budget (1000..=8000).
    pub target_vertices: usize,
    /// Segment length along +y.
    pub bone_length: f64,
    /// Base tube radius.
    pub radius: f64,
}

impl Default for CapsuleManSpec {
    fn default() -> Self {
        CapsuleManSpec {
            n_joints: 4,
            target_vertices: 2000,
            bone_length: 0.5,
            radius: 0.16,
        }
    }
}

/// Radius profile: a bulge per segment so the chain reads as stacked
/// capsules rather than a straight tube.
fn radius_at(spec: &CapsuleManSpec, y: f64, total: f64) -> f64 {
    let t = (y / spec.bone_length).rem_euclid(1.0);
    let bulge = 0.85 + 0.15 * (std::f64::consts::PI * (2.0 * t - 1.0)).cos();
    // taper smoothly to zero at the two poles
    let cap = spec.radius.min(total * 0.25);
    let from_end = y.min(total - y).max(0.0);
    let taper = if from_end < cap {
        let u = from_end / cap;
        (u * (2.0 - u)).sqrt() // circular cap profile
    } else {
        1.0
    };
    spec.radius * bulge * taper
}

/// Skinning weights at height `y`: a linear ramp between the two bones whose
/// segment midpoints bracket `y`; rigid at the chain ends.
fn weights_at(spec: &CapsuleManSpec, y: f64) -> Vec<f64> {
    let n = spec.n_joints;
    let mut w = vec![0.0; n];
    let mid = |i: usize| (i as f64 + 0.5) * spec.bone_length;
    if y <= mid(0) {
        w[0] = 1.0;
    } else if y >= mid(n - 1) {
        w[n - 1] = 1.0;
    } else {
        let i = (((y / spec.bone_length) - 0.5).floor() as usize).min(n - 2);
        let t = (y - mid(i)) / spec.bone_length;
        w[i] = 1.0 - t;
        w[i + 1] = t;
    }
    w
}

/// Generate the capsule-man template. Vertex count lands near the budget
/// (grid plus two pole vertices).
pub fn capsule_man(spec: &CapsuleManSpec) -> Result<SkinnedTemplate> {
    if !(2..=8).contains(&spec.n_joints) {
        return Err(SgiaError::InvalidInput(format!(
            "capsule-man joint count {} outside 2..=8",
            spec.n_joints
        )));
    }
    if !(1000..=8000).contains(&spec.target_vertices) {
        return Err(SgiaError::InvalidInput(format!(
            "capsule-man vertex budget {} outside 1000..=8000",
            spec.target_vertices
        )));
    }
    let total = spec.n_joints as f64 * spec.bone_length;
    // grid ~ rings x segments with rings/segments ~ aspect of the chain
    let aspect = (total / (2.0 * std::f64::consts::PI * spec.radius)).max(0.5);
    let segs = ((spec.target_vertices as f64 / aspect).sqrt().round() as usize).max(8);
    let rings = ((spec.target_vertices / segs).max(4)).max((2 * spec.n_joints) + 2);

    let mut vertices = Vec::with_capacity(rings * segs + 2);
    let mut weights = Vec::with_capacity(rings * segs + 2);
    for j in 0..rings {
        let y = total * (j as f64 + 0.5) / rings as f64;
        let r = radius_at(spec, y, total);
        for i in 0..segs {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / segs as f64;
            vertices.push(V3::new(r * phi.cos(), y, r * phi.sin()));
            weights.push(weights_at(spec, y));
        }
    }
    // pole vertices close the two ends
    let bottom = vertices.len() as u32;
    vertices.push(V3::new(0.0, 0.0, 0.0));
    weights.push(weights_at(spec, 0.0));
    let top = vertices.len() as u32;
    vertices.push(V3::new(0.0, total, 0.0));
    weights.push(weights_at(spec, total));

    let mut faces = Vec::new();
    let idx = |j: usize, i: usize| (j * segs + i % segs) as u32;
    for j in 0..rings - 1 {
        for i in 0..segs {
            let (a, b) = (idx(j, i), idx(j, i + 1));
            let (c, d) = (idx(j + 1, i), idx(j + 1, i + 1));
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    for i in 0..segs {
        faces.push([idx(0, i), idx(0, i + 1), bottom]);
        faces.push([idx(rings - 1, i), top, idx(rings - 1, i + 1)]);
    }

    let joints: Vec<V3> = (0..spec.n_joints)
        .map(|i| V3::new(0.0, i as f64 * spec.bone_length, 0.0))
        .collect();
    let parents: Vec<i32> = (0..spec.n_joints as i32).map(|i| i - 1).collect();
    let normals = crate::core::vertex_normals(&vertices, &faces);
    SkinnedTemplate::new(vertices, faces, joints, parents, weights, normals)
}
