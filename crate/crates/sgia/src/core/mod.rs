//! Domain types shared by every other module: surfels, poses, cameras, the
//! skinned template, and the baked skinning-weight grid.

mod checkpoint;
mod grid;
mod template;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use grid::{bake_skinning_grid, SkinningGrid};
pub use template::{vertex_normals, SkinnedTemplate};

use crate::math::{orthonormal_basis, quat_to_matrix, M3, V3, V4};
use crate::{Result, SgiaError};
use serde::{Deserialize, Serialize};

/// Floor on roughness; keeps the GGX lobe non-singular in prefiltered queries.
pub const R_MIN: f64 = 0.04;

/// Number of spherical-harmonics coefficients carried per color channel.
/// Degree 2 -> 9 coefficients.
pub const SH_COEFFS: usize = 9;

/// Number of latent bones.
pub const N_LATENT: usize = 4;

/// One PBR-aware 2D Gaussian surfel in canonical space.
///
/// The rotation is stored as a quaternion `(w, x, y, z)`, renormalized after
/// each optimizer step; column 3 of the rotation matrix is the surfel normal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Surfel {
    pub position: V3,
    pub quat: V4,
    /// Tangential standard deviations `(s_u, s_v)` in scene units.
    pub scale: [f64; 2],
    pub opacity: f64,
    /// SH radiance coefficients, `sh[coeff][channel]`. The DC entry is stored
    /// directly in color units (mean radiance).
    pub sh: [[f64; 3]; SH_COEFFS],
    pub albedo: V3,
    pub roughness: f64,
    pub metallic: f64,
    /// Learnable blend-weight offsets, one per template joint.
    pub dw: Vec<f64>,
    /// Latent-bone blend weights.
    pub wt: [f64; N_LATENT],
}

impl Surfel {
    pub fn rotation(&self) -> M3 {
        quat_to_matrix(&self.quat)
    }

    pub fn normal(&self) -> V3 {
        self.rotation().column(2).into()
    }
}

/// The full canonical surfel set plus metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfelSet {
    pub surfels: Vec<Surfel>,
    /// Active SH degree (0..=2); coefficients above it stay zero.
    pub sh_degree: usize,
    pub n_bones: usize,
}

impl SurfelSet {
    pub fn len(&self) -> usize {
        self.surfels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfels.is_empty()
    }

    /// Reproject every surfel onto its invariant set: unit quaternion,
    /// positive scales, clamped opacity and material ranges.
    pub fn clamp_invariants(&mut self) {
        for s in &mut self.surfels {
            let n = s.quat.norm();
            if n > 1e-12 {
                s.quat /= n;
            } else {
                s.quat = V4::new(1.0, 0.0, 0.0, 0.0);
            }
            s.scale[0] = s.scale[0].max(1e-8);
            s.scale[1] = s.scale[1].max(1e-8);
            s.opacity = s.opacity.clamp(0.0, 1.0);
            for c in 0..3 {
                s.albedo[c] = s.albedo[c].clamp(0.0, 1.0);
            }
            s.roughness = s.roughness.clamp(R_MIN, 1.0);
            s.metallic = s.metallic.clamp(0.0, 1.0);
        }
    }
}

/// Per-joint axis-angle pose plus a root translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Length `3 * K` where `K` is the template joint count.
    pub theta: Vec<f64>,
    pub translation: V3,
    /// Shape coefficients; zero-filled when absent from a pose file.
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl Pose {
    pub fn rest(n_joints: usize) -> Self {
        Pose {
            theta: vec![0.0; 3 * n_joints],
            translation: V3::zeros(),
            beta: Vec::new(),
        }
    }

    pub fn n_joints(&self) -> usize {
        self.theta.len() / 3
    }

    pub fn joint_rotation(&self, i: usize) -> V3 {
        V3::new(self.theta[3 * i], self.theta[3 * i + 1], self.theta[3 * i + 2])
    }

    pub fn validate(&self, n_joints: usize) -> Result<()> {
        if self.theta.len() != 3 * n_joints {
            return Err(SgiaError::ShapeMismatch(format!(
                "pose has {} joint parameters, template expects {}",
                self.theta.len(),
                3 * n_joints
            )));
        }
        if !self.theta.iter().all(|t| t.is_finite()) || !self.translation.iter().all(|t| t.is_finite()) {
            return Err(SgiaError::NonFinite("pose parameters".into()));
        }
        Ok(())
    }

    /// Hash of the exact bit pattern; used as the AO cache key.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |bits: u64| {
            h ^= bits;
            h = h.wrapping_mul(0x100000001b3);
        };
        for t in &self.theta {
            mix(t.to_bits());
        }
        for t in self.translation.iter() {
            mix(t.to_bits());
        }
        for b in &self.beta {
            mix(b.to_bits());
        }
        h
    }
}

/// Pinhole camera with a world-to-camera rigid transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation.
    pub rot: M3,
    /// World-to-camera translation (`x_cam = rot * x_world + trans`).
    pub trans: V3,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(SgiaError::InvalidInput("camera focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SgiaError::InvalidInput("camera image size must be >= 1".into()));
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> V3 {
        -(self.rot.transpose() * self.trans)
    }

    pub fn to_camera(&self, p_world: &V3) -> V3 {
        self.rot * p_world + self.trans
    }

    pub fn to_world_dir(&self, d_cam: &V3) -> V3 {
        self.rot.transpose() * d_cam
    }

    /// World-space ray direction through pixel center `(px, py)`, scaled so
    /// its camera-space z component is 1. The intersection parameter `t`
    /// along this ray equals camera depth.
    pub fn ray_dir(&self, px: usize, py: usize) -> V3 {
        let d_cam = V3::new(
            (px as f64 + 0.5 - self.cx) / self.fx,
            (py as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        self.rot.transpose() * d_cam
    }

    /// Camera-space direction of pixel `(px, py)` with z = 1.
    pub fn pixel_dir_cam(&self, px: f64, py: f64) -> V3 {
        V3::new((px + 0.5 - self.cx) / self.fx, (py + 0.5 - self.cy) / self.fy, 1.0)
    }

    /// Project a world point to pixel coordinates and depth.
    pub fn project(&self, p_world: &V3) -> Option<(f64, f64, f64)> {
        let pc = self.to_camera(p_world);
        if pc.z <= 1e-9 {
            return None;
        }
        Some((
            self.fx * pc.x / pc.z + self.cx - 0.5,
            self.fy * pc.y / pc.z + self.cy - 0.5,
            pc.z,
        ))
    }

    /// A simple look-at constructor (camera at `eye`, +z toward `target`).
    pub fn look_at(eye: V3, target: V3, up: V3, fov_deg: f64, width: usize, height: usize) -> Self {
        let fwd = (target - eye).normalize();
        let right = fwd.cross(&up).normalize();
        let down = fwd.cross(&right);
        let rot = M3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
        let trans = -(rot * eye);
        let f = 0.5 * width as f64 / (fov_deg.to_radians() * 0.5).tan();
        Camera {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rot,
            trans,
        }
    }
}

/// Build one surfel per template vertex.
///
/// The surfel normal is the vertex normal, scales start at the mean
/// nearest-neighbor vertex distance, and all learnable offsets start at zero.
pub fn init_surfels_from_template(tpl: &SkinnedTemplate) -> Result<SurfelSet> {
    if tpl.vertices.len() < 4 {
        return Err(SgiaError::InvalidTemplate(format!(
            "need >= 4 vertices, got {}",
            tpl.vertices.len()
        )));
    }
    for (i, n) in tpl.normals.iter().enumerate() {
        if n.norm() < 1e-9 {
            return Err(SgiaError::InvalidTemplate(format!(
                "vertex {i} has a degenerate (zero-length) normal"
            )));
        }
    }
    let s0 = mean_nearest_neighbor_distance(&tpl.vertices);
    let n_bones = tpl.joints.len();
    let surfels = tpl
        .vertices
        .iter()
        .zip(&tpl.normals)
        .map(|(p, n)| {
            let n = n.normalize();
            let (tu, tv) = orthonormal_basis(&n);
            let r = M3::from_columns(&[tu, tv, n]);
            let quat = matrix_to_quat(&r);
            let mut sh = [[0.0; 3]; SH_COEFFS];
            sh[0] = [0.5, 0.5, 0.5];
            Surfel {
                position: *p,
                quat,
                scale: [s0, s0],
                opacity: 0.5,
                sh,
                albedo: V3::new(0.5, 0.5, 0.5),
                roughness: 0.5,
                metallic: 0.0,
                dw: vec![0.0; n_bones],
                wt: [0.0; N_LATENT],
            }
        })
        .collect();
    Ok(SurfelSet {
        surfels,
        sh_degree: 2,
        n_bones,
    })
}

/// Mean over vertices of the distance to each vertex's nearest neighbor.
pub fn mean_nearest_neighbor_distance(pts: &[V3]) -> f64 {
    use rayon::prelude::*;
    let total: f64 = pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = f64::INFINITY;
            for (j, q) in pts.iter().enumerate() {
                if i != j {
                    best = best.min((p - q).norm_squared());
                }
            }
            best.sqrt()
        })
        .sum();
    total / pts.len() as f64
}

/// Quaternion `(w, x, y, z)` of a rotation matrix (Shepperd's method).
pub fn matrix_to_quat(r: &M3) -> V4 {
    let tr = r.trace();
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        V4::new(
            0.25 * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        )
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        V4::new(
            (r[(2, 1)] - r[(1, 2)]) / s,
            0.25 * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        )
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        V4::new(
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            0.25 * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        V4::new(
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            0.25 * s,
        )
    };
    q.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::axis_angle_to_matrix;

    fn triangle_template() -> SkinnedTemplate {
        SkinnedTemplate::new(
            vec![V3::new(0.0, 0.0, 0.0), V3::new(1.0, 0.0, 0.0), V3::new(0.0, 2.0, 0.0), V3::new(3.0, 3.0, 0.0)],
            vec![[0, 1, 2]],
            vec![V3::zeros()],
            vec![-1],
            vec![vec![1.0]; 4],
            vec![V3::new(0.0, 0.0, 1.0); 4],
        )
        .unwrap()
    }

    #[test]
    fn init_one_surfel_per_vertex() {
        let tpl = triangle_template();
        let set = init_surfels_from_template(&tpl).unwrap();
        assert_eq!(set.len(), 4);
        for s in &set.surfels {
            assert!((s.normal() - V3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
            assert!(s.dw.iter().all(|&d| d == 0.0));
            assert_eq!(s.opacity, 0.5);
            assert_eq!(s.sh[0], [0.5, 0.5, 0.5]);
        }
    }

    #[test]
    fn init_scale_is_mean_nearest_neighbor_distance() {
        let tpl = triangle_template();
        let set = init_surfels_from_template(&tpl).unwrap();
        // brute-force oracle
        let pts = &tpl.vertices;
        let mut acc = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let mut best = f64::INFINITY;
            for (j, q) in pts.iter().enumerate() {
                if i != j {
                    best = best.min((p - q).norm());
                }
            }
            acc += best;
        }
        let expect = acc / pts.len() as f64;
        assert!((set.surfels[0].scale[0] - expect).abs() < 1e-12);
        assert!((set.surfels[0].scale[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn init_rejects_degenerate_normal() {
        let mut tpl = triangle_template();
        tpl.normals[2] = V3::zeros();
        let err = init_surfels_from_template(&tpl).unwrap_err();
        assert!(err.to_string().contains("vertex 2"));
    }

    #[test]
    fn rotation_invariants_hold() {
        let tpl = triangle_template();
        let mut set = init_surfels_from_template(&tpl).unwrap();
        // simulate a gradient update then reprojection
        for s in &mut set.surfels {
            s.quat += V4::new(0.01, -0.02, 0.03, 0.005);
            s.roughness = -1.0;
            s.opacity = 1.7;
        }
        set.clamp_invariants();
        for s in &set.surfels {
            let r = s.rotation();
            assert!((r.transpose() * r - M3::identity()).norm() < 1e-10);
            let col3: V3 = r.column(2).into();
            let col1: V3 = r.column(1).into();
            let cross = V3::from(r.column(0)).cross(&col1);
            assert!((col3 - cross).norm() < 1e-6);
            assert_eq!(s.roughness, R_MIN);
            assert_eq!(s.opacity, 1.0);
        }
    }

    #[test]
    fn matrix_quat_roundtrip() {
        for k in 0..20 {
            let r = axis_angle_to_matrix(&(V3::new(k as f64, -(k as f64) * 0.3, 1.0 + k as f64 * 0.1) * 0.37));
            let q = matrix_to_quat(&r);
            assert!((quat_to_matrix(&q) - r).norm() < 1e-10);
        }
    }

    #[test]
    fn camera_ray_depth_convention() {
        let cam = Camera::look_at(V3::new(0.0, 0.0, -5.0), V3::zeros(), V3::new(0.0, 1.0, 0.0), 45.0, 64, 64);
        let d = cam.ray_dir(32, 32);
        let p = cam.center() + d * 5.0;
        // marching t=5 along the central ray reaches depth 5
        assert!((cam.to_camera(&p).z - 5.0).abs() < 1e-9);
    }
}
