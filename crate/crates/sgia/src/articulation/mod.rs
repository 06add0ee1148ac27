//! Articulation: linear blend skinning with learnable per-surfel weight
//! offsets and pose-conditioned latent bones.
//!
//! Blending sums rigid transforms component-wise; the blended linear part is
//! projected back to SO(3) by polar decomposition before it is applied to the
//! surfel rotation. Positions use the raw blended affine map.

mod net;

pub use net::{latent_bones, latent_bones_backward, LatentCtx, LatentBoneNet};

use crate::core::{Pose, SkinnedTemplate, SkinningGrid, SurfelSet, N_LATENT};
use crate::math::{axis_angle_to_matrix, polar_backward, polar_rotation, M3, V3};
use crate::{Result, SgiaError};

/// Rotation + translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid {
    pub rot: M3,
    pub t: V3,
}

impl Rigid {
    pub fn identity() -> Self {
        Rigid {
            rot: M3::identity(),
            t: V3::zeros(),
        }
    }

    pub fn compose(&self, other: &Rigid) -> Rigid {
        Rigid {
            rot: self.rot * other.rot,
            t: self.rot * other.t + self.t,
        }
    }

    pub fn apply(&self, p: &V3) -> V3 {
        self.rot * p + self.t
    }
}

/// Template bone transforms plus latent bones for one pose.
#[derive(Debug, Clone)]
pub struct BoneSet {
    /// Canonical-to-posed transforms, one per template joint.
    pub bones: Vec<Rigid>,
    pub latent: Vec<Rigid>,
}

impl BoneSet {
    /// Template bones with identity latent bones.
    pub fn rigid_only(bones: Vec<Rigid>) -> Self {
        BoneSet {
            bones,
            latent: vec![Rigid::identity(); N_LATENT],
        }
    }
}

/// Per-joint canonical-to-posed transforms from chained local rotations.
///
/// Joint `i` rotates by `axis-angle theta[3i..3i+3]` about its rest position
/// within its parent's frame; the root additionally carries the global
/// translation.
pub fn forward_kinematics(tpl: &SkinnedTemplate, pose: &Pose) -> Result<Vec<Rigid>> {
    pose.validate(tpl.joints.len())?;
    let n = tpl.joints.len();
    let mut world: Vec<Rigid> = Vec::with_capacity(n);
    for i in 0..n {
        let rot = axis_angle_to_matrix(&V3::new(pose.theta[3 * i], pose.theta[3 * i + 1], pose.theta[3 * i + 2]));
        let local = match tpl.parents[i] {
            -1 => Rigid {
                rot,
                t: tpl.joints[i] + pose.translation,
            },
            p => Rigid {
                rot,
                t: tpl.joints[i] - tpl.joints[p as usize],
            },
        };
        let w = match tpl.parents[i] {
            -1 => local,
            p => world[p as usize].compose(&local),
        };
        world.push(w);
    }
    Ok(world
        .iter()
        .zip(&tpl.joints)
        .map(|(w, j)| Rigid {
            rot: w.rot,
            t: w.t - w.rot * j,
        })
        .collect())
}

struct SurfelCtx {
    /// Gradient of each grid-sampled template weight w.r.t. the canonical position.
    w_grad: Vec<V3>,
    /// Raw blended linear part of the affine map.
    m: M3,
    /// Polar projection of `m`.
    q: M3,
}

/// Posed surfel geometry with retained state for the backward pass.
pub struct ArticulationOutput {
    pub positions: Vec<V3>,
    /// Re-orthonormalized posed rotations `R* = polar(A) R`.
    pub rotations: Vec<M3>,
    ctx: Vec<SurfelCtx>,
}

impl ArticulationOutput {
    /// The blend's own rotation `polar(A)`, without the canonical rotation.
    pub fn blend_rotation(&self, k: usize) -> &M3 {
        &self.ctx[k].q
    }
}

/// Pose canonical surfels: `A_k = sum_i (W_i(p_k) + dW_ki) B_i + sum_j wt_kj Btilde_j`.
pub fn articulate(surfels: &SurfelSet, grid: &SkinningGrid, bones: &BoneSet) -> Result<ArticulationOutput> {
    let nb = bones.bones.len();
    if surfels.n_bones != nb {
        return Err(SgiaError::ShapeMismatch(format!(
            "surfel weight offsets cover {} bones, bone set has {nb}",
            surfels.n_bones
        )));
    }
    if bones.latent.len() != N_LATENT {
        return Err(SgiaError::ShapeMismatch("latent bone count mismatch".into()));
    }
    let n = surfels.len();
    let mut positions = Vec::with_capacity(n);
    let mut rotations = Vec::with_capacity(n);
    let mut ctx = Vec::with_capacity(n);
    for s in &surfels.surfels {
        let (w_base, w_grad) = grid.query_with_grad(&s.position);
        if w_base.len() != nb {
            return Err(SgiaError::ShapeMismatch("skinning grid joint count mismatch".into()));
        }
        let mut m = M3::zeros();
        let mut t = V3::zeros();
        for (i, b) in bones.bones.iter().enumerate() {
            let w = w_base[i] + s.dw[i];
            m += b.rot * w;
            t += b.t * w;
        }
        for (j, b) in bones.latent.iter().enumerate() {
            m += b.rot * s.wt[j];
            t += b.t * s.wt[j];
        }
        if s.dw.iter().any(|d| d.abs() > 1.0) {
            log::warn!("surfel weight offset exceeds 1 in magnitude");
        }
        let q = polar_rotation(&m);
        positions.push(m * s.position + t);
        rotations.push(q * s.rotation());
        ctx.push(SurfelCtx { w_grad, m, q });
    }
    Ok(ArticulationOutput {
        positions,
        rotations,
        ctx,
    })
}

/// Gradient of a rigid transform's components.
#[derive(Debug, Clone, Copy)]
pub struct RigidGrad {
    pub rot: M3,
    pub t: V3,
}

impl RigidGrad {
    pub fn zeros() -> Self {
        RigidGrad {
            rot: M3::zeros(),
            t: V3::zeros(),
        }
    }
}

/// Gradients w.r.t. canonical surfel geometry and the articulation parameters.
pub struct ArticulationGrads {
    pub position: Vec<V3>,
    /// `dL/dR_k` for the canonical rotation matrix.
    pub rotation: Vec<M3>,
    pub dw: Vec<Vec<f64>>,
    pub wt: Vec<[f64; N_LATENT]>,
    pub latent: Vec<RigidGrad>,
}

/// Pull gradients on posed positions/rotations back through the blend.
pub fn articulate_backward(
    surfels: &SurfelSet,
    bones: &BoneSet,
    out: &ArticulationOutput,
    grad_pos: &[V3],
    grad_rot: &[M3],
) -> Result<ArticulationGrads> {
    let n = surfels.len();
    if grad_pos.len() != n || grad_rot.len() != n || out.ctx.len() != n {
        return Err(SgiaError::ShapeMismatch("articulation gradient length mismatch".into()));
    }
    let nb = bones.bones.len();
    let mut g = ArticulationGrads {
        position: vec![V3::zeros(); n],
        rotation: vec![M3::zeros(); n],
        dw: vec![vec![0.0; nb]; n],
        wt: vec![[0.0; N_LATENT]; n],
        latent: vec![RigidGrad::zeros(); N_LATENT],
    };
    for (k, s) in surfels.surfels.iter().enumerate() {
        let c = &out.ctx[k];
        let gp = grad_pos[k];
        // R* = Q R  =>  dL/dQ = dL/dR* R^T, dL/dR = Q^T dL/dR*
        let gq = grad_rot[k] * s.rotation().transpose();
        g.rotation[k] = c.q.transpose() * grad_rot[k];
        // p* = M p + t  =>  dL/dM gets the outer product, plus the polar pullback
        let dm = gp * s.position.transpose() + polar_backward(&c.m, &c.q, &gq);
        g.position[k] = c.m.transpose() * gp;
        for (i, b) in bones.bones.iter().enumerate() {
            let dwi = dm.dot(&b.rot) + gp.dot(&b.t);
            g.dw[k][i] = dwi;
            // grid weights move with the canonical position
            g.position[k] += c.w_grad[i] * dwi;
        }
        for (j, b) in bones.latent.iter().enumerate() {
            g.wt[k][j] = dm.dot(&b.rot) + gp.dot(&b.t);
            g.latent[j].rot += dm * s.wt[j];
            g.latent[j].t += gp * s.wt[j];
        }
    }
    Ok(g)
}

/// Posed template mesh used for occlusion baking.
pub struct PosedMesh {
    pub vertices: Vec<V3>,
    pub normals: Vec<V3>,
}

/// Deform the template mesh with its own weight rows (template joints only;
/// latent bones model offsets the bare template should not follow) and
/// recompute face-averaged vertex normals.
pub fn pose_template(tpl: &SkinnedTemplate, bones: &BoneSet, beta: &[f64]) -> Result<PosedMesh> {
    if bones.bones.len() != tpl.joints.len() {
        return Err(SgiaError::ShapeMismatch("bone count does not match template joints".into()));
    }
    let rest = tpl.shaped_vertices(beta);
    let vertices: Vec<V3> = rest
        .iter()
        .zip(&tpl.weights)
        .map(|(v, row)| {
            let mut m = M3::zeros();
            let mut t = V3::zeros();
            for (i, b) in bones.bones.iter().enumerate() {
                m += b.rot * row[i];
                t += b.t * row[i];
            }
            m * v + t
        })
        .collect();
    let normals = tpl.compute_vertex_normals(&vertices);
    Ok(PosedMesh { vertices, normals })
}

#[cfg(test)]
mod tests;
