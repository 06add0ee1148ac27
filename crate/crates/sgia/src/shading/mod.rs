//! Split-sum image-based lighting: prefiltered environment cubemap, DFG
//! lookup table, and per-surfel PBR shading with analytic gradients.

mod cubemap;
mod dfg;
mod env;
mod mc;
mod sampling;

pub use cubemap::{dir_to_face_uv, face_uv_to_dir, nearest_texel, sample_bilinear, texel_dir, texel_index};
pub use dfg::{bake_dfg_lut, DfgLut, DfgSample, DFG_RES};
pub use env::{env_from_equirect, env_to_equirect, EnvGrads, EnvironmentLight, SPEC_MIPS};
pub use mc::{mc_reference_shade, mc_reference_shade_split};
pub use sampling::{cosine_sample, to_world};

use crate::core::R_MIN;
use crate::math::V3;
use crate::{Result, SgiaError};
use env::{DiffQuery, SpecQuery};

/// Material and geometry inputs of one shading evaluation.
#[derive(Debug, Clone)]
pub struct BrdfParams {
    pub albedo: V3,
    pub roughness: f64,
    pub metallic: f64,
    /// Unit surface normal.
    pub normal: V3,
    /// Unit direction toward the viewer.
    pub view: V3,
}

impl BrdfParams {
    /// Metalness-workflow Fresnel reflectance at normal incidence.
    pub fn f0(&self) -> V3 {
        V3::new(0.04, 0.04, 0.04) * (1.0 - self.metallic) + self.albedo * self.metallic
    }
}

/// Retained intermediates of [`shade_surfel`] for the backward pass.
pub struct ShadeCtx {
    diff: DiffQuery,
    spec: SpecQuery,
    lut: DfgSample,
    nv_raw: f64,
    nv_clamped: bool,
    r_clamped: bool,
    /// Visibility applied to the diffuse term (1 unless the
    /// occluded-diffuse ablation is active).
    diff_vis: f64,
}

/// Split-sum shading: diffuse irradiance plus occlusion-gated prefiltered
/// specular. `ao` is the baked occlusion fraction (1 = fully occluded).
pub fn shade_surfel(p: &BrdfParams, env: &EnvironmentLight, lut: &DfgLut, ao: f64) -> Result<(V3, ShadeCtx)> {
    shade_surfel_opts(p, env, lut, ao, false)
}

/// [`shade_surfel`] with the ablation switch that also gates the diffuse
/// term by `1 - ao` (the reference model occludes specular only).
pub fn shade_surfel_opts(
    p: &BrdfParams,
    env: &EnvironmentLight,
    lut: &DfgLut,
    ao: f64,
    occlude_diffuse: bool,
) -> Result<(V3, ShadeCtx)> {
    if (p.normal.norm() - 1.0).abs() > 1e-3 {
        return Err(SgiaError::InvalidInput("shading normal is not unit length".into()));
    }
    let n = p.normal;
    let wo = p.view;
    let r = p.roughness.clamp(R_MIN, 1.0);
    let nv_raw = n.dot(&wo);
    let nv = nv_raw.clamp(1e-4, 1.0);
    let refl = n * (2.0 * nv_raw) - wo;
    let diff = env.sample_diffuse(&n);
    let spec = env.sample_specular(&refl, r);
    let lut_s = lut.lookup(nv, r);
    let f0 = p.f0();
    let kd = p.albedo * (1.0 - p.metallic);
    let diff_vis = if occlude_diffuse { 1.0 - ao } else { 1.0 };
    let mut out = V3::zeros();
    for c in 0..3 {
        let ld = diff_vis * kd[c] * diff.value[c];
        let ls = (f0[c] * lut_s.scale + lut_s.bias) * spec.value[c];
        out[c] = ld + (1.0 - ao) * ls;
    }
    Ok((
        out,
        ShadeCtx {
            diff,
            spec,
            lut: lut_s,
            nv_raw,
            nv_clamped: !(1e-4..=1.0).contains(&nv_raw),
            r_clamped: !(R_MIN..=1.0).contains(&p.roughness),
            diff_vis,
        },
    ))
}

/// Gradients of one shading evaluation w.r.t. its material inputs.
#[derive(Debug, Clone, Copy)]
pub struct ShadeGrads {
    pub albedo: V3,
    pub roughness: f64,
    pub metallic: f64,
    pub normal: V3,
    pub view: V3,
}

/// Backward pass of [`shade_surfel`]; environment gradients are scattered
/// onto the prefiltered maps in `env_grads` (fold them to base parameters
/// with [`EnvironmentLight::backward`]).
pub fn shade_backward(p: &BrdfParams, ao: f64, ctx: &ShadeCtx, grad: &V3, env_grads: &mut EnvGrads) -> ShadeGrads {
    let f0 = p.f0();
    let kd_fac = 1.0 - p.metallic;
    let vis = 1.0 - ao;
    let (scale, bias) = (ctx.lut.scale, ctx.lut.bias);

    let mut g_albedo = V3::zeros();
    let mut g_metallic = 0.0;
    let mut g_scale = 0.0;
    let mut g_bias = 0.0;
    let mut g_spec = V3::zeros();
    let mut g_diff = V3::zeros();
    for c in 0..3 {
        let g = grad[c];
        let (dv, sv) = (ctx.diff.value[c], ctx.spec.value[c]);
        g_albedo[c] += g * ctx.diff_vis * kd_fac * dv + g * vis * scale * sv * p.metallic;
        g_metallic += g * (-ctx.diff_vis * p.albedo[c] * dv + vis * scale * sv * (p.albedo[c] - 0.04));
        g_scale += g * vis * f0[c] * sv;
        g_bias += g * vis * sv;
        g_spec[c] = g * vis * (f0[c] * scale + bias);
        g_diff[c] = g * ctx.diff_vis * kd_fac * p.albedo[c];
    }

    // scatter to the prefiltered maps
    for &(level, texel, w) in &ctx.spec.refs {
        for c in 0..3 {
            env_grads.mips[level][3 * texel + c] += w * g_spec[c];
        }
    }
    for k in 0..4 {
        for c in 0..3 {
            env_grads.diffuse[3 * ctx.diff.idx[k] + c] += ctx.diff.w[k] * g_diff[c];
        }
    }

    let g_roughness = if ctx.r_clamped {
        0.0
    } else {
        g_spec.dot(&ctx.spec.dr) + g_scale * ctx.lut.dscale_dr + g_bias * ctx.lut.dbias_dr
    };

    // normal and view: diffuse query direction, reflected specular
    // direction refl = 2(n.v)n - v, and the n·v entering the DFG lookup
    let mut g_normal = ctx.diff.ddir.transpose() * g_diff;
    let g_refl = ctx.spec.ddir.transpose() * g_spec;
    g_normal += (p.view * p.normal.dot(&g_refl) + g_refl * ctx.nv_raw) * 2.0;
    let mut g_view = p.normal * (2.0 * p.normal.dot(&g_refl)) - g_refl;
    if !ctx.nv_clamped {
        let g_nv = g_scale * ctx.lut.dscale_dnv + g_bias * ctx.lut.dbias_dnv;
        g_normal += p.view * g_nv;
        g_view += p.normal * g_nv;
    }

    ShadeGrads {
        albedo: g_albedo,
        roughness: g_roughness,
        metallic: g_metallic,
        normal: g_normal,
        view: g_view,
    }
}

#[cfg(test)]
mod tests;
