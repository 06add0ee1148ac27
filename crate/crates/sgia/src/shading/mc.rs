//! Monte-Carlo reference integrator (test oracle only): multiple importance
//! sampling over the cosine and GGX lobes against the base environment map.

use super::cubemap::sample_bilinear;
use super::env::EnvironmentLight;
use super::sampling::{
    cosine_pdf, cosine_sample, fresnel_weight, ggx_d, ggx_pdf_light, ggx_sample_half, hammersley, smith_g, to_world,
};
use super::BrdfParams;
use crate::core::R_MIN;
use crate::math::V3;
use crate::{Result, SgiaError};
use std::f64::consts::PI;

/// Direct estimate of the outgoing radiance, split into (diffuse, specular).
pub fn mc_reference_shade_split(p: &BrdfParams, env: &EnvironmentLight, samples: usize) -> Result<(V3, V3)> {
    if samples < 1 {
        return Err(SgiaError::InvalidInput("reference shading needs at least one sample".into()));
    }
    let n = p.normal;
    let v = p.view;
    let nv = n.dot(&v).max(1e-6);
    let r = p.roughness.clamp(R_MIN, 1.0);
    let alpha = r * r;
    let kd = p.albedo * (1.0 - p.metallic);
    let f0 = p.f0();
    let radiance = env.radiance();

    let mut diffuse = V3::zeros();
    let mut specular = V3::zeros();
    let mut accumulate = |l: V3, pdf_used: f64| {
        let nl = n.dot(&l);
        if nl <= 0.0 || pdf_used <= 1e-12 {
            return;
        }
        let h = (v + l).normalize();
        let (nh, vh) = (n.dot(&h), v.dot(&h));
        // balance heuristic over the two strategies
        let pdf_sum = cosine_pdf(nl) + ggx_pdf_light(nh, vh, alpha);
        let mis = pdf_used / pdf_sum.max(1e-12);
        let li = sample_bilinear(&radiance, env.res, &l).value;
        let w = mis / pdf_used * nl;
        diffuse += li.component_mul(&(kd / PI)) * w;
        let d = ggx_d(nh, alpha);
        let g = smith_g(nv, nl, alpha);
        let fc = fresnel_weight(vh);
        let fr = f0 * (1.0 - fc) + V3::new(fc, fc, fc);
        specular += li.component_mul(&fr) * (d * g / (4.0 * nv * nl).max(1e-9) * w);
    };

    for s in 0..samples {
        let (x1, x2) = hammersley(s, samples);
        let l = to_world(&cosine_sample(x1, x2), &n);
        accumulate(l, cosine_pdf(n.dot(&l)));
    }
    for s in 0..samples {
        let (x1, x2) = hammersley(s, samples);
        let h = to_world(&ggx_sample_half(x1, x2, alpha), &n);
        let l = h * (2.0 * v.dot(&h)) - v;
        accumulate(l, ggx_pdf_light(n.dot(&h), v.dot(&h), alpha));
    }
    Ok((diffuse / samples as f64, specular / samples as f64))
}

/// Sum of both components of [`mc_reference_shade_split`].
pub fn mc_reference_shade(p: &BrdfParams, env: &EnvironmentLight, samples: usize) -> Result<V3> {
    let (d, s) = mc_reference_shade_split(p, env, samples)?;
    Ok(d + s)
}
