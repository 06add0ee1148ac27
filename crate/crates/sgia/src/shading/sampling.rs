//! Quasi-random sequences and GGX microfacet terms shared by the prefilter,
//! the DFG bake, and the Monte-Carlo reference integrator.

use crate::math::{orthonormal_basis, V3};
use std::f64::consts::PI;

/// Van der Corput radical inverse in base 2.
fn radical_inverse(mut bits: u32) -> f64 {
    bits = (bits << 16) | (bits >> 16);
    bits = ((bits & 0x55555555) << 1) | ((bits & 0xAAAAAAAA) >> 1);
    bits = ((bits & 0x33333333) << 2) | ((bits & 0xCCCCCCCC) >> 2);
    bits = ((bits & 0x0F0F0F0F) << 4) | ((bits & 0xF0F0F0F0) >> 4);
    bits = ((bits & 0x00FF00FF) << 8) | ((bits & 0xFF00FF00) >> 8);
    bits as f64 * 2.328_306_436_538_696e-10
}

/// The i-th point of an n-point Hammersley set in the unit square.
pub fn hammersley(i: usize, n: usize) -> (f64, f64) {
    (i as f64 / n as f64, radical_inverse(i as u32))
}

/// GGX half-vector sample in the local frame (+z up), `alpha = roughness^2`.
pub fn ggx_sample_half(xi1: f64, xi2: f64, alpha: f64) -> V3 {
    let phi = 2.0 * PI * xi1;
    let cos_theta = ((1.0 - xi2) / (1.0 + (alpha * alpha - 1.0) * xi2)).sqrt();
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    V3::new(phi.cos() * sin_theta, phi.sin() * sin_theta, cos_theta)
}

/// Cosine-weighted hemisphere sample in the local frame (+z up).
pub fn cosine_sample(xi1: f64, xi2: f64) -> V3 {
    let phi = 2.0 * PI * xi1;
    let r = xi2.sqrt();
    V3::new(phi.cos() * r, phi.sin() * r, (1.0 - xi2).max(0.0).sqrt())
}

/// Rotate a +z-up local vector into the hemisphere around `n`.
pub fn to_world(local: &V3, n: &V3) -> V3 {
    let (t, b) = orthonormal_basis(n);
    t * local.x + b * local.y + n * local.z
}

/// GGX normal distribution.
pub fn ggx_d(nh: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let d = nh * nh * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d).max(1e-12)
}

/// Separable Smith-Schlick visibility with the split-sum `k = alpha / 2`.
pub fn smith_g(nv: f64, nl: f64, alpha: f64) -> f64 {
    let k = alpha / 2.0;
    let g1 = |x: f64| x / (x * (1.0 - k) + k).max(1e-12);
    g1(nv.max(0.0)) * g1(nl.max(0.0))
}

/// Schlick Fresnel weight `(1 - cos)^5`.
pub fn fresnel_weight(cos: f64) -> f64 {
    (1.0 - cos).clamp(0.0, 1.0).powi(5)
}

/// Probability density of [`ggx_sample_half`] converted to the light
/// direction (divide by the half-vector Jacobian `4 (v.h)`).
pub fn ggx_pdf_light(nh: f64, vh: f64, alpha: f64) -> f64 {
    ggx_d(nh, alpha) * nh.max(0.0) / (4.0 * vh.abs()).max(1e-12)
}

/// Cosine-hemisphere pdf for a light direction.
pub fn cosine_pdf(nl: f64) -> f64 {
    nl.max(0.0) / PI
}
