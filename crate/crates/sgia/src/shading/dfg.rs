//! Pre-integrated specular BRDF table over (n·v, roughness).

use super::sampling::{fresnel_weight, ggx_sample_half, hammersley, smith_g};
use crate::core::R_MIN;
use crate::math::V3;
use rayon::prelude::*;

pub const DFG_RES: usize = 64;
const DFG_SAMPLES: usize = 1024;

/// Fresnel split of the specular pre-integral: `integral = F0 * scale + bias`.
#[derive(Debug, Clone)]
pub struct DfgLut {
    /// `[scale, bias]` per entry, row-major over (n·v, roughness).
    data: Vec<[f64; 2]>,
}

fn integrate_entry(nv: f64, roughness: f64) -> [f64; 2] {
    let alpha = roughness * roughness;
    let v = V3::new((1.0 - nv * nv).max(0.0).sqrt(), 0.0, nv);
    let mut scale = 0.0;
    let mut bias = 0.0;
    for s in 0..DFG_SAMPLES {
        let (x1, x2) = hammersley(s, DFG_SAMPLES);
        let h = ggx_sample_half(x1, x2, alpha);
        let vh = v.dot(&h);
        let l = h * (2.0 * vh) - v;
        if l.z <= 0.0 {
            continue;
        }
        let g = smith_g(nv, l.z, alpha);
        // importance-sampled estimator of the split integral
        let g_vis = g * vh.max(0.0) / (h.z * nv).max(1e-9);
        let fc = fresnel_weight(vh);
        scale += (1.0 - fc) * g_vis;
        bias += fc * g_vis;
    }
    [
        (scale / DFG_SAMPLES as f64).clamp(0.0, 1.0),
        (bias / DFG_SAMPLES as f64).clamp(0.0, 1.0),
    ]
}

/// Bake the full table; entry (i, j) covers `n·v = (i+0.5)/res` and
/// `roughness = r_min + (1 - r_min)(j+0.5)/res`.
pub fn bake_dfg_lut() -> DfgLut {
    let data = (0..DFG_RES * DFG_RES)
        .into_par_iter()
        .map(|e| {
            let i = e % DFG_RES;
            let j = e / DFG_RES;
            let nv = (i as f64 + 0.5) / DFG_RES as f64;
            let r = R_MIN + (1.0 - R_MIN) * (j as f64 + 0.5) / DFG_RES as f64;
            integrate_entry(nv, r)
        })
        .collect();
    DfgLut { data }
}

/// Bilinear lookup with derivatives w.r.t. both coordinates.
#[derive(Debug, Clone, Copy)]
pub struct DfgSample {
    pub scale: f64,
    pub bias: f64,
    pub dscale_dnv: f64,
    pub dbias_dnv: f64,
    pub dscale_dr: f64,
    pub dbias_dr: f64,
}

impl DfgLut {
    pub fn lookup(&self, nv: f64, roughness: f64) -> DfgSample {
        let res = DFG_RES as f64;
        let x = nv * res - 0.5;
        let y = (roughness - R_MIN) / (1.0 - R_MIN) * res - 0.5;
        let xc = x.clamp(0.0, res - 1.0);
        let yc = y.clamp(0.0, res - 1.0);
        let i0 = (xc as usize).min(DFG_RES - 2);
        let j0 = (yc as usize).min(DFG_RES - 2);
        let fx = xc - i0 as f64;
        let fy = yc - j0 as f64;
        let at = |i: usize, j: usize| self.data[j * DFG_RES + i];
        let (e00, e10, e01, e11) = (at(i0, j0), at(i0 + 1, j0), at(i0, j0 + 1), at(i0 + 1, j0 + 1));
        let lerp2 = |k: usize| {
            let v0 = e00[k] * (1.0 - fx) + e10[k] * fx;
            let v1 = e01[k] * (1.0 - fx) + e11[k] * fx;
            (
                v0 * (1.0 - fy) + v1 * fy,
                ((e10[k] - e00[k]) * (1.0 - fy) + (e11[k] - e01[k]) * fy) * res,
                (v1 - v0) * res / (1.0 - R_MIN),
            )
        };
        let ax = (0.0..=res - 1.0).contains(&x);
        let ay = (0.0..=res - 1.0).contains(&y);
        let (scale, dsx, dsy) = lerp2(0);
        let (bias, dbx, dby) = lerp2(1);
        DfgSample {
            scale,
            bias,
            dscale_dnv: if ax { dsx } else { 0.0 },
            dbias_dnv: if ax { dbx } else { 0.0 },
            dscale_dr: if ay { dsy } else { 0.0 },
            dbias_dr: if ay { dby } else { 0.0 },
        }
    }
}
