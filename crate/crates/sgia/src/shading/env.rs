//! Trainable environment light: a base cubemap stored pre-activation
//! (softplus keeps radiance nonnegative), a roughness-indexed specular mip
//! chain, and a diffuse irradiance cubemap.
//!
//! Prefiltering uses fixed Hammersley sample sets baked into sparse linear
//! operators over the activated base texels. Each refresh is a sparse matvec
//! and the gradient of any prefiltered texel w.r.t. the base parameters is
//! exactly the operator transpose, which keeps training deterministic.

use super::cubemap::{nearest_texel, sample_bilinear, texel_dir};
use super::sampling::{cosine_sample, ggx_sample_half, hammersley, to_world};
use crate::core::R_MIN;
use crate::math::{softplus, softplus_inv, M3, V3};
use crate::{Result, SgiaError};
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;

/// Specular mip levels; level L covers roughness `R_MIN + (1-R_MIN) L / 4`.
pub const SPEC_MIPS: usize = 5;
const SPEC_SAMPLES: usize = 256;
const DIFF_SAMPLES: usize = 1024;

fn mip_res(base: usize, level: usize) -> usize {
    (base >> level).max(1)
}

fn mip_roughness(level: usize) -> f64 {
    R_MIN + (1.0 - R_MIN) * level as f64 / (SPEC_MIPS - 1) as f64
}

/// Row-sparse linear map from base-cubemap texels to prefiltered texels;
/// the same weights apply to each color channel.
#[derive(Clone)]
struct SparseOp {
    offsets: Vec<u32>,
    idx: Vec<u32>,
    w: Vec<f64>,
}

impl SparseOp {
    fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    fn apply(&self, src: &[f64], dst: &mut [f64]) {
        for row in 0..self.n_rows() {
            let (lo, hi) = (self.offsets[row] as usize, self.offsets[row + 1] as usize);
            let mut acc = V3::zeros();
            for e in lo..hi {
                let t = self.idx[e] as usize;
                for c in 0..3 {
                    acc[c] += self.w[e] * src[3 * t + c];
                }
            }
            for c in 0..3 {
                dst[3 * row + c] = acc[c];
            }
        }
    }

    fn apply_transpose(&self, grad_out: &[f64], grad_in: &mut [f64]) {
        for row in 0..self.n_rows() {
            let (lo, hi) = (self.offsets[row] as usize, self.offsets[row + 1] as usize);
            for e in lo..hi {
                let t = self.idx[e] as usize;
                for c in 0..3 {
                    grad_in[3 * t + c] += self.w[e] * grad_out[3 * row + c];
                }
            }
        }
    }
}

/// Build one prefilter row: nearest-texel weights of the fixed sample set
/// around direction `n`, normalized to sum to 1.
fn build_row(base_res: usize, n: &V3, samples: &dyn Fn(usize, &V3) -> Option<(V3, f64)>, n_samples: usize) -> Vec<(u32, f64)> {
    let mut acc: HashMap<u32, f64> = HashMap::new();
    let mut total = 0.0;
    for s in 0..n_samples {
        if let Some((dir, wgt)) = samples(s, n) {
            *acc.entry(nearest_texel(base_res, &dir) as u32).or_insert(0.0) += wgt;
            total += wgt;
        }
    }
    if total <= 0.0 {
        return vec![(nearest_texel(base_res, n) as u32, 1.0)];
    }
    let mut row: Vec<(u32, f64)> = acc.into_iter().map(|(i, w)| (i, w / total)).collect();
    row.sort_by_key(|e| e.0);
    row
}

fn build_op(base_res: usize, out_res: usize, sampler: impl Fn(usize, &V3) -> Option<(V3, f64)> + Sync, n_samples: usize) -> SparseOp {
    let rows: Vec<Vec<(u32, f64)>> = (0..6 * out_res * out_res)
        .into_par_iter()
        .map(|t| {
            let face = t / (out_res * out_res);
            let j = (t / out_res) % out_res;
            let i = t % out_res;
            build_row(base_res, &texel_dir(out_res, face, i, j), &sampler, n_samples)
        })
        .collect();
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    let mut idx = Vec::new();
    let mut w = Vec::new();
    offsets.push(0u32);
    for row in rows {
        for (i, v) in row {
            idx.push(i);
            w.push(v);
        }
        offsets.push(idx.len() as u32);
    }
    SparseOp { offsets, idx, w }
}

#[derive(Clone)]
pub struct EnvironmentLight {
    pub res: usize,
    /// Pre-activation texel parameters, `3 * 6 * res * res`, RGB interleaved.
    pub params: Vec<f64>,
    mips: Vec<Vec<f64>>,
    diffuse: Vec<f64>,
    diffuse_res: usize,
    spec_ops: Vec<SparseOp>,
    diff_op: SparseOp,
    dirty: bool,
}

impl EnvironmentLight {
    /// Constant-radiance initialization.
    pub fn new(res: usize, init_radiance: f64) -> Self {
        Self::from_params(res, vec![softplus_inv(init_radiance.max(1e-9)); 6 * res * res * 3]).unwrap()
    }

    pub fn from_params(res: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != 6 * res * res * 3 {
            return Err(SgiaError::ShapeMismatch("environment parameter count mismatch".into()));
        }
        let spec_ops: Vec<SparseOp> = (0..SPEC_MIPS)
            .map(|level| {
                let alpha = mip_roughness(level).powi(2);
                build_op(
                    res,
                    mip_res(res, level),
                    move |s, n| {
                        let (x1, x2) = hammersley(s, SPEC_SAMPLES);
                        let h = to_world(&ggx_sample_half(x1, x2, alpha), n);
                        let l = h * (2.0 * n.dot(&h)) - n;
                        let nl = n.dot(&l);
                        (nl > 0.0).then_some((l, nl))
                    },
                    SPEC_SAMPLES,
                )
            })
            .collect();
        let diffuse_res = (res / 4).max(2);
        let diff_op = build_op(
            res,
            diffuse_res,
            |s, n| {
                let (x1, x2) = hammersley(s, DIFF_SAMPLES);
                Some((to_world(&cosine_sample(x1, x2), n), 1.0))
            },
            DIFF_SAMPLES,
        );
        let mut env = EnvironmentLight {
            res,
            params,
            mips: (0..SPEC_MIPS).map(|l| vec![0.0; 6 * mip_res(res, l).pow(2) * 3]).collect(),
            diffuse: vec![0.0; 6 * diffuse_res * diffuse_res * 3],
            diffuse_res,
            spec_ops,
            diff_op,
            dirty: true,
        };
        env.refresh();
        Ok(env)
    }

    /// Activated base radiance per texel.
    pub fn radiance(&self) -> Vec<f64> {
        self.params.iter().map(|&p| softplus(p)).collect()
    }

    pub fn mark_dirty(&mut self) {
        self.dirty = true;
    }

    /// Recompute prefiltered maps after a parameter change.
    pub fn refresh(&mut self) {
        if !self.dirty {
            return;
        }
        let act = self.radiance();
        for (level, op) in self.spec_ops.iter().enumerate() {
            let mut dst = std::mem::take(&mut self.mips[level]);
            op.apply(&act, &mut dst);
            self.mips[level] = dst;
        }
        self.diff_op.apply(&act, &mut self.diffuse);
        self.dirty = false;
    }

    fn assert_fresh(&self) {
        debug_assert!(!self.dirty, "environment queried before refresh");
    }

    pub fn diffuse_res(&self) -> usize {
        self.diffuse_res
    }

    pub fn mip(&self, level: usize) -> &[f64] {
        &self.mips[level]
    }

    /// Prefiltered-specular query with trilinear interpolation between mips.
    pub fn sample_specular(&self, dir: &V3, roughness: f64) -> SpecQuery {
        self.assert_fresh();
        let level = (roughness.clamp(R_MIN, 1.0) - R_MIN) / (1.0 - R_MIN) * (SPEC_MIPS - 1) as f64;
        let l0 = (level as usize).min(SPEC_MIPS - 2);
        let f = level - l0 as f64;
        let s0 = sample_bilinear(&self.mips[l0], mip_res(self.res, l0), dir);
        let s1 = sample_bilinear(&self.mips[l0 + 1], mip_res(self.res, l0 + 1), dir);
        let dlevel_dr = if (R_MIN..=1.0).contains(&roughness) {
            (SPEC_MIPS - 1) as f64 / (1.0 - R_MIN)
        } else {
            0.0
        };
        let mut refs = Vec::with_capacity(8);
        for k in 0..4 {
            refs.push((l0, s0.idx[k], (1.0 - f) * s0.w[k]));
            refs.push((l0 + 1, s1.idx[k], f * s1.w[k]));
        }
        SpecQuery {
            value: s0.value * (1.0 - f) + s1.value * f,
            refs,
            ddir: s0.ddir * (1.0 - f) + s1.ddir * f,
            dr: (s1.value - s0.value) * dlevel_dr,
        }
    }

    /// Irradiance query.
    pub fn sample_diffuse(&self, n: &V3) -> DiffQuery {
        self.assert_fresh();
        let s = sample_bilinear(&self.diffuse, self.diffuse_res, n);
        DiffQuery {
            value: s.value,
            idx: s.idx,
            w: s.w,
            ddir: s.ddir,
        }
    }

    /// Fold prefiltered-map gradients back to pre-activation parameters.
    pub fn backward(&self, grads: &EnvGrads) -> Vec<f64> {
        let mut g_act = vec![0.0; self.params.len()];
        for (level, op) in self.spec_ops.iter().enumerate() {
            op.apply_transpose(&grads.mips[level], &mut g_act);
        }
        self.diff_op.apply_transpose(&grads.diffuse, &mut g_act);
        g_act
            .iter()
            .zip(&self.params)
            .map(|(&g, &p)| g / (1.0 + (-p).exp()))
            .collect()
    }
}

/// Gradient buffers over the prefiltered (activated) maps.
pub struct EnvGrads {
    pub mips: Vec<Vec<f64>>,
    pub diffuse: Vec<f64>,
}

impl EnvGrads {
    pub fn zeros(env: &EnvironmentLight) -> Self {
        EnvGrads {
            mips: (0..SPEC_MIPS).map(|l| vec![0.0; 6 * mip_res(env.res, l).pow(2) * 3]).collect(),
            diffuse: vec![0.0; env.diffuse.len()],
        }
    }

    pub fn add_assign(&mut self, other: &EnvGrads) {
        for (a, b) in self.mips.iter_mut().zip(&other.mips) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.diffuse.iter_mut().zip(&other.diffuse) {
            *x += y;
        }
    }
}

/// Specular query result with scatter references `(mip level, texel, weight)`.
pub struct SpecQuery {
    pub value: V3,
    pub refs: Vec<(usize, usize, f64)>,
    pub ddir: M3,
    pub dr: V3,
}

pub struct DiffQuery {
    pub value: V3,
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub ddir: M3,
}

/// Sample an equirectangular float image (planar RGB) into a new environment.
pub fn env_from_equirect(data: &[f64], width: usize, height: usize, res: usize) -> Result<EnvironmentLight> {
    if data.len() != width * height * 3 {
        return Err(SgiaError::ShapeMismatch("equirectangular buffer size mismatch".into()));
    }
    let npix = width * height;
    let mut params = vec![0.0; 6 * res * res * 3];
    for face in 0..6 {
        for j in 0..res {
            for i in 0..res {
                let d = texel_dir(res, face, i, j);
                let theta = d.y.clamp(-1.0, 1.0).acos();
                let phi = d.z.atan2(d.x);
                let px = ((phi + PI) / (2.0 * PI) * width as f64 - 0.5).rem_euclid(width as f64);
                let py = (theta / PI * height as f64 - 0.5).clamp(0.0, height as f64 - 1.0);
                let (i0, j0) = ((px as usize).min(width - 1), (py as usize).min(height.saturating_sub(2)));
                let i1 = (i0 + 1) % width;
                let j1 = (j0 + 1).min(height - 1);
                let (fx, fy) = (px - i0 as f64, py - j0 as f64);
                let t = super::cubemap::texel_index(res, face, i, j);
                for c in 0..3 {
                    let at = |x: usize, y: usize| data[c * npix + y * width + x];
                    let v = at(i0, j0) * (1.0 - fx) * (1.0 - fy)
                        + at(i1, j0) * fx * (1.0 - fy)
                        + at(i0, j1) * (1.0 - fx) * fy
                        + at(i1, j1) * fx * fy;
                    params[3 * t + c] = softplus_inv(v.max(1e-9));
                }
            }
        }
    }
    EnvironmentLight::from_params(res, params)
}

/// Render the activated base radiance to an equirectangular planar buffer.
pub fn env_to_equirect(env: &EnvironmentLight, width: usize, height: usize) -> Vec<f64> {
    let act = env.radiance();
    let npix = width * height;
    let mut out = vec![0.0; npix * 3];
    for y in 0..height {
        let theta = PI * (y as f64 + 0.5) / height as f64;
        for x in 0..width {
            let phi = 2.0 * PI * (x as f64 + 0.5) / width as f64 - PI;
            let d = V3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin());
            let s = sample_bilinear(&act, env.res, &d);
            for c in 0..3 {
                out[c * npix + y * width + x] = s.value[c];
            }
        }
    }
    out
}
