//! Flat parameter vector over (surfels, latent-bone net, environment) plus
//! the Adam-style optimizer acting on it.

use crate::articulation::LatentBoneNet;
use crate::core::{SurfelSet, N_LATENT, SH_COEFFS};
use crate::math::{M3, V3, V4};
use crate::shading::EnvironmentLight;

/// Learning-rate group of a flat parameter index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Position,
    Rotation,
    Scale,
    Opacity,
    /// SH coefficients and PBR material attributes.
    Appearance,
    /// Blend-weight offsets, latent weights, and the latent-bone net.
    Skinning,
    Env,
    /// Free per-surfel normals (ablation only).
    FreeNormal,
}

/// Index arithmetic for the flat vector. Per-surfel block layout:
/// pos(3) quat(4) scale(2) opacity(1) sh(27) albedo(3) rough(1) metal(1)
/// dw(n_joints) wt(4), followed by net weights, env params, and (optionally)
/// free normals.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub n_surfels: usize,
    pub n_joints: usize,
    pub per_surfel: usize,
    pub net_off: usize,
    pub env_off: usize,
    pub normal_off: usize,
    pub total: usize,
    pub free_normals: bool,
}

impl ParamLayout {
    pub fn new(n_surfels: usize, n_joints: usize, n_net: usize, n_env: usize, free_normals: bool) -> Self {
        let per_surfel = 3 + 4 + 2 + 1 + 3 * SH_COEFFS + 3 + 1 + 1 + n_joints + N_LATENT;
        let net_off = n_surfels * per_surfel;
        let env_off = net_off + n_net;
        let normal_off = env_off + n_env;
        let total = normal_off + if free_normals { 3 * n_surfels } else { 0 };
        ParamLayout {
            n_surfels,
            n_joints,
            per_surfel,
            net_off,
            env_off,
            normal_off,
            total,
            free_normals,
        }
    }

    pub fn group_of(&self, idx: usize) -> Group {
        if idx >= self.normal_off {
            return Group::FreeNormal;
        }
        if idx >= self.env_off {
            return Group::Env;
        }
        if idx >= self.net_off {
            return Group::Skinning;
        }
        match idx % self.per_surfel {
            0..=2 => Group::Position,
            3..=6 => Group::Rotation,
            7..=8 => Group::Scale,
            9 => Group::Opacity,
            i if i < 10 + 3 * SH_COEFFS + 5 => Group::Appearance,
            _ => Group::Skinning,
        }
    }
}

pub fn gather(set: &SurfelSet, net: &LatentBoneNet, env: &EnvironmentLight, normals: Option<&[V3]>) -> (ParamLayout, Vec<f64>) {
    let n_joints = set.surfels.first().map(|s| s.dw.len()).unwrap_or(0);
    let layout = ParamLayout::new(set.len(), n_joints, net.weights.len(), env.params.len(), normals.is_some());
    let mut flat = Vec::with_capacity(layout.total);
    for s in &set.surfels {
        flat.extend(s.position.iter());
        flat.extend(s.quat.iter());
        flat.extend(s.scale);
        flat.push(s.opacity);
        for c in &s.sh {
            flat.extend(c);
        }
        flat.extend(s.albedo.iter());
        flat.push(s.roughness);
        flat.push(s.metallic);
        flat.extend(&s.dw);
        flat.extend(s.wt);
    }
    flat.extend(&net.weights);
    flat.extend(&env.params);
    if let Some(ns) = normals {
        for n in ns {
            flat.extend(n.iter());
        }
    }
    debug_assert_eq!(flat.len(), layout.total);
    (layout, flat)
}

pub fn scatter(
    layout: &ParamLayout,
    flat: &[f64],
    set: &mut SurfelSet,
    net: &mut LatentBoneNet,
    env: &mut EnvironmentLight,
    normals: Option<&mut Vec<V3>>,
) {
    for (k, s) in set.surfels.iter_mut().enumerate() {
        let mut o = k * layout.per_surfel;
        let take = |n: usize, o: &mut usize| {
            let sl = &flat[*o..*o + n];
            *o += n;
            sl
        };
        let p = take(3, &mut o);
        s.position = V3::new(p[0], p[1], p[2]);
        let q = take(4, &mut o);
        s.quat = V4::new(q[0], q[1], q[2], q[3]);
        let sc = take(2, &mut o);
        s.scale = [sc[0], sc[1]];
        s.opacity = take(1, &mut o)[0];
        for c in 0..SH_COEFFS {
            let sh = take(3, &mut o);
            s.sh[c] = [sh[0], sh[1], sh[2]];
        }
        let a = take(3, &mut o);
        s.albedo = V3::new(a[0], a[1], a[2]);
        s.roughness = take(1, &mut o)[0];
        s.metallic = take(1, &mut o)[0];
        s.dw.copy_from_slice(take(layout.n_joints, &mut o));
        s.wt.copy_from_slice(take(N_LATENT, &mut o));
    }
    net.weights.copy_from_slice(&flat[layout.net_off..layout.env_off]);
    env.params.copy_from_slice(&flat[layout.env_off..layout.normal_off]);
    env.mark_dirty();
    if let Some(ns) = normals {
        for (k, n) in ns.iter_mut().enumerate() {
            let o = layout.normal_off + 3 * k;
            *n = V3::new(flat[o], flat[o + 1], flat[o + 2]);
        }
    }
}

/// Structured gradients mirroring the flat layout.
pub struct FullGrads {
    pub layout: ParamLayout,
    pub flat: Vec<f64>,
}

impl FullGrads {
    pub fn zeros(layout: &ParamLayout) -> Self {
        FullGrads {
            layout: layout.clone(),
            flat: vec![0.0; layout.total],
        }
    }

    fn surfel_off(&self, k: usize) -> usize {
        k * self.layout.per_surfel
    }

    pub fn add_position(&mut self, k: usize, g: &V3) {
        let o = self.surfel_off(k);
        for c in 0..3 {
            self.flat[o + c] += g[c];
        }
    }

    pub fn add_quat(&mut self, k: usize, g: &V4) {
        let o = self.surfel_off(k) + 3;
        for c in 0..4 {
            self.flat[o + c] += g[c];
        }
    }

    pub fn add_scale(&mut self, k: usize, g: &[f64; 2]) {
        let o = self.surfel_off(k) + 7;
        self.flat[o] += g[0];
        self.flat[o + 1] += g[1];
    }

    pub fn add_opacity(&mut self, k: usize, g: f64) {
        let o = self.surfel_off(k) + 9;
        self.flat[o] += g;
    }

    pub fn add_sh(&mut self, k: usize, coeff: usize, channel: usize, g: f64) {
        let o = self.surfel_off(k) + 10 + 3 * coeff + channel;
        self.flat[o] += g;
    }

    pub fn add_albedo(&mut self, k: usize, g: &V3) {
        let o = self.surfel_off(k) + 10 + 3 * SH_COEFFS;
        for c in 0..3 {
            self.flat[o + c] += g[c];
        }
    }

    pub fn add_roughness(&mut self, k: usize, g: f64) {
        let o = self.surfel_off(k) + 10 + 3 * SH_COEFFS + 3;
        self.flat[o] += g;
    }

    pub fn add_metallic(&mut self, k: usize, g: f64) {
        let o = self.surfel_off(k) + 10 + 3 * SH_COEFFS + 4;
        self.flat[o] += g;
    }

    pub fn add_dw(&mut self, k: usize, g: &[f64]) {
        let o = self.surfel_off(k) + 10 + 3 * SH_COEFFS + 5;
        for (i, v) in g.iter().enumerate() {
            self.flat[o + i] += v;
        }
    }

    pub fn add_wt(&mut self, k: usize, g: &[f64; N_LATENT]) {
        let o = self.surfel_off(k) + 10 + 3 * SH_COEFFS + 5 + self.layout.n_joints;
        for (i, v) in g.iter().enumerate() {
            self.flat[o + i] += v;
        }
    }

    pub fn add_net(&mut self, g: &[f64]) {
        for (i, v) in g.iter().enumerate() {
            self.flat[self.layout.net_off + i] += v;
        }
    }

    pub fn add_env(&mut self, g: &[f64]) {
        for (i, v) in g.iter().enumerate() {
            self.flat[self.layout.env_off + i] += v;
        }
    }

    pub fn add_free_normal(&mut self, k: usize, g: &V3) {
        let o = self.layout.normal_off + 3 * k;
        for c in 0..3 {
            self.flat[o + c] += g[c];
        }
    }
}

/// Per-group learning rates. Position decays exponentially between its
/// initial and final value; the other geometry groups (rotation, scale,
/// opacity, skinning) follow the same 100x exponential decay so the
/// stochastic equilibrium tightens as training settles. Appearance and
/// environment decay a milder 10x.
#[derive(Debug, Clone)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub appearance: f64,
    pub skinning: f64,
    pub env: f64,
    /// First Stage-II step; appearance/env decay restarts here because the
    /// PBR materials are re-initialized at the stage boundary.
    pub stage2_start: usize,
}

impl LearningRates {
    pub fn rate(&self, group: Group, step: usize, total: usize) -> f64 {
        let t = step as f64 / total.max(1) as f64;
        let geom = 0.01f64.powf(t);
        // within-segment progress for the appearance/env groups
        let s2 = self.stage2_start.min(total);
        let ts = if step < s2 {
            step as f64 / s2.max(1) as f64
        } else {
            (step - s2) as f64 / (total - s2).max(1) as f64
        };
        let soft = 0.1f64.powf(ts);
        match group {
            Group::Position => self.position * (self.position_final / self.position).powf(t),
            Group::Rotation => self.rotation * geom,
            Group::Scale => self.scale * geom,
            Group::Opacity => self.opacity * geom,
            Group::Appearance | Group::FreeNormal => self.appearance * soft,
            Group::Skinning => self.skinning * geom,
            Group::Env => self.env * soft,
        }
    }
}

/// Adam with bias correction; moments are kept per flat index.
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }

    /// One update; `rate` maps each flat index to its learning rate (zero
    /// freezes the parameter).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], rate: impl Fn(usize) -> f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= rate(i) * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Map a posed-rotation gradient into a canonical-quaternion gradient hook:
/// kept here so pipeline code stays linear. (Thin wrapper around math.)
pub fn quat_grad(quat: &V4, grad_canonical_rot: &M3) -> V4 {
    crate::math::quat_backward(quat, grad_canonical_rot)
}
