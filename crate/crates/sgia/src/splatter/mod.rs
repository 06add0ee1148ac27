//! Differentiable tile-based rasterizer for 2D Gaussian surfels.
//!
//! Forward: per-pixel ray–plane intersection against depth-sorted surfels and
//! front-to-back alpha compositing of an arbitrary per-surfel attribute
//! vector, plus alpha, depth, and a finite-difference depth normal.
//! Backward: analytic gradients w.r.t. every surfel geometry parameter and
//! the per-surfel attribute values.

pub mod image_io;
mod normals;

pub use image_io::{load_plane, load_png, save_plane, save_png, save_png16};
pub use normals::{depth_normals, depth_normals_backward};

use crate::core::Camera;
use crate::math::{M3, V3};
use crate::{Result, SgiaError};
use rayon::prelude::*;
use std::collections::HashMap;

/// Tile edge in pixels.
pub const TILE: usize = 16;
/// Gaussian weights below this are treated as zero for compositing.
pub const G_CUTOFF: f64 = 1.0 / 255.0;
/// Rays intersecting closer than this camera depth are misses.
pub const NEAR_PLANE: f64 = 0.01;
/// Transmittance below this terminates a ray.
const T_STOP: f64 = 1e-5;
/// Screen-space low-pass sigma in pixels (minimum splat footprint).
const LOWPASS_SIGMA_PX: f64 = 0.5;

/// A surfel posed in world space together with its attribute vector.
///
/// All surfels in one render must carry attribute vectors of equal length;
/// every attribute channel is composited with the shared blend weights.
#[derive(Debug, Clone)]
pub struct WorldSurfel {
    pub position: V3,
    /// Columns `(t_u, t_v, n)`.
    pub rotation: M3,
    pub scale: [f64; 2],
    pub opacity: f64,
    pub attrs: Vec<f64>,
}

impl WorldSurfel {
    pub fn tangent_u(&self) -> V3 {
        self.rotation.column(0).into()
    }
    pub fn tangent_v(&self) -> V3 {
        self.rotation.column(1).into()
    }
    pub fn normal(&self) -> V3 {
        self.rotation.column(2).into()
    }
}

/// `exp(-(u^2 + v^2) / 2)`.
pub fn gaussian_weight(u: f64, v: f64) -> f64 {
    (-(u * u + v * v) / 2.0).exp()
}

/// Ray–splat intersection for the ray through pixel center `(px, py)`.
///
/// Returns local tangent-plane coordinates in units of `(s_u, s_v)` plus the
/// camera depth of the hit, or `None` for edge-on splats and hits at or in
/// front of the near plane.
pub fn intersect_ray_splat(cam: &Camera, px: usize, py: usize, s: &WorldSurfel) -> Option<(f64, f64, f64)> {
    let origin = cam.center();
    let dir = cam.ray_dir(px, py);
    intersect(&origin, &dir, s)
}

fn intersect(origin: &V3, dir: &V3, s: &WorldSurfel) -> Option<(f64, f64, f64)> {
    let n = s.normal();
    let denom = dir.dot(&n);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = (s.position - origin).dot(&n) / denom;
    if t <= NEAR_PLANE || !t.is_finite() {
        return None;
    }
    let delta = origin + dir * t - s.position;
    let u = delta.dot(&s.tangent_u()) / s.scale[0];
    let v = delta.dot(&s.tangent_v()) / s.scale[1];
    if !(u.is_finite() && v.is_finite()) {
        return None;
    }
    Some((u, v, t))
}

/// Rendered per-pixel planes plus retained state for the backward pass.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    pub n_channels: usize,
    /// Planar layout: channel `c` occupies `attrs[c * w * h .. (c + 1) * w * h]`.
    pub attrs: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Alpha-normalized mean intersection depth (0 where alpha is 0).
    pub depth: Vec<f64>,
    /// Unnormalized composited depth `sum_i w_i t_i`.
    pub depth_raw: Vec<f64>,
    /// Camera-space normal from finite differences of backprojected depth;
    /// zero where alpha < 0.5.
    pub depth_normal: Vec<V3>,
    blend: Option<BlendState>,
}

impl RenderOutput {
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.attrs[c * n..(c + 1) * n]
    }

    /// Hash of the discrete compositing configuration (which surfels touch
    /// which pixels, and which low-pass branch each hit took). Two renders
    /// with equal fingerprints lie on the same smooth branch, which makes
    /// finite-difference checks against the analytic gradients valid.
    pub fn blend_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |b: u64| {
            h ^= b;
            h = h.wrapping_mul(0x100000001b3);
        };
        if let Some(b) = &self.blend {
            for &o in &b.offsets {
                mix(o as u64);
            }
            for (&i, &f) in b.ids.iter().zip(&b.flags) {
                mix(((i as u64) << 8) | f as u64);
            }
        }
        h
    }
}

/// Retained per-pixel lists of contributing surfels, in composite order.
#[derive(Debug, Clone)]
struct BlendState {
    offsets: Vec<u32>,
    ids: Vec<u32>,
    /// bit 0: screen-space low-pass branch won the max for this hit
    flags: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
pub struct RenderOpts {
    /// Keep per-pixel blend lists for `render_backward`.
    pub retain: bool,
    pub compute_depth_normals: bool,
}

impl Default for RenderOpts {
    fn default() -> Self {
        RenderOpts {
            retain: true,
            compute_depth_normals: true,
        }
    }
}

struct Projected {
    id: u32,
    depth: f64,
    px: f64,
    py: f64,
    radius: f64,
}

/// Evaluated contribution of one surfel to one pixel.
struct Hit {
    id: u32,
    u: f64,
    v: f64,
    t: f64,
    g: f64,
    alpha: f64,
    /// true when the screen-space low-pass branch won the max
    screen_branch: bool,
    dpx: f64,
    dpy: f64,
}

fn eval_hit(origin: &V3, dir: &V3, s: &WorldSurfel, proj: &Projected, px: usize, py: usize) -> Option<Hit> {
    let (u, v, t) = intersect(origin, dir, s)?;
    let g_plane = gaussian_weight(u, v);
    let dpx = px as f64 - proj.px;
    let dpy = py as f64 - proj.py;
    let g_screen = (-(dpx * dpx + dpy * dpy) / (2.0 * LOWPASS_SIGMA_PX * LOWPASS_SIGMA_PX)).exp();
    let (g, screen_branch) = if g_screen > g_plane {
        (g_screen, true)
    } else {
        (g_plane, false)
    };
    if g < G_CUTOFF {
        return None;
    }
    let alpha = s.opacity * g;
    if alpha <= 0.0 {
        return None;
    }
    Some(Hit {
        id: proj.id,
        u,
        v,
        t,
        g,
        alpha,
        screen_branch,
        dpx,
        dpy,
    })
}

fn project_surfels(surfels: &[WorldSurfel], cam: &Camera) -> Vec<Projected> {
    let mut out: Vec<Projected> = surfels
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let (px, py, z) = cam.project(&s.position)?;
            if z <= NEAR_PLANE {
                return None;
            }
            let smax = s.scale[0].max(s.scale[1]);
            let z_eff = (z - 3.0 * smax).max(NEAR_PLANE).max(0.1 * z);
            let radius = 3.0 * smax * cam.fx.max(cam.fy) / z_eff + 2.0;
            if px + radius < 0.0
                || py + radius < 0.0
                || px - radius > cam.width as f64
                || py - radius > cam.height as f64
            {
                return None;
            }
            Some(Projected {
                id: i as u32,
                depth: z,
                px,
                py,
                radius,
            })
        })
        .collect();
    // canonical order: center depth, then surfel index
    out.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap().then(a.id.cmp(&b.id)));
    out
}

/// Forward render: front-to-back compositing in center-depth order.
pub fn render(surfels: &[WorldSurfel], cam: &Camera, opts: &RenderOpts) -> Result<RenderOutput> {
    cam.validate()?;
    let n_channels = surfels.first().map(|s| s.attrs.len()).unwrap_or(0);
    if surfels.iter().any(|s| s.attrs.len() != n_channels) {
        return Err(SgiaError::ShapeMismatch("surfel attribute vectors differ in length".into()));
    }
    let (w, h) = (cam.width, cam.height);
    let npix = w * h;
    let projected = project_surfels(surfels, cam);
    let origin = cam.center();

    let tiles_x = w.div_ceil(TILE);
    let tiles_y = h.div_ceil(TILE);
    let n_tiles = tiles_x * tiles_y;

    struct TileOut {
        alpha: Vec<f64>,
        attrs: Vec<f64>,
        depth_raw: Vec<f64>,
        blend: Vec<Vec<(u32, u8)>>,
    }

    let tile_results: Vec<TileOut> = (0..n_tiles)
        .into_par_iter()
        .map(|tix| {
            let tx = tix % tiles_x;
            let ty = tix / tiles_x;
            let x0 = tx * TILE;
            let y0 = ty * TILE;
            let x1 = (x0 + TILE).min(w);
            let y1 = (y0 + TILE).min(h);
            let tw = x1 - x0;
            let th = y1 - y0;
            // bin: surfels whose screen bbox overlaps this tile, in sorted order
            let local: Vec<&Projected> = projected
                .iter()
                .filter(|p| {
                    p.px + p.radius >= x0 as f64
                        && p.px - p.radius <= x1 as f64
                        && p.py + p.radius >= y0 as f64
                        && p.py - p.radius <= y1 as f64
                })
                .collect();
            let mut alpha = vec![0.0; tw * th];
            let mut attrs = vec![0.0; n_channels * tw * th];
            let mut depth_raw = vec![0.0; tw * th];
            let mut blend = vec![Vec::new(); tw * th];
            for py in y0..y1 {
                for px in x0..x1 {
                    let li = (py - y0) * tw + (px - x0);
                    let dir = cam.ray_dir(px, py);
                    let mut transmittance = 1.0;
                    for p in &local {
                        if transmittance < T_STOP {
                            break;
                        }
                        let s = &surfels[p.id as usize];
                        let Some(hit) = eval_hit(&origin, &dir, s, p, px, py) else {
                            continue;
                        };
                        let wgt = hit.alpha * transmittance;
                        alpha[li] += wgt;
                        depth_raw[li] += wgt * hit.t;
                        for c in 0..n_channels {
                            attrs[c * tw * th + li] += wgt * s.attrs[c];
                        }
                        blend[li].push((hit.id, hit.screen_branch as u8));
                        let next = transmittance * (1.0 - hit.alpha);
                        debug_assert!(next <= transmittance + 1e-15);
                        transmittance = next;
                    }
                }
            }
            TileOut {
                alpha,
                attrs,
                depth_raw,
                blend,
            }
        })
        .collect();

    let mut alpha = vec![0.0; npix];
    let mut attrs = vec![0.0; n_channels * npix];
    let mut depth_raw = vec![0.0; npix];
    let mut blend_per_pixel: Vec<Vec<(u32, u8)>> = vec![Vec::new(); npix];
    for (tix, t) in tile_results.into_iter().enumerate() {
        let tx = tix % tiles_x;
        let ty = tix / tiles_x;
        let x0 = tx * TILE;
        let y0 = ty * TILE;
        let x1 = (x0 + TILE).min(w);
        let tw = x1 - x0;
        for (li, b) in t.blend.into_iter().enumerate() {
            let px = x0 + li % tw;
            let py = y0 + li / tw;
            let gi = py * w + px;
            alpha[gi] = t.alpha[li];
            depth_raw[gi] = t.depth_raw[li];
            for c in 0..n_channels {
                attrs[c * npix + gi] = t.attrs[c * tw * (t.alpha.len() / tw) + li];
            }
            blend_per_pixel[gi] = b;
        }
    }

    let depth: Vec<f64> = (0..npix)
        .map(|i| if alpha[i] > 1e-12 { depth_raw[i] / alpha[i] } else { 0.0 })
        .collect();

    let depth_normal = if opts.compute_depth_normals {
        depth_normals(&depth, &alpha, cam)
    } else {
        vec![V3::zeros(); npix]
    };

    let blend = if opts.retain {
        let mut offsets = Vec::with_capacity(npix + 1);
        let mut ids = Vec::new();
        let mut flags = Vec::new();
        offsets.push(0u32);
        for b in &blend_per_pixel {
            for &(id, fl) in b {
                ids.push(id);
                flags.push(fl);
            }
            offsets.push(ids.len() as u32);
        }
        Some(BlendState { offsets, ids, flags })
    } else {
        None
    };

    Ok(RenderOutput {
        width: w,
        height: h,
        n_channels,
        attrs,
        alpha,
        depth,
        depth_raw,
        depth_normal,
        blend,
    })
}

/// Upstream per-pixel gradients fed to the backward pass. Missing planes are
/// treated as zero.
#[derive(Debug, Clone, Default)]
pub struct PlaneGrads {
    /// Planar layout matching `RenderOutput::attrs`.
    pub attrs: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Gradient w.r.t. the alpha-normalized depth plane.
    pub depth: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct BackwardOpts {
    /// When false, the blend weights (and alpha) are treated as constants;
    /// gradients flow only through attribute values and intersection depths.
    pub weights_differentiable: bool,
    /// When false, gradients w.r.t. surfel rotations are zeroed.
    pub rotation_gate: bool,
}

impl Default for BackwardOpts {
    fn default() -> Self {
        BackwardOpts {
            weights_differentiable: true,
            rotation_gate: true,
        }
    }
}

/// Gradients w.r.t. posed surfel parameters and attribute values.
#[derive(Debug, Clone)]
pub struct RasterGrads {
    pub position: Vec<V3>,
    /// `dL/dR` for the posed rotation matrix.
    pub rotation: Vec<M3>,
    pub scale: Vec<[f64; 2]>,
    pub opacity: Vec<f64>,
    /// Per-surfel attribute gradients, `attrs[id * n_channels + c]`.
    pub attrs: Vec<f64>,
}

impl RasterGrads {
    pub fn zeros(n: usize, n_channels: usize) -> Self {
        RasterGrads {
            position: vec![V3::zeros(); n],
            rotation: vec![M3::zeros(); n],
            scale: vec![[0.0; 2]; n],
            opacity: vec![0.0; n],
            attrs: vec![0.0; n * n_channels],
        }
    }

    pub fn add_assign(&mut self, other: &RasterGrads) {
        for i in 0..self.position.len() {
            self.position[i] += other.position[i];
            self.rotation[i] += other.rotation[i];
            self.scale[i][0] += other.scale[i][0];
            self.scale[i][1] += other.scale[i][1];
            self.opacity[i] += other.opacity[i];
        }
        for (a, b) in self.attrs.iter_mut().zip(&other.attrs) {
            *a += b;
        }
    }
}

#[derive(Clone, Default)]
struct GradEntry {
    position: V3,
    rotation: M3,
    scale: [f64; 2],
    opacity: f64,
    attrs: Vec<f64>,
}

/// Analytic backward pass. `surfels` and `cam` must be the ones used for the
/// retained forward render.
pub fn render_backward(
    surfels: &[WorldSurfel],
    cam: &Camera,
    out: &RenderOutput,
    grads: &PlaneGrads,
    opts: &BackwardOpts,
) -> Result<RasterGrads> {
    let blend = out
        .blend
        .as_ref()
        .ok_or_else(|| SgiaError::MissingData("render was not retained for backward".into()))?;
    let (w, h) = (out.width, out.height);
    let npix = w * h;
    let n_channels = out.n_channels;
    if !grads.attrs.is_empty() && grads.attrs.len() != n_channels * npix {
        return Err(SgiaError::ShapeMismatch("attr gradient plane size mismatch".into()));
    }
    let projected = project_surfels(surfels, cam);
    let proj_by_id: HashMap<u32, &Projected> = projected.iter().map(|p| (p.id, p)).collect();
    let origin = cam.center();

    let tiles_x = w.div_ceil(TILE);
    let tiles_y = h.div_ceil(TILE);
    let n_tiles = tiles_x * tiles_y;

    let tile_grads: Vec<Vec<(u32, GradEntry)>> = (0..n_tiles)
        .into_par_iter()
        .map(|tix| {
            let tx = tix % tiles_x;
            let ty = tix / tiles_x;
            let x0 = tx * TILE;
            let y0 = ty * TILE;
            let x1 = (x0 + TILE).min(w);
            let y1 = (y0 + TILE).min(h);
            let mut acc: HashMap<u32, GradEntry> = HashMap::new();
            for py in y0..y1 {
                for px in x0..x1 {
                    let gi = py * w + px;
                    let lo = blend.offsets[gi] as usize;
                    let hi = blend.offsets[gi + 1] as usize;
                    if lo == hi {
                        continue;
                    }
                    backward_pixel(
                        surfels,
                        cam,
                        &origin,
                        &proj_by_id,
                        &blend.ids[lo..hi],
                        px,
                        py,
                        gi,
                        out,
                        grads,
                        opts,
                        n_channels,
                        npix,
                        &mut acc,
                    );
                }
            }
            let mut entries: Vec<(u32, GradEntry)> = acc.into_iter().collect();
            entries.sort_by_key(|(id, _)| *id);
            entries
        })
        .collect();

    let mut g = RasterGrads::zeros(surfels.len(), n_channels);
    for tile in tile_grads {
        for (id, e) in tile {
            let i = id as usize;
            g.position[i] += e.position;
            g.rotation[i] += e.rotation;
            g.scale[i][0] += e.scale[0];
            g.scale[i][1] += e.scale[1];
            g.opacity[i] += e.opacity;
            for c in 0..n_channels {
                g.attrs[i * n_channels + c] += e.attrs[c];
            }
        }
    }
    if !opts.rotation_gate {
        for r in &mut g.rotation {
            *r = M3::zeros();
        }
    }
    Ok(g)
}

#[allow(clippy::too_many_arguments)]
fn backward_pixel(
    surfels: &[WorldSurfel],
    cam: &Camera,
    origin: &V3,
    proj_by_id: &HashMap<u32, &Projected>,
    ids: &[u32],
    px: usize,
    py: usize,
    gi: usize,
    out: &RenderOutput,
    grads: &PlaneGrads,
    opts: &BackwardOpts,
    n_channels: usize,
    npix: usize,
    acc: &mut HashMap<u32, GradEntry>,
) {
    let dir = cam.ray_dir(px, py);
    // recompute the forward chain for this pixel
    let mut hits: Vec<(Hit, f64)> = Vec::with_capacity(ids.len()); // (hit, T_i)
    let mut transmittance = 1.0;
    for &id in ids {
        let p = proj_by_id[&id];
        let s = &surfels[id as usize];
        let Some(hit) = eval_hit(origin, &dir, s, p, px, py) else {
            continue;
        };
        let t_i = transmittance;
        transmittance *= 1.0 - hit.alpha;
        hits.push((hit, t_i));
    }

    let g_alpha_plane = grads.alpha.get(gi).copied().unwrap_or(0.0);
    let g_depth_plane = grads.depth.get(gi).copied().unwrap_or(0.0);
    let alpha_px = out.alpha[gi];
    // depth plane is depth_raw / alpha
    let (g_depth_raw, g_alpha_from_depth) = if alpha_px > 1e-12 && g_depth_plane != 0.0 {
        (
            g_depth_plane / alpha_px,
            -g_depth_plane * out.depth_raw[gi] / (alpha_px * alpha_px),
        )
    } else {
        (0.0, 0.0)
    };
    let g_alpha_total = if opts.weights_differentiable {
        g_alpha_plane + g_alpha_from_depth
    } else {
        0.0
    };

    // dL/dw_i and the running suffix sum S = sum_{j>i} dL/dw_j * w_j
    let mut dw: Vec<f64> = vec![0.0; hits.len()];
    if opts.weights_differentiable {
        for (k, (hit, _)) in hits.iter().enumerate() {
            let s = &surfels[hit.id as usize];
            let mut v = g_alpha_total + g_depth_raw * hit.t;
            for c in 0..n_channels {
                let gc = grads.attrs.get(c * npix + gi).copied().unwrap_or(0.0);
                v += gc * s.attrs[c];
            }
            dw[k] = v;
        }
    }

    let mut suffix = 0.0;
    for i in (0..hits.len()).rev() {
        let (hit, t_i) = &hits[i];
        let w_i = hit.alpha * t_i;
        let s = &surfels[hit.id as usize];
        let entry = acc.entry(hit.id).or_insert_with(|| GradEntry {
            attrs: vec![0.0; n_channels],
            ..Default::default()
        });

        // attribute value gradients (always differentiable)
        for c in 0..n_channels {
            let gc = grads.attrs.get(c * npix + gi).copied().unwrap_or(0.0);
            entry.attrs[c] += gc * w_i;
        }

        // geometry gradient pieces
        let g_t = g_depth_raw * w_i; // dL/dt_i through the depth plane
        let mut g_alpha_i = 0.0;
        if opts.weights_differentiable {
            g_alpha_i = t_i * dw[i] - suffix / (1.0 - hit.alpha).max(1e-12);
            suffix += dw[i] * w_i;
        }
        let g_g = g_alpha_i * s.opacity;
        entry.opacity += g_alpha_i * hit.g;

        if hit.screen_branch {
            // gradient through the screen-space low-pass Gaussian: position only
            if g_g != 0.0 {
                let sigma2 = LOWPASS_SIGMA_PX * LOWPASS_SIGMA_PX;
                let g_cpx = g_g * hit.g * hit.dpx / sigma2;
                let g_cpy = g_g * hit.g * hit.dpy / sigma2;
                let pc = cam.to_camera(&s.position);
                let du_dq = V3::new(cam.fx / pc.z, 0.0, -cam.fx * pc.x / (pc.z * pc.z));
                let dv_dq = V3::new(0.0, cam.fy / pc.z, -cam.fy * pc.y / (pc.z * pc.z));
                entry.position += cam.rot.transpose() * (du_dq * g_cpx + dv_dq * g_cpy);
            }
            // t_i still differentiable through the plane intersection
            if g_t != 0.0 {
                accumulate_plane_grads(entry, s, origin, &dir, hit, 0.0, 0.0, g_t);
            }
        } else {
            let g_u = -hit.u * hit.g * g_g;
            let g_v = -hit.v * hit.g * g_g;
            if g_u != 0.0 || g_v != 0.0 || g_t != 0.0 {
                accumulate_plane_grads(entry, s, origin, &dir, hit, g_u, g_v, g_t);
            }
        }
    }
}

/// Chain `dL/du, dL/dv, dL/dt` into position / rotation / scale gradients of
/// the ray–plane intersection.
fn accumulate_plane_grads(
    entry: &mut GradEntry,
    s: &WorldSurfel,
    origin: &V3,
    dir: &V3,
    hit: &Hit,
    g_u: f64,
    g_v: f64,
    g_t: f64,
) {
    let tu = s.tangent_u();
    let tv = s.tangent_v();
    let n = s.normal();
    let denom = dir.dot(&n);
    let delta = origin + dir * hit.t - s.position;
    let (su, sv) = (s.scale[0], s.scale[1]);

    // dt/dp = n / denom ; dt/dn = -delta / denom
    // du/dp = ((d . t_u) n / denom - t_u) / s_u ; du/dn = -(d . t_u)/(denom s_u) delta
    // du/dt_u = delta / s_u ; du/ds_u = -u / s_u
    let dtu = dir.dot(&tu);
    let dtv = dir.dot(&tv);

    let mut g_p = V3::zeros();
    let mut g_n = V3::zeros();
    if g_u != 0.0 {
        g_p += (n * (dtu / denom) - tu) * (g_u / su);
        g_n += delta * (-dtu / (denom * su) * g_u);
        entry.rotation.column_mut(0).iter_mut().zip(delta.iter()).for_each(|(r, d)| *r += g_u * d / su);
        entry.scale[0] += -hit.u / su * g_u;
    }
    if g_v != 0.0 {
        g_p += (n * (dtv / denom) - tv) * (g_v / sv);
        g_n += delta * (-dtv / (denom * sv) * g_v);
        entry.rotation.column_mut(1).iter_mut().zip(delta.iter()).for_each(|(r, d)| *r += g_v * d / sv);
        entry.scale[1] += -hit.v / sv * g_v;
    }
    if g_t != 0.0 {
        g_p += n * (g_t / denom);
        g_n += delta * (-g_t / denom);
    }
    entry.position += g_p;
    entry.rotation.column_mut(2).iter_mut().zip(g_n.iter()).for_each(|(r, d)| *r += d);
}
