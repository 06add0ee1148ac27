//! The differentiable per-frame forward/backward pipeline shared by both
//! training stages, evaluation, and relighting.
//!
//! Stage I renders view-dependent SH radiance; Stage II renders split-sum
//! PBR shading. Both carry the world-space surfel normal as extra attribute
//! channels so the normal-consistency loss can be evaluated from the planes:
//! with the blend weights detached, `sum_i w_i (1 - n_i . N)` equals
//! `alpha - v . N` where `v` is the rendered normal plane.

use super::losses::{self, NcGrads};
use super::params::{quat_grad, FullGrads, ParamLayout};
use super::ssim::{ssim_backward, ssim_mean};
use crate::articulation::{
    articulate, articulate_backward, forward_kinematics, latent_bones, latent_bones_backward, ArticulationOutput,
    BoneSet, LatentBoneNet, LatentCtx,
};
use crate::core::{Camera, Pose, SkinningGrid, SurfelSet};
use crate::math::{sh_basis_grad, V3};
use crate::occlusion::{transfer_ao, Bvh};
use crate::shading::{
    shade_backward, shade_surfel_opts, BrdfParams, DfgLut, EnvGrads, EnvironmentLight, ShadeCtx,
};
use crate::splatter::{
    depth_normals_backward, render, render_backward, BackwardOpts, PlaneGrads, RasterGrads, RenderOpts, RenderOutput,
    WorldSurfel,
};
use crate::{Result, SgiaError};

/// Stage I channel layout: view-dependent color then world normal.
pub const S1_COLOR: usize = 0;
pub const S1_NORMAL: usize = 3;
pub const S1_CHANNELS: usize = 6;

/// Stage II channel layout: shaded color, albedo, roughness, metallic,
/// world normal.
pub const S2_SHADE: usize = 0;
pub const S2_ALBEDO: usize = 3;
pub const S2_ROUGH: usize = 6;
pub const S2_METAL: usize = 7;
pub const S2_NORMAL: usize = 8;
pub const S2_CHANNELS: usize = 11;

/// Everything the optimizer owns.
pub struct Model {
    pub surfels: SurfelSet,
    pub net: LatentBoneNet,
    pub env: EnvironmentLight,
    /// Free per-surfel canonical normals (3D-primitive ablation).
    pub free_normals: Option<Vec<V3>>,
}

/// One supervised frame: linear-space planar RGB, foreground mask, pose,
/// camera.
pub struct Frame {
    pub image: Vec<f64>,
    pub mask: Vec<f64>,
    pub pose: Pose,
    pub camera: Camera,
}

impl Frame {
    pub fn foreground(&self) -> Vec<bool> {
        self.mask.iter().map(|&m| m > 0.5).collect()
    }
}

/// Baked occlusion inputs for one pose.
pub struct AoBake<'a> {
    pub bvh: &'a Bvh,
    pub vertices: &'a [V3],
    pub faces: &'a [[u32; 3]],
    pub vertex_ao: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcMode {
    /// Gradients to both splat normals and depth normals (Stage I).
    Joint,
    /// Stop-gradient on splat normals; only geometry moves.
    FixGeometry,
    /// Stop-gradient on depth normals; only splat normals move.
    FixSplats,
}

#[derive(Debug, Clone)]
pub struct LossOpts {
    pub lambda_ssim: f64,
    pub lambda_alpha: f64,
    pub nc_weight: f64,
    pub nc_mode: NcMode,
    /// Swap the cosine consistency for a plain l1 (ablation).
    pub nc_l1: bool,
    pub lambda_albedo_smooth: f64,
    pub lambda_rough_smooth: f64,
    pub lambda_metal_smooth: f64,
    pub lambda_white: f64,
    pub occlude_diffuse: bool,
}

impl Default for LossOpts {
    fn default() -> Self {
        LossOpts {
            lambda_ssim: 0.2,
            lambda_alpha: 0.1,
            nc_weight: 0.0,
            nc_mode: NcMode::Joint,
            nc_l1: false,
            lambda_albedo_smooth: 0.02,
            lambda_rough_smooth: 0.02,
            lambda_metal_smooth: 0.02,
            lambda_white: 0.1,
            occlude_diffuse: false,
        }
    }
}

/// Per-term values of one loss evaluation.
#[derive(Debug, Clone, Default)]
pub struct Breakdown {
    pub photo: f64,
    pub ssim: f64,
    pub alpha: f64,
    pub nc: f64,
    pub smooth: f64,
    pub white: f64,
    pub total: f64,
}

/// Frozen linearization of a stop-gradient normal-consistency term
/// (fix-splats mode): `nc(theta) = constant + sum_k coeff_k . n_k(theta)`.
/// Used by finite-difference checks to evaluate the loss the gradients are
/// actually gradients of.
pub struct NcFrozen {
    pub constant: f64,
    pub coeff: Vec<V3>,
}

/// Posed per-surfel state retained between forward and backward.
pub struct Posed {
    pub art: ArticulationOutput,
    pub bones: BoneSet,
    pub lctx: LatentCtx,
    /// Per-surfel orientation sign toward the camera.
    pub flips: Vec<f64>,
    /// World-space visible normals (after the flip).
    pub normals: Vec<V3>,
    /// Unit directions toward the camera.
    pub views: Vec<V3>,
    pub dists: Vec<f64>,
    /// Unit canonical free normals plus normalization Jacobian factor.
    free_units: Option<Vec<V3>>,
}

/// Articulate the model into one camera's frame and derive the per-surfel
/// shading geometry (visible normals, view directions).
pub fn pose_surfels_with(
    model: &Model,
    grid: &SkinningGrid,
    tpl: &crate::core::SkinnedTemplate,
    pose: &Pose,
    cam: &Camera,
) -> Result<Posed> {
    let tpl_bones = forward_kinematics(tpl, pose)?;
    let (latent, lctx) = latent_bones(&model.net, pose)?;
    let bones = BoneSet {
        bones: tpl_bones,
        latent,
    };
    let art = articulate(&model.surfels, grid, &bones)?;
    let origin = cam.center();
    let n = model.surfels.len();
    let mut flips = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut views = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    let free_units = model.free_normals.as_ref().map(|fns| {
        fns.iter()
            .map(|f| {
                let norm = f.norm().max(1e-9);
                f / norm
            })
            .collect::<Vec<_>>()
    });
    for k in 0..n {
        let p = art.positions[k];
        let to_cam = origin - p;
        let dist = to_cam.norm().max(1e-9);
        let view = to_cam / dist;
        let n_raw = match &free_units {
            Some(units) => art.blend_rotation(k) * units[k],
            None => art.rotations[k].column(2).into(),
        };
        let flip = if n_raw.dot(&view) >= 0.0 { 1.0 } else { -1.0 };
        flips.push(flip);
        normals.push(n_raw * flip);
        views.push(view);
        dists.push(dist);
    }
    Ok(Posed {
        art,
        bones,
        lctx,
        flips,
        normals,
        views,
        dists,
        free_units,
    })
}

fn active_sh(set: &SurfelSet) -> usize {
    match set.sh_degree {
        0 => 1,
        1 => 4,
        _ => 9,
    }
}

/// Build Stage I world surfels: SH color toward the camera plus the visible
/// normal as attributes.
pub fn world_surfels_stage1(model: &Model, posed: &Posed) -> Vec<WorldSurfel> {
    let n_active = active_sh(&model.surfels);
    model
        .surfels
        .surfels
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let d = -posed.views[k];
            let (basis, _) = sh_basis_grad(&d);
            let mut attrs = vec![0.0; S1_CHANNELS];
            for c in 0..3 {
                let mut v = 0.0;
                for (j, b) in basis.iter().enumerate().take(n_active) {
                    v += s.sh[j][c] * b;
                }
                attrs[S1_COLOR + c] = v;
            }
            for c in 0..3 {
                attrs[S1_NORMAL + c] = posed.normals[k][c];
            }
            WorldSurfel {
                position: posed.art.positions[k],
                rotation: posed.art.rotations[k],
                scale: s.scale,
                opacity: s.opacity,
                attrs,
            }
        })
        .collect()
}

/// Per-surfel occlusion for the current posed positions; zero when no bake
/// is supplied (occlusion ablation).
pub fn surfel_ao(posed: &Posed, bake: Option<&AoBake>) -> Vec<f64> {
    match bake {
        Some(b) => transfer_ao(&posed.art.positions, b.vertices, b.faces, b.vertex_ao, b.bvh),
        None => vec![0.0; posed.art.positions.len()],
    }
}

/// Build Stage II world surfels; retains shading contexts for backward.
pub fn world_surfels_stage2(
    model: &Model,
    posed: &Posed,
    ao: &[f64],
    lut: &DfgLut,
    occlude_diffuse: bool,
) -> Result<(Vec<WorldSurfel>, Vec<ShadeCtx>)> {
    let mut out = Vec::with_capacity(model.surfels.len());
    let mut ctxs = Vec::with_capacity(model.surfels.len());
    for (k, s) in model.surfels.surfels.iter().enumerate() {
        let p = BrdfParams {
            albedo: s.albedo,
            roughness: s.roughness,
            metallic: s.metallic,
            normal: posed.normals[k],
            view: posed.views[k],
        };
        let (shade, ctx) = shade_surfel_opts(&p, &model.env, lut, ao[k], occlude_diffuse)?;
        let mut attrs = vec![0.0; S2_CHANNELS];
        for c in 0..3 {
            attrs[S2_SHADE + c] = shade[c];
            attrs[S2_ALBEDO + c] = s.albedo[c];
            attrs[S2_NORMAL + c] = posed.normals[k][c];
        }
        attrs[S2_ROUGH] = s.roughness;
        attrs[S2_METAL] = s.metallic;
        out.push(WorldSurfel {
            position: posed.art.positions[k],
            rotation: posed.art.rotations[k],
            scale: s.scale,
            opacity: s.opacity,
            attrs,
        });
        ctxs.push(ctx);
    }
    Ok((out, ctxs))
}

/// World-space depth normals of a render (the raster computes them in
/// camera space).
pub fn world_depth_normals(out: &RenderOutput, cam: &Camera) -> Vec<V3> {
    let rt = cam.rot.transpose();
    out.depth_normal.iter().map(|n| rt * n).collect()
}

struct NcPlan {
    value: f64,
    grads: NcGrads,
}

fn eval_nc(out: &RenderOutput, normal_ch: usize, cam: &Camera, fg: &[bool], opts: &LossOpts) -> NcPlan {
    let npix = fg.len();
    let n_world = world_depth_normals(out, cam);
    let v_plane = &out.attrs[normal_ch * npix..(normal_ch + 3) * npix];
    let (value, grads) = losses::normal_consistency(v_plane, &out.alpha, &n_world, fg, opts.nc_l1);
    NcPlan { value, grads }
}

/// Shared tail of both stage backwards: route the normal-consistency
/// gradients into the depth plane (N path) and a frozen-weight attribute
/// pass (v path), then merge raster gradients.
#[allow(clippy::too_many_arguments)]
fn raster_with_nc(
    world: &[WorldSurfel],
    cam: &Camera,
    out: &RenderOutput,
    plane_a: PlaneGrads,
    nc: Option<&NcPlan>,
    opts: &LossOpts,
    n_channels: usize,
    normal_ch: usize,
    capture: Option<&mut Option<NcFrozen>>,
) -> Result<RasterGrads> {
    let npix = out.width * out.height;
    let mut raster = render_backward(
        world,
        cam,
        out,
        &plane_a,
        &BackwardOpts {
            weights_differentiable: true,
            rotation_gate: true,
        },
    )?;
    if let Some(plan) = nc {
        if opts.nc_mode != NcMode::FixSplats {
            // N path: depth normals are a function of the depth plane. This
            // path repairs geometry, so rotations are gated off; only the
            // splat-normal path (below) ever drives rotations.
            let gn_cam: Vec<V3> = plan.grads.n_plane.iter().map(|g| cam.rot * (g * opts.nc_weight)).collect();
            let g_depth = depth_normals_backward(&out.depth, &out.alpha, cam, &gn_cam);
            let plane_n = PlaneGrads {
                depth: g_depth,
                ..Default::default()
            };
            let raster_n = render_backward(
                world,
                cam,
                out,
                &plane_n,
                &BackwardOpts {
                    weights_differentiable: true,
                    rotation_gate: false,
                },
            )?;
            raster.add_assign(&raster_n);
        }
    }
    if let Some(plan) = nc {
        if opts.nc_mode != NcMode::FixGeometry {
            // v path: frozen blend weights, attribute-value gradients only
            let mut attrs = vec![0.0; n_channels * npix];
            for c in 0..3 {
                for i in 0..npix {
                    attrs[(normal_ch + c) * npix + i] = opts.nc_weight * plan.grads.v_plane[c * npix + i];
                }
            }
            let plane_b = PlaneGrads {
                attrs,
                ..Default::default()
            };
            let raster_b = render_backward(
                world,
                cam,
                out,
                &plane_b,
                &BackwardOpts {
                    weights_differentiable: false,
                    rotation_gate: true,
                },
            )?;
            if let Some(cap) = capture {
                // linearize the stop-gradient term: the per-surfel attribute
                // gradients are exactly the coefficients of n_k
                let coeff: Vec<V3> = (0..world.len())
                    .map(|k| {
                        V3::new(
                            raster_b.attrs[k * n_channels + normal_ch],
                            raster_b.attrs[k * n_channels + normal_ch + 1],
                            raster_b.attrs[k * n_channels + normal_ch + 2],
                        )
                    })
                    .collect();
                let lin: f64 = coeff
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c.dot(&V3::new(
                        world[k].attrs[normal_ch],
                        world[k].attrs[normal_ch + 1],
                        world[k].attrs[normal_ch + 2],
                    )))
                    .sum();
                *cap = Some(NcFrozen {
                    constant: opts.nc_weight * plan.value - lin,
                    coeff,
                });
            }
            raster.add_assign(&raster_b);
        }
    }
    Ok(raster)
}

/// Pull combined raster gradients back to canonical parameters. The color
/// channels were already consumed by the caller; this handles geometry,
/// normals, articulation, and the latent net.
#[allow(clippy::too_many_arguments)]
fn backprop_geometry(
    model: &Model,
    posed: &Posed,
    raster: &RasterGrads,
    extra_pos: &[V3],
    normal_grads: &[V3],
    grads: &mut FullGrads,
) -> Result<()> {
    let n = model.surfels.len();
    let mut grad_pos = raster.position.clone();
    let mut grad_rot = raster.rotation.clone();
    for k in 0..n {
        grad_pos[k] += extra_pos[k];
        let gn_raw = normal_grads[k] * posed.flips[k];
        match &posed.free_units {
            Some(units) => {
                // world normal = Q u with Q detached; chain into the free
                // normal through the normalization
                let q = posed.art.blend_rotation(k);
                let gu = q.transpose() * gn_raw;
                let u = units[k];
                let raw_norm = model.free_normals.as_ref().unwrap()[k].norm().max(1e-9);
                let g_free = (gu - u * u.dot(&gu)) / raw_norm;
                grads.add_free_normal(k, &g_free);
            }
            None => {
                for r in 0..3 {
                    grad_rot[k][(r, 2)] += gn_raw[r];
                }
            }
        }
    }
    let art_g = articulate_backward(&model.surfels, &posed.bones, &posed.art, &grad_pos, &grad_rot)?;
    for (k, s) in model.surfels.surfels.iter().enumerate() {
        grads.add_position(k, &art_g.position[k]);
        grads.add_quat(k, &quat_grad(&s.quat, &art_g.rotation[k]));
        grads.add_scale(k, &raster.scale[k]);
        grads.add_opacity(k, raster.opacity[k]);
        grads.add_dw(k, &art_g.dw[k]);
        grads.add_wt(k, &art_g.wt[k]);
    }
    let net_g = latent_bones_backward(&model.net, &posed.lctx, &art_g.latent)?;
    grads.add_net(&net_g);
    Ok(())
}

/// Stage I loss (photometric + SSIM + alpha + optional normal consistency)
/// and its gradients. Regularizers are added by the training loop.
pub fn stage1_loss(
    model: &Model,
    grid: &SkinningGrid,
    tpl: &crate::core::SkinnedTemplate,
    frame: &Frame,
    opts: &LossOpts,
    layout: &ParamLayout,
) -> Result<(Breakdown, FullGrads, RenderOutput)> {
    let cam = &frame.camera;
    let posed = pose_surfels_with(model, grid, tpl, &frame.pose, cam)?;
    let world = world_surfels_stage1(model, &posed);
    let out = render(&world, cam, &RenderOpts::default())?;
    let npix = out.width * out.height;
    if frame.image.len() != 3 * npix || frame.mask.len() != npix {
        return Err(SgiaError::ShapeMismatch("frame image size mismatch".into()));
    }
    let fg = frame.foreground();

    let mut bd = Breakdown::default();
    let mut grads = FullGrads::zeros(layout);
    let mut attrs_up = vec![0.0; S1_CHANNELS * npix];

    // photometric l1 + SSIM on color channels
    let pred = &out.attrs[S1_COLOR * npix..(S1_COLOR + 3) * npix];
    let (l1, g_l1) = losses::masked_l1(pred, &frame.image, 3, &fg);
    bd.photo = l1;
    for (i, g) in g_l1.iter().enumerate() {
        attrs_up[S1_COLOR * npix + i] += g;
    }
    if opts.lambda_ssim > 0.0 {
        let mut mean_s = 0.0;
        for c in 0..3 {
            let (s, ctx) = ssim_mean(&pred[c * npix..(c + 1) * npix], &frame.image[c * npix..(c + 1) * npix], out.width, out.height, &fg);
            mean_s += s / 3.0;
            let g = ssim_backward(&ctx, -opts.lambda_ssim / 3.0);
            for i in 0..npix {
                attrs_up[(S1_COLOR + c) * npix + i] += g[i];
            }
        }
        bd.ssim = opts.lambda_ssim * (1.0 - mean_s);
    }
    let (av, ag) = losses::alpha_l1(&out.alpha, &frame.mask);
    bd.alpha = opts.lambda_alpha * av;
    let alpha_up: Vec<f64> = ag.iter().map(|g| g * opts.lambda_alpha).collect();

    let nc_plan = if opts.nc_weight > 0.0 {
        let plan = eval_nc(&out, S1_NORMAL, cam, &fg, opts);
        bd.nc = opts.nc_weight * plan.value;
        Some(plan)
    } else {
        None
    };

    let plane_a = PlaneGrads {
        attrs: attrs_up,
        alpha: alpha_up,
        depth: Vec::new(),
    };
    let raster = raster_with_nc(&world, cam, &out, plane_a, nc_plan.as_ref(), opts, S1_CHANNELS, S1_NORMAL, None)?;

    // SH color channels: coefficients and the view-direction position chain
    let n_active = active_sh(&model.surfels);
    let mut extra_pos = vec![V3::zeros(); model.surfels.len()];
    let mut normal_grads = vec![V3::zeros(); model.surfels.len()];
    for (k, s) in model.surfels.surfels.iter().enumerate() {
        let a = &raster.attrs[k * S1_CHANNELS..(k + 1) * S1_CHANNELS];
        let d = -posed.views[k];
        let (basis, gbasis) = sh_basis_grad(&d);
        let mut gdir = V3::zeros();
        for c in 0..3 {
            let gc = a[S1_COLOR + c];
            if gc == 0.0 {
                continue;
            }
            for j in 0..n_active {
                grads.add_sh(k, j, c, gc * basis[j]);
                gdir += gbasis[j] * (gc * s.sh[j][c]);
            }
        }
        // d = (p - o)/|p - o|  =>  dd/dp = (I - d d^T)/dist
        extra_pos[k] = (gdir - d * d.dot(&gdir)) / posed.dists[k];
        normal_grads[k] = V3::new(a[S1_NORMAL], a[S1_NORMAL + 1], a[S1_NORMAL + 2]);
    }
    backprop_geometry(model, &posed, &raster, &extra_pos, &normal_grads, &mut grads)?;

    bd.total = bd.photo + bd.ssim + bd.alpha + bd.nc;
    Ok((bd, grads, out))
}

/// Stage II loss (PBR l1 + material smoothness + progressive normal
/// consistency + white light) and its gradients.
#[allow(clippy::too_many_arguments)]
pub fn stage2_loss(
    model: &Model,
    grid: &SkinningGrid,
    tpl: &crate::core::SkinnedTemplate,
    frame: &Frame,
    bake: Option<&AoBake>,
    lut: &DfgLut,
    opts: &LossOpts,
    layout: &ParamLayout,
    mut capture_nc: Option<&mut Option<NcFrozen>>,
) -> Result<(Breakdown, FullGrads, RenderOutput)> {
    let cam = &frame.camera;
    let posed = pose_surfels_with(model, grid, tpl, &frame.pose, cam)?;
    let ao = surfel_ao(&posed, bake);
    let (world, shade_ctx) = world_surfels_stage2(model, &posed, &ao, lut, opts.occlude_diffuse)?;
    let out = render(&world, cam, &RenderOpts::default())?;
    let npix = out.width * out.height;
    if frame.image.len() != 3 * npix || frame.mask.len() != npix {
        return Err(SgiaError::ShapeMismatch("frame image size mismatch".into()));
    }
    let fg = frame.foreground();

    let mut bd = Breakdown::default();
    let mut grads = FullGrads::zeros(layout);
    let mut attrs_up = vec![0.0; S2_CHANNELS * npix];

    let pred = &out.attrs[S2_SHADE * npix..(S2_SHADE + 3) * npix];
    let (l1, g_l1) = losses::masked_l1(pred, &frame.image, 3, &fg);
    bd.photo = l1;
    for (i, g) in g_l1.iter().enumerate() {
        attrs_up[S2_SHADE * npix + i] += g;
    }
    let (av, ag) = losses::alpha_l1(&out.alpha, &frame.mask);
    bd.alpha = opts.lambda_alpha * av;
    let alpha_up: Vec<f64> = ag.iter().map(|g| g * opts.lambda_alpha).collect();

    for (lambda, ch, n_ch) in [
        (opts.lambda_albedo_smooth, S2_ALBEDO, 3usize),
        (opts.lambda_rough_smooth, S2_ROUGH, 1),
        (opts.lambda_metal_smooth, S2_METAL, 1),
    ] {
        if lambda <= 0.0 {
            continue;
        }
        let plane = &out.attrs[ch * npix..(ch + n_ch) * npix];
        let (v, g) = losses::smoothness(plane, n_ch, &frame.image, &fg, out.width);
        bd.smooth += lambda * v;
        for (i, gv) in g.iter().enumerate() {
            attrs_up[ch * npix + i] += lambda * gv;
        }
    }

    let nc_plan = if opts.nc_weight > 0.0 {
        let plan = eval_nc(&out, S2_NORMAL, cam, &fg, opts);
        bd.nc = opts.nc_weight * plan.value;
        Some(plan)
    } else {
        None
    };

    let plane_a = PlaneGrads {
        attrs: attrs_up,
        alpha: alpha_up,
        depth: Vec::new(),
    };
    let raster = raster_with_nc(
        &world,
        cam,
        &out,
        plane_a,
        nc_plan.as_ref(),
        opts,
        S2_CHANNELS,
        S2_NORMAL,
        capture_nc.as_deref_mut(),
    )?;

    // shading backward per surfel, plus direct material-channel gradients
    let mut env_grads = EnvGrads::zeros(&model.env);
    let mut extra_pos = vec![V3::zeros(); model.surfels.len()];
    let mut normal_grads = vec![V3::zeros(); model.surfels.len()];
    for (k, s) in model.surfels.surfels.iter().enumerate() {
        let a = &raster.attrs[k * S2_CHANNELS..(k + 1) * S2_CHANNELS];
        let g_shade = V3::new(a[S2_SHADE], a[S2_SHADE + 1], a[S2_SHADE + 2]);
        let p = BrdfParams {
            albedo: s.albedo,
            roughness: s.roughness,
            metallic: s.metallic,
            normal: posed.normals[k],
            view: posed.views[k],
        };
        let sg = shade_backward(&p, ao[k], &shade_ctx[k], &g_shade, &mut env_grads);
        grads.add_albedo(k, &(sg.albedo + V3::new(a[S2_ALBEDO], a[S2_ALBEDO + 1], a[S2_ALBEDO + 2])));
        grads.add_roughness(k, sg.roughness + a[S2_ROUGH]);
        grads.add_metallic(k, sg.metallic + a[S2_METAL]);
        normal_grads[k] = sg.normal + V3::new(a[S2_NORMAL], a[S2_NORMAL + 1], a[S2_NORMAL + 2]);
        // view = (o - p)/dist  =>  dview/dp = -(I - v v^T)/dist
        let v = posed.views[k];
        extra_pos[k] = -(sg.view - v * v.dot(&sg.view)) / posed.dists[k];
    }
    backprop_geometry(model, &posed, &raster, &extra_pos, &normal_grads, &mut grads)?;
    grads.add_env(&model.env.backward(&env_grads));

    if opts.lambda_white > 0.0 {
        let (wv, wg) = losses::white_light_reg(&model.env);
        bd.white = opts.lambda_white * wv;
        let scaled: Vec<f64> = wg.iter().map(|g| g * opts.lambda_white).collect();
        grads.add_env(&scaled);
    }

    bd.total = bd.photo + bd.alpha + bd.nc + bd.smooth + bd.white;
    Ok((bd, grads, out))
}
