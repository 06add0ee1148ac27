//! Two-stage optimization: Stage I radiance-field reconstruction, Stage II
//! PBR estimation with the progressive normal-consistency schedule.

mod losses;
mod params;
mod pipeline;
mod ssim;

pub use losses::{alpha_l1, knn_indices, knn_sigma_reg, masked_l1, normal_consistency, smoothness, weight_norm_reg, white_light_reg};
pub use params::{gather, scatter, Adam, FullGrads, Group, LearningRates, ParamLayout};
pub use pipeline::{
    pose_surfels_with, stage1_loss, stage2_loss, surfel_ao, world_depth_normals, world_surfels_stage1,
    world_surfels_stage2, AoBake, Breakdown, Frame, LossOpts, Model, NcFrozen, NcMode, Posed, S1_CHANNELS, S1_COLOR,
    S1_NORMAL, S2_ALBEDO, S2_CHANNELS, S2_METAL, S2_NORMAL, S2_ROUGH, S2_SHADE,
};
pub use ssim::{ssim_backward, ssim_mean};

use crate::articulation::pose_template;
use crate::core::{bake_skinning_grid, save_checkpoint, Checkpoint, SkinnedTemplate};
use crate::math::V3;
use crate::occlusion::{bake_vertex_ao, build_bvh, Bvh};
use crate::shading::{bake_dfg_lut, DfgLut};
use crate::{Result, SgiaError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;

fn default_total() -> usize {
    8000
}
fn default_stage2_start() -> usize {
    5000
}
fn default_nc_start() -> usize {
    100
}
fn default_nc_switch() -> usize {
    6500
}
fn d_lambda_ssim() -> f64 {
    0.2
}
fn d_lambda_nc() -> f64 {
    0.05
}
fn d_lambda_mat() -> f64 {
    0.02
}
fn d_lambda_white() -> f64 {
    0.1
}
fn d_lambda_attr() -> f64 {
    0.01
}
fn d_lambda_w() -> f64 {
    0.1
}
fn d_lambda_alpha() -> f64 {
    0.1
}
fn d_knn_k() -> usize {
    8
}
fn d_knn_rebuild() -> usize {
    500
}
fn d_ckpt_every() -> usize {
    1000
}
fn d_lr_pos() -> f64 {
    1.6e-4
}
fn d_lr_pos_final() -> f64 {
    1.6e-6
}
fn d_lr_rot() -> f64 {
    1e-3
}
fn d_lr_scale() -> f64 {
    5e-3
}
fn d_lr_opacity() -> f64 {
    5e-2
}
fn d_lr_app() -> f64 {
    2.5e-3
}
fn d_lr_skin() -> f64 {
    1e-3
}
fn d_env_res() -> usize {
    64
}
fn d_grid_res() -> usize {
    32
}
fn d_ao_rays() -> usize {
    100
}
fn d_true() -> bool {
    true
}

/// Full training configuration; TOML-serializable and embedded verbatim in
/// checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub stage2_start: usize,
    /// First Stage-I step with normal consistency active.
    pub nc_start: usize,
    /// First Stage-II step of the fix-splats phase.
    pub nc_switch: usize,

    pub lambda_ssim: f64,
    pub lambda_nc: f64,
    pub lambda_albedo_smooth: f64,
    pub lambda_rough_smooth: f64,
    pub lambda_metal_smooth: f64,
    pub lambda_white: f64,
    pub lambda_attr: f64,
    pub lambda_w_hat: f64,
    pub lambda_w_tilde: f64,
    pub lambda_alpha: f64,

    pub knn_k: usize,
    pub knn_rebuild: usize,
    pub checkpoint_every: usize,

    pub lr_position: f64,
    pub lr_position_final: f64,
    pub lr_rotation: f64,
    pub lr_scale: f64,
    pub lr_opacity: f64,
    pub lr_appearance: f64,
    pub lr_env: f64,
    pub lr_skinning: f64,

    pub seed: u64,
    pub env_res: usize,
    pub grid_res: usize,
    pub ao_rays: usize,

    /// Stage II freezes all geometry (ablation).
    pub freeze_shape: bool,
    /// Progressive two-phase consistency in Stage II; joint otherwise.
    pub progressive: bool,
    /// l1 consistency instead of the cosine form (ablation).
    pub nc_l1: bool,
    /// Free learnable per-surfel normals (3D-primitive ablation).
    pub free_normals: bool,
    /// Bake and apply template-mesh occlusion.
    pub occlusion: bool,
    pub white_reg: bool,
    pub smooth_reg: bool,
    /// Opacity-threshold pruning at KNN rebuilds.
    pub prune: bool,
    /// Also gate diffuse light by visibility (ablation).
    pub occlude_diffuse: bool,
    /// Bake occlusion from this skinned mesh instead of the training
    /// template (clothed-mesh ablation). Joint counts must match.
    pub ao_mesh: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: default_total(),
            stage2_start: default_stage2_start(),
            nc_start: default_nc_start(),
            nc_switch: default_nc_switch(),
            lambda_ssim: d_lambda_ssim(),
            lambda_nc: d_lambda_nc(),
            lambda_albedo_smooth: d_lambda_mat(),
            lambda_rough_smooth: d_lambda_mat(),
            lambda_metal_smooth: d_lambda_mat(),
            lambda_white: d_lambda_white(),
            lambda_attr: d_lambda_attr(),
            lambda_w_hat: d_lambda_w(),
            lambda_w_tilde: d_lambda_w(),
            lambda_alpha: d_lambda_alpha(),
            knn_k: d_knn_k(),
            knn_rebuild: d_knn_rebuild(),
            checkpoint_every: d_ckpt_every(),
            lr_position: d_lr_pos(),
            lr_position_final: d_lr_pos_final(),
            lr_rotation: d_lr_rot(),
            lr_scale: d_lr_scale(),
            lr_opacity: d_lr_opacity(),
            lr_appearance: d_lr_app(),
            lr_env: d_lr_app(),
            lr_skinning: d_lr_skin(),
            seed: 0,
            env_res: d_env_res(),
            grid_res: d_grid_res(),
            ao_rays: d_ao_rays(),
            freeze_shape: false,
            progressive: d_true(),
            nc_l1: false,
            free_normals: false,
            occlusion: d_true(),
            white_reg: d_true(),
            smooth_reg: d_true(),
            prune: false,
            occlude_diffuse: false,
            ao_mesh: None,
        }
    }
}

impl TrainConfig {
    /// Rescale the schedule proportionally to a new step budget.
    pub fn with_total_steps(mut self, total: usize) -> Self {
        let f = total as f64 / self.total_steps.max(1) as f64;
        let s = |x: usize| ((x as f64 * f).round() as usize).min(total);
        self.stage2_start = s(self.stage2_start);
        self.nc_start = s(self.nc_start);
        self.nc_switch = s(self.nc_switch);
        self.total_steps = total;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage2_start > self.total_steps || self.nc_switch < self.stage2_start {
            return Err(SgiaError::InvalidInput("training schedule out of order".into()));
        }
        Ok(())
    }

    pub fn rates(&self) -> LearningRates {
        LearningRates {
            position: self.lr_position,
            position_final: self.lr_position_final,
            rotation: self.lr_rotation,
            scale: self.lr_scale,
            opacity: self.lr_opacity,
            appearance: self.lr_appearance,
            skinning: self.lr_skinning,
            env: self.lr_env,
            stage2_start: self.stage2_start,
        }
    }
}

/// Stage (1 or 2), normal-consistency weight, and consistency phase at one
/// step. In Stage II the two progressive phases are mutually exclusive:
/// fix-geometry before the switch step, fix-splats from it on.
pub fn schedule_at(cfg: &TrainConfig, step: usize) -> (u8, f64, NcMode) {
    let stage2 = step >= cfg.stage2_start;
    let weight = if stage2 || step >= cfg.nc_start { cfg.lambda_nc } else { 0.0 };
    let mode = if !stage2 || !cfg.progressive {
        NcMode::Joint
    } else if step < cfg.nc_switch {
        NcMode::FixGeometry
    } else {
        NcMode::FixSplats
    };
    (if stage2 { 2 } else { 1 }, weight, mode)
}

/// One CSV row of the training log.
#[derive(Debug, Clone)]
pub struct LogRow {
    pub step: usize,
    pub stage: u8,
    pub bd: Breakdown,
    pub sigma: f64,
    pub wnorm: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<LogRow>,
}

/// Per-pose occlusion bake held for the whole run.
struct PoseAo {
    bvh: Bvh,
    vertices: Vec<V3>,
    faces: Vec<[u32; 3]>,
    vertex_ao: Vec<f64>,
}

fn bake_pose_ao(tpl: &SkinnedTemplate, model: &Model, frame: &Frame, rays: usize) -> Result<PoseAo> {
    let bones = crate::articulation::forward_kinematics(tpl, &frame.pose)?;
    let posed = pose_template(tpl, &crate::articulation::BoneSet::rigid_only(bones), &frame.pose.beta)?;
    let _ = model;
    let bvh = build_bvh(&posed.vertices, &tpl.faces)?;
    let vertex_ao = bake_vertex_ao(&posed.vertices, &posed.normals, &bvh, rays, frame.pose.hash());
    Ok(PoseAo {
        bvh,
        vertices: posed.vertices,
        faces: tpl.faces.clone(),
        vertex_ao,
    })
}

fn checkpoint_of(model: &Model, tpl: &SkinnedTemplate, cfg: &TrainConfig, step: usize, stage: u8) -> Checkpoint {
    Checkpoint {
        surfels: model.surfels.clone(),
        template: tpl.clone(),
        net_layout: model.net.layout.clone(),
        net_weights: model.net.weights.clone(),
        env_params: model.env.params.clone(),
        env_res: model.env.res,
        config_toml: toml::to_string(cfg).unwrap_or_default(),
        step: step as u64,
        stage,
    }
}

fn write_log(log: &[LogRow], dir: &Path) -> Result<()> {
    let mut f = std::fs::File::create(dir.join("train_log.csv"))?;
    writeln!(f, "step,stage,photo,ssim,alpha,nc,smooth,white,sigma,wnorm,total")?;
    for r in log {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step, r.stage, r.bd.photo, r.bd.ssim, r.bd.alpha, r.bd.nc, r.bd.smooth, r.bd.white, r.sigma, r.wnorm,
            r.bd.total
        )?;
    }
    Ok(())
}

/// Initialize Stage-II materials from the Stage-I appearance: albedo from the
/// SH DC color, diffuse-dominant roughness, dielectric metallic.
pub fn init_stage2_materials(model: &mut Model) {
    for s in &mut model.surfels.surfels {
        for c in 0..3 {
            s.albedo[c] = s.sh[0][c].clamp(0.03, 0.97);
        }
        s.roughness = 0.7;
        s.metallic = 0.0;
    }
}

/// Run the full two-stage schedule over a frame set.
pub fn train(frames: &[Frame], tpl: &SkinnedTemplate, mut model: Model, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    if frames.is_empty() {
        return Err(SgiaError::MissingData("empty training dataset".into()));
    }
    cfg.validate()?;
    let ao_tpl = match &cfg.ao_mesh {
        Some(p) => {
            let m = SkinnedTemplate::load_json(Path::new(p))?;
            if m.joints.len() != tpl.joints.len() {
                return Err(SgiaError::ShapeMismatch(format!(
                    "occlusion mesh has {} joints, template has {}",
                    m.joints.len(),
                    tpl.joints.len()
                )));
            }
            Some(m)
        }
        None => None,
    };
    let ao_source = ao_tpl.as_ref().unwrap_or(tpl);
    let grid = bake_skinning_grid(tpl, [cfg.grid_res; 3])?;
    let lut: DfgLut = bake_dfg_lut();
    if cfg.free_normals && model.free_normals.is_none() {
        model.free_normals = Some(model.surfels.surfels.iter().map(|s| s.normal()).collect());
    }
    model.env.refresh();

    let (mut layout, mut flat) = gather(&model.surfels, &model.net, &model.env, model.free_normals.as_deref());
    let mut adam = Adam::new(layout.total);
    let rates = cfg.rates();

    let mut knn = knn_indices(&model.surfels.surfels.iter().map(|s| s.position).collect::<Vec<_>>(), cfg.knn_k);
    let mut ao_cache: HashMap<u64, PoseAo> = HashMap::new();
    let mut log = Vec::with_capacity(cfg.total_steps);
    let mut stage2_initialized = false;

    for step in 0..cfg.total_steps {
        let stage2 = step >= cfg.stage2_start;
        if stage2 && !stage2_initialized {
            init_stage2_materials(&mut model);
            let g = gather(&model.surfels, &model.net, &model.env, model.free_normals.as_deref());
            layout = g.0;
            flat = g.1;
            stage2_initialized = true;
        }
        let frame = &frames[step % frames.len()];

        let (_, nc_weight, nc_mode) = schedule_at(cfg, step);
        let opts = LossOpts {
            lambda_ssim: cfg.lambda_ssim,
            lambda_alpha: cfg.lambda_alpha,
            nc_weight,
            nc_mode,
            nc_l1: cfg.nc_l1,
            lambda_albedo_smooth: if cfg.smooth_reg { cfg.lambda_albedo_smooth } else { 0.0 },
            lambda_rough_smooth: if cfg.smooth_reg { cfg.lambda_rough_smooth } else { 0.0 },
            lambda_metal_smooth: if cfg.smooth_reg { cfg.lambda_metal_smooth } else { 0.0 },
            lambda_white: if cfg.white_reg { cfg.lambda_white } else { 0.0 },
            occlude_diffuse: cfg.occlude_diffuse,
        };

        let (bd, mut grads, _render) = if stage2 {
            let bake = if cfg.occlusion {
                let hash = frame.pose.hash();
                if !ao_cache.contains_key(&hash) {
                    let baked = bake_pose_ao(ao_source, &model, frame, cfg.ao_rays)?;
                    ao_cache.insert(hash, baked);
                }
                let b = &ao_cache[&hash];
                Some(AoBake {
                    bvh: &b.bvh,
                    vertices: &b.vertices,
                    faces: &b.faces,
                    vertex_ao: &b.vertex_ao,
                })
            } else {
                None
            };
            stage2_loss(&model, &grid, tpl, frame, bake.as_ref(), &lut, &opts, &layout, None)?
        } else {
            stage1_loss(&model, &grid, tpl, frame, &opts, &layout)?
        };

        // Stage-I parameter regularizers
        let (mut sigma_v, mut wnorm_v) = (0.0, 0.0);
        if !stage2 {
            let (sv, sg) = knn_sigma_reg(&model.surfels, &knn, cfg.lambda_attr);
            sigma_v = sv;
            for (k, g) in sg.per_surfel.iter().enumerate() {
                let nj = layout.n_joints;
                grads.add_quat(k, &crate::math::V4::new(g[0], g[1], g[2], g[3]));
                grads.add_scale(k, &[g[4], g[5]]);
                grads.add_opacity(k, g[6]);
                for c in 0..3 {
                    grads.add_sh(k, 0, c, g[7 + c]);
                }
                grads.add_dw(k, &g[10..10 + nj]);
            }
            let (wv, wg) = weight_norm_reg(&model.surfels, cfg.lambda_w_hat, cfg.lambda_w_tilde);
            wnorm_v = wv;
            for k in 0..model.surfels.len() {
                grads.add_dw(k, &wg.dw[k]);
                grads.add_wt(k, &wg.wt[k]);
            }
        }

        let total = bd.total + sigma_v + wnorm_v;
        if !total.is_finite() || grads.flat.iter().any(|g| !g.is_finite()) {
            if let Some(dir) = out_dir {
                write_log(&log, dir)?;
            }
            return Err(SgiaError::NonFinite(format!("training loss at step {step}")));
        }
        log.push(LogRow {
            step,
            stage: if stage2 { 2 } else { 1 },
            bd: Breakdown { total, ..bd },
            sigma: sigma_v,
            wnorm: wnorm_v,
        });

        // optimizer update with the stage-aware freeze mask
        let freeze_geometry = stage2 && cfg.freeze_shape;
        adam.step(&mut flat, &grads.flat, |i| {
            let group = layout.group_of(i);
            let frozen = freeze_geometry
                && matches!(
                    group,
                    Group::Position | Group::Rotation | Group::Scale | Group::Opacity | Group::Skinning
                );
            // SH is stage-I appearance; PBR attributes train in stage II.
            if frozen {
                0.0
            } else {
                rates.rate(group, step, cfg.total_steps)
            }
        });
        scatter(&layout, &flat, &mut model.surfels, &mut model.net, &mut model.env, model.free_normals.as_mut());
        model.surfels.clamp_invariants();
        model.env.refresh();
        let g = gather(&model.surfels, &model.net, &model.env, model.free_normals.as_deref());
        flat = g.1;

        let at_rebuild = (step + 1) % cfg.knn_rebuild == 0;
        if at_rebuild {
            if cfg.prune {
                let keep: Vec<bool> = model.surfels.surfels.iter().map(|s| s.opacity >= 0.005).collect();
                if keep.iter().any(|k| !k) && keep.iter().filter(|&&k| k).count() > cfg.knn_k {
                    prune_surfels(&mut model, &keep, &layout, &mut adam);
                    let g = gather(&model.surfels, &model.net, &model.env, model.free_normals.as_deref());
                    layout = g.0;
                    flat = g.1;
                }
            }
            knn = knn_indices(&model.surfels.surfels.iter().map(|s| s.position).collect::<Vec<_>>(), cfg.knn_k);
        }

        if let Some(dir) = out_dir {
            if (step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.total_steps {
                let stage = if stage2 { 2 } else { 1 };
                let ck = checkpoint_of(&model, tpl, cfg, step + 1, stage);
                save_checkpoint(&ck, &dir.join(format!("ckpt_{:06}.sgia", step + 1)))?;
                save_checkpoint(&ck, &dir.join("ckpt_latest.sgia"))?;
            }
        }
    }

    if let Some(dir) = out_dir {
        write_log(&log, dir)?;
    }
    Ok(TrainOutcome { model, log })
}

/// Drop pruned surfels and the matching optimizer moments.
fn prune_surfels(model: &mut Model, keep: &[bool], layout: &ParamLayout, adam: &mut Adam) {
    let ps = layout.per_surfel;
    let mut m = Vec::with_capacity(adam.m.len());
    let mut v = Vec::with_capacity(adam.v.len());
    for (k, &kept) in keep.iter().enumerate() {
        if kept {
            m.extend_from_slice(&adam.m[k * ps..(k + 1) * ps]);
            v.extend_from_slice(&adam.v[k * ps..(k + 1) * ps]);
        }
    }
    m.extend_from_slice(&adam.m[layout.net_off..layout.normal_off]);
    v.extend_from_slice(&adam.v[layout.net_off..layout.normal_off]);
    if layout.free_normals {
        for (k, &kept) in keep.iter().enumerate() {
            if kept {
                let o = layout.normal_off + 3 * k;
                m.extend_from_slice(&adam.m[o..o + 3]);
                v.extend_from_slice(&adam.v[o..o + 3]);
            }
        }
    }
    adam.m = m;
    adam.v = v;
    let mut idx = 0;
    model.surfels.surfels.retain(|_| {
        let k = keep[idx];
        idx += 1;
        k
    });
    if let Some(ns) = &mut model.free_normals {
        let mut idx = 0;
        ns.retain(|_| {
            let k = keep[idx];
            idx += 1;
            k
        });
    }
}

#[cfg(test)]
mod tests;
