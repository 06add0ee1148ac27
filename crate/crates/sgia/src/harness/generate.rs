//! Synthetic ground-truth generator. A known capsule-man model is rendered
//! with the engine's own forward pipeline ("self-consistency" track) and,
//! for a subset of frames, with the Monte-Carlo reference shader ("oracle"
//! track). Everything needed to train and evaluate is written to disk.

use super::capsule::{capsule_man, CapsuleManSpec};
use super::dataset::{write_json, GroundTruth, Manifest, MANIFEST_NAME};
use crate::articulation::LatentBoneNet;
use crate::core::{
    bake_skinning_grid, init_surfels_from_template, save_checkpoint, Camera, Checkpoint, Pose, SkinnedTemplate,
};
use crate::math::{softplus_inv, V3};
use crate::occlusion::{bake_vertex_ao, build_bvh};
use crate::shading::{bake_dfg_lut, env_to_equirect, mc_reference_shade_split, BrdfParams, EnvironmentLight};
use crate::splatter::{render, save_plane, save_png16, RenderOpts, WorldSurfel};
use crate::training::{
    pose_surfels_with, surfel_ao, world_surfels_stage2, AoBake, Model, TrainConfig, S2_ALBEDO, S2_NORMAL, S2_SHADE,
};
use crate::{Result, SgiaError};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Generator configuration; unknown keys are rejected with the offending
/// names so typos fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_joints: usize,
    pub target_vertices: usize,
    pub resolution: usize,
    pub n_frames: usize,
    pub seed: u64,
    /// Camera orbit radius around the subject.
    pub orbit_radius: f64,
    pub fov_deg: f64,
    pub env_res: usize,
    /// Mean environment radiance.
    pub env_brightness: f64,
    /// Relative chroma of the environment (0 = gray).
    pub env_color_variation: f64,
    /// Vertical radiance gradient; near 1 gives a harsh top light.
    pub env_top_bias: f64,
    /// Joint bend amplitude over the pose sequence (radians).
    pub pose_amplitude: f64,
    /// Number of leading frames also rendered with the MC reference shader.
    pub oracle_frames: usize,
    pub oracle_samples: usize,
    pub ao_rays: usize,
    /// Roughness range of the assigned materials (min, max).
    pub roughness_range: [f64; 2],
    pub metallic_max: f64,
    /// Optional extra elevation wobble of the orbit.
    pub orbit_elevation: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            n_joints: 4,
            target_vertices: 2000,
            resolution: 128,
            n_frames: 24,
            seed: 0,
            orbit_radius: 3.2,
            fov_deg: 40.0,
            env_res: 32,
            env_brightness: 0.8,
            env_color_variation: 0.08,
            env_top_bias: 0.45,
            pose_amplitude: 0.25,
            oracle_frames: 1,
            oracle_samples: 512,
            ao_rays: 100,
            roughness_range: [0.5, 0.9],
            metallic_max: 0.2,
            orbit_elevation: 0.25,
        }
    }
}

impl GeneratorSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SgiaError::InvalidInput(format!("generator spec: {e}")))
    }
}

/// Distinct albedo palette, one entry per bone.
const PALETTE: [[f64; 3]; 8] = [
    [0.65, 0.25, 0.20],
    [0.22, 0.50, 0.65],
    [0.30, 0.60, 0.25],
    [0.70, 0.60, 0.20],
    [0.50, 0.30, 0.60],
    [0.25, 0.55, 0.50],
    [0.60, 0.40, 0.30],
    [0.35, 0.35, 0.65],
];

/// Build the ground-truth model the scene is rendered from.
pub fn ground_truth_model(spec: &GeneratorSpec) -> Result<(SkinnedTemplate, Model)> {
    use rand::{Rng, SeedableRng};
    let tpl = capsule_man(&CapsuleManSpec {
        n_joints: spec.n_joints,
        target_vertices: spec.target_vertices,
        ..Default::default()
    })?;
    let mut surfels = init_surfels_from_template(&tpl)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed ^ 0xa5a5_5a5a);
    for (s, row) in surfels.surfels.iter_mut().zip(&tpl.weights) {
        let bone = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let base = PALETTE[bone % PALETTE.len()];
        for c in 0..3 {
            s.albedo[c] = (base[c] + rng.gen_range(-0.03..0.03)).clamp(0.05, 0.95);
            s.sh[0][c] = s.albedo[c];
        }
        s.roughness = rng.gen_range(spec.roughness_range[0]..spec.roughness_range[1]);
        s.metallic = rng.gen_range(0.0..spec.metallic_max.max(1e-9));
        s.opacity = 0.95;
        s.scale = [s.scale[0] * 1.4, s.scale[1] * 1.4];
    }
    let env = gray_ish_env(spec);
    let net = LatentBoneNet::new(spec.n_joints, spec.seed);
    Ok((
        tpl,
        Model {
            surfels,
            net,
            env,
            free_normals: None,
        },
    ))
}

/// Smooth, mostly gray environment with a mild directional gradient and a
/// small chroma term.
fn gray_ish_env(spec: &GeneratorSpec) -> EnvironmentLight {
    use crate::shading::texel_dir;
    let res = spec.env_res;
    let mut params = vec![0.0; 6 * res * res * 3];
    for face in 0..6 {
        for j in 0..res {
            for i in 0..res {
                let d = texel_dir(res, face, i, j);
                let t = crate::shading::texel_index(res, face, i, j);
                let base = spec.env_brightness * ((1.0 + spec.env_top_bias * d.y + 0.15 * d.x).max(0.01));
                for c in 0..3 {
                    let chroma = 1.0 + spec.env_color_variation * (c as f64 - 1.0) * d.z;
                    params[3 * t + c] = softplus_inv((base * chroma).max(1e-6));
                }
            }
        }
    }
    let mut env = EnvironmentLight::from_params(res, params).expect("sized params");
    env.refresh();
    env
}

/// Pose/camera sequence: orbiting camera, gently cycling joint bends.
pub fn pose_sequence(spec: &GeneratorSpec, tpl: &SkinnedTemplate) -> (Vec<Pose>, Vec<Camera>) {
    let (lo, hi) = tpl.aabb();
    let center = (lo + hi) * 0.5;
    let mut poses = Vec::with_capacity(spec.n_frames);
    let mut cams = Vec::with_capacity(spec.n_frames);
    for m in 0..spec.n_frames {
        let t = m as f64 / spec.n_frames.max(1) as f64;
        let mut pose = Pose::rest(spec.n_joints);
        for j in 1..spec.n_joints {
            // bend interior joints about z with per-joint phase
            let phase = 2.0 * std::f64::consts::PI * t + j as f64 * 1.3;
            pose.theta[3 * j + 2] = spec.pose_amplitude * phase.sin();
        }
        let ang = 2.0 * std::f64::consts::PI * t;
        let eye = center
            + V3::new(
                spec.orbit_radius * ang.cos(),
                spec.orbit_radius * spec.orbit_elevation * (2.0 * ang).sin(),
                spec.orbit_radius * ang.sin(),
            );
        cams.push(Camera::look_at(
            eye,
            center,
            V3::new(0.0, 1.0, 0.0),
            spec.fov_deg,
            spec.resolution,
            spec.resolution,
        ));
        poses.push(pose);
    }
    (poses, cams)
}

/// Per-frame statistics of the generation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateReport {
    /// PSNR of re-rendering the emitted frames from the ground-truth model
    /// (limited only by PNG quantization).
    pub self_psnr_db: Vec<f64>,
    /// Mean per-pixel relative difference between the split-sum and MC
    /// oracle tracks, per oracle frame.
    pub oracle_rel_diff: Vec<f64>,
}

/// Bake AO for one pose of the template.
pub fn bake_ao_for_pose(tpl: &SkinnedTemplate, pose: &Pose, rays: usize) -> Result<(crate::occlusion::Bvh, Vec<V3>, Vec<f64>)> {
    let bones = crate::articulation::forward_kinematics(tpl, pose)?;
    let posed = crate::articulation::pose_template(tpl, &crate::articulation::BoneSet::rigid_only(bones), &pose.beta)?;
    let bvh = build_bvh(&posed.vertices, &tpl.faces)?;
    let ao = bake_vertex_ao(&posed.vertices, &posed.normals, &bvh, rays, pose.hash());
    Ok((bvh, posed.vertices, ao))
}

/// Generate a full synthetic scene into `out_dir`.
pub fn generate_synthetic_scene(spec: &GeneratorSpec, out_dir: &Path) -> Result<GenerateReport> {
    let (tpl, model) = ground_truth_model(spec)?;
    let (poses, cams) = pose_sequence(spec, &tpl);
    let grid = bake_skinning_grid(&tpl, [32, 32, 32])?;
    let lut = bake_dfg_lut();

    for sub in ["frames", "masks", "gt", "oracle"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    tpl.save_json(&out_dir.join("template.json"))?;
    write_json(&out_dir.join("poses.json"), &poses)?;
    write_json(&out_dir.join("cameras.json"), &cams)?;

    let npix = spec.resolution * spec.resolution;
    let mut images = Vec::new();
    let mut masks = Vec::new();
    let mut gt = GroundTruth::default();
    let mut report = GenerateReport {
        self_psnr_db: Vec::new(),
        oracle_rel_diff: Vec::new(),
    };

    for m in 0..spec.n_frames {
        let pose = &poses[m];
        let cam = &cams[m];
        let (bvh, verts, vao) = bake_ao_for_pose(&tpl, pose, spec.ao_rays)?;
        let bake = AoBake {
            bvh: &bvh,
            vertices: &verts,
            faces: &tpl.faces,
            vertex_ao: &vao,
        };
        let posed = pose_surfels_with(&model, &grid, &tpl, pose, cam)?;
        let ao = surfel_ao(&posed, Some(&bake));
        let (world, _) = world_surfels_stage2(&model, &posed, &ao, &lut, false)?;
        let out = render(&world, cam, &RenderOpts::default())?;

        let image = &out.attrs[S2_SHADE * npix..(S2_SHADE + 3) * npix];
        let img_path = format!("frames/frame_{m:04}.png");
        let mask_path = format!("masks/mask_{m:04}.png");
        save_png16(&out_dir.join(&img_path), image, spec.resolution, spec.resolution, 3)?;
        save_png16(&out_dir.join(&mask_path), &out.alpha, spec.resolution, spec.resolution, 1)?;
        images.push(img_path.clone());
        masks.push(mask_path);

        let albedo_path = format!("gt/albedo_{m:04}.sgfp");
        let normal_path = format!("gt/normal_{m:04}.sgfp");
        let alpha_path = format!("gt/alpha_{m:04}.sgfp");
        save_plane(
            &out_dir.join(&albedo_path),
            &out.attrs[S2_ALBEDO * npix..(S2_ALBEDO + 3) * npix],
            spec.resolution,
            spec.resolution,
            3,
        )?;
        save_plane(
            &out_dir.join(&normal_path),
            &out.attrs[S2_NORMAL * npix..(S2_NORMAL + 3) * npix],
            spec.resolution,
            spec.resolution,
            3,
        )?;
        save_plane(&out_dir.join(&alpha_path), &out.alpha, spec.resolution, spec.resolution, 1)?;
        gt.albedo.push(albedo_path);
        gt.normal.push(normal_path);
        gt.alpha.push(alpha_path);

        // self-consistency: the emitted PNG must reproduce the render up to
        // quantization
        let (back, _, _, _) = crate::splatter::load_png(&out_dir.join(&images[m]))?;
        report.self_psnr_db.push(super::metrics::psnr_srgb(&back, image));

        if m < spec.oracle_frames {
            let oracle_img = render_oracle_frame(&model, &posed, &ao, spec.oracle_samples, cam)?;
            save_png16(
                &out_dir.join(format!("oracle/frame_{m:04}.png")),
                &oracle_img,
                spec.resolution,
                spec.resolution,
                3,
            )?;
            report
                .oracle_rel_diff
                .push(mean_rel_diff(image, &oracle_img, &out.alpha));
        }
    }

    // environment + full generating model
    let eq = env_to_equirect(&model.env, 4 * model.env.res, 2 * model.env.res);
    let env_path = "gt/env.sgfp".to_string();
    save_plane(&out_dir.join(&env_path), &eq, 4 * model.env.res, 2 * model.env.res, 3)?;
    gt.env = Some(env_path);
    let ck_path = "gt_checkpoint.sgia".to_string();
    let ck = Checkpoint {
        surfels: model.surfels.clone(),
        template: tpl.clone(),
        net_layout: model.net.layout.clone(),
        net_weights: model.net.weights.clone(),
        env_params: model.env.params.clone(),
        env_res: model.env.res,
        config_toml: toml::to_string(&TrainConfig::default()).unwrap_or_default(),
        step: 0,
        stage: 2,
    };
    save_checkpoint(&ck, &out_dir.join(&ck_path))?;
    gt.checkpoint = Some(ck_path);

    let manifest = Manifest {
        width: spec.resolution,
        height: spec.resolution,
        template: "template.json".into(),
        images,
        masks,
        poses: "poses.json".into(),
        cameras: "cameras.json".into(),
        gt: Some(gt),
    };
    write_json(&out_dir.join(MANIFEST_NAME), &manifest)?;
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

/// Shade every surfel with the MC reference (same AO gating as the
/// split-sum path) and splat.
fn render_oracle_frame(
    model: &Model,
    posed: &crate::training::Posed,
    ao: &[f64],
    samples: usize,
    cam: &Camera,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let shades: Vec<V3> = model
        .surfels
        .surfels
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let p = BrdfParams {
                albedo: s.albedo,
                roughness: s.roughness,
                metallic: s.metallic,
                normal: posed.normals[k],
                view: posed.views[k],
            };
            let (diff, spec) = mc_reference_shade_split(&p, &model.env, samples)?;
            Ok(diff + spec * (1.0 - ao[k]))
        })
        .collect::<Result<_>>()?;
    let world: Vec<WorldSurfel> = model
        .surfels
        .surfels
        .iter()
        .enumerate()
        .map(|(k, s)| WorldSurfel {
            position: posed.art.positions[k],
            rotation: posed.art.rotations[k],
            scale: s.scale,
            opacity: s.opacity,
            attrs: shades[k].iter().copied().collect(),
        })
        .collect();
    let out = render(&world, cam, &RenderOpts::default())?;
    Ok(out.attrs)
}

/// Mean per-pixel relative difference over covered pixels.
fn mean_rel_diff(a: &[f64], b: &[f64], alpha: &[f64]) -> f64 {
    let npix = alpha.len();
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 0..npix {
        if alpha[i] <= 0.5 {
            continue;
        }
        for c in 0..3 {
            let (x, y) = (a[c * npix + i], b[c * npix + i]);
            let denom = x.abs().max(y.abs());
            if denom > 1e-4 {
                acc += (x - y).abs() / denom;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}
