//! Randomized finite-difference verification suites covering rasterization,
//! articulation, shading, and the full training loss. Runnable from the CLI
//! (`gradcheck`) and from the acceptance tests.

use crate::articulation::{
    articulate, articulate_backward, forward_kinematics, latent_bones, latent_bones_backward, BoneSet, LatentBoneNet,
};
use crate::core::{
    bake_skinning_grid, init_surfels_from_template, Camera, Pose, SkinnedTemplate, Surfel, SurfelSet, N_LATENT,
    SH_COEFFS,
};
use crate::math::{quat_backward, quat_to_matrix, M3, V3, V4};
use crate::shading::{bake_dfg_lut, shade_backward, shade_surfel, BrdfParams, EnvGrads, EnvironmentLight};
use crate::splatter::{
    render, render_backward, BackwardOpts, PlaneGrads, RenderOpts, WorldSurfel,
};
use crate::training::{
    gather, pose_surfels_with, scatter, stage2_loss, surfel_ao, world_surfels_stage2, Frame, LossOpts, Model, NcMode,
    ParamLayout,
};
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one finite-difference suite.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub scenes: usize,
    pub checked: usize,
    /// Comparisons skipped because the perturbation crossed a discrete
    /// branch (legitimately non-smooth points).
    pub skipped: usize,
    pub max_rel: f64,
    pub tol: f64,
}

impl SuiteResult {
    pub fn pass(&self) -> bool {
        self.checked > 0 && self.max_rel < self.tol
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {} scenes, {} comparisons ({} skipped), max rel err {:.3e} (tol {:.0e})",
            if self.pass() { "PASS" } else { "FAIL" },
            self.name,
            self.scenes,
            self.checked,
            self.skipped,
            self.max_rel,
            self.tol
        )
    }
}

struct Tally {
    checked: usize,
    skipped: usize,
    max_rel: f64,
}

impl Tally {
    fn new() -> Self {
        Tally {
            checked: 0,
            skipped: 0,
            max_rel: 0.0,
        }
    }

    fn record(&mut self, analytic: f64, fd: f64, floor: f64) {
        let denom = analytic.abs().max(fd.abs());
        let rel = if denom < floor { 0.0 } else { (analytic - fd).abs() / denom };
        self.max_rel = self.max_rel.max(rel);
        self.checked += 1;
    }
}

// ---------------------------------------------------------------- raster

fn raster_scene(seed: u64) -> (Vec<WorldSurfel>, Vec<V4>, Camera) {
    let cam = Camera::look_at(V3::new(0.0, 0.0, -3.0), V3::zeros(), V3::new(0.0, 1.0, 0.0), 40.0, 32, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9));
    let n = 1 + (seed as usize % 2);
    let mut surfels = Vec::new();
    let mut quats = Vec::new();
    for _ in 0..n {
        let q = V4::new(
            1.0,
            rng.gen_range(-0.25..0.25),
            rng.gen_range(-0.25..0.25),
            rng.gen_range(-0.25..0.25),
        );
        let q = q / q.norm();
        surfels.push(WorldSurfel {
            position: V3::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(-0.2..0.2)),
            rotation: quat_to_matrix(&q),
            scale: [rng.gen_range(0.2..0.5), rng.gen_range(0.2..0.5)],
            opacity: rng.gen_range(0.4..0.9),
            attrs: vec![rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)],
        });
        quats.push(q);
    }
    (surfels, quats, cam)
}

fn raster_loss(surfels: &[WorldSurfel], cam: &Camera, grads: &PlaneGrads) -> (f64, u64) {
    let out = render(
        surfels,
        cam,
        &RenderOpts {
            retain: true,
            compute_depth_normals: false,
        },
    )
    .expect("render");
    let npix = out.width * out.height;
    let mut l = 0.0;
    for c in 0..out.n_channels {
        let plane = out.plane(c);
        for i in 0..npix {
            l += grads.attrs[c * npix + i] * plane[i];
        }
    }
    for i in 0..npix {
        l += grads.alpha[i] * out.alpha[i] + grads.depth[i] * out.depth[i];
    }
    (l, out.blend_fingerprint())
}

/// FD of one raster parameter; `None` when the perturbation changed the
/// discrete compositing configuration.
#[allow(clippy::too_many_arguments)]
fn raster_fd(
    surfels: &[WorldSurfel],
    quats: &[V4],
    cam: &Camera,
    grads: &PlaneGrads,
    base_fp: u64,
    set: impl Fn(&mut Vec<WorldSurfel>, &mut Vec<V4>, f64),
    step: f64,
) -> Option<f64> {
    let eval = |delta: f64| {
        let mut s = surfels.to_vec();
        let mut q = quats.to_vec();
        set(&mut s, &mut q, delta);
        for (surf, quat) in s.iter_mut().zip(&q) {
            surf.rotation = quat_to_matrix(quat);
        }
        raster_loss(&s, cam, grads)
    };
    let (lp, fp_p) = eval(step);
    let (lm, fp_m) = eval(-step);
    if fp_p != base_fp || fp_m != base_fp {
        return None;
    }
    Some((lp - lm) / (2.0 * step))
}

pub fn run_raster_suite(n_scenes: usize) -> SuiteResult {
    let step = 1e-4;
    let mut t = Tally::new();
    for seed in 0..n_scenes as u64 {
        let (surfels, quats, cam) = raster_scene(seed);
        let out = render(&surfels, &cam, &RenderOpts::default()).expect("render");
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(5));
        let npix = out.width * out.height;
        let grads = PlaneGrads {
            attrs: (0..out.n_channels * npix).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            alpha: (0..npix).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            depth: (0..npix)
                .map(|i| if out.alpha[i] > 1e-3 { rng.gen_range(-1.0..1.0) } else { 0.0 })
                .collect(),
        };
        let base_fp = raster_loss(&surfels, &cam, &grads).1;
        let g = render_backward(&surfels, &cam, &out, &grads, &BackwardOpts::default()).expect("backward");
        let mut push = |analytic: f64, fd: Option<f64>| match fd {
            Some(fd) => t.record(analytic, fd, 1e-7),
            None => t.skipped += 1,
        };
        for k in 0..surfels.len() {
            for a in 0..3 {
                push(
                    g.position[k][a],
                    raster_fd(&surfels, &quats, &cam, &grads, base_fp, |s, _, d| s[k].position[a] += d, step),
                );
            }
            for a in 0..2 {
                push(
                    g.scale[k][a],
                    raster_fd(&surfels, &quats, &cam, &grads, base_fp, |s, _, d| s[k].scale[a] += d, step),
                );
            }
            push(
                g.opacity[k],
                raster_fd(&surfels, &quats, &cam, &grads, base_fp, |s, _, d| s[k].opacity += d, step),
            );
            for c in 0..surfels[k].attrs.len() {
                push(
                    g.attrs[k * 2 + c],
                    raster_fd(&surfels, &quats, &cam, &grads, base_fp, |s, _, d| s[k].attrs[c] += d, step),
                );
            }
            let gq = quat_backward(&quats[k], &g.rotation[k]);
            for a in 0..4 {
                push(
                    gq[a],
                    raster_fd(&surfels, &quats, &cam, &grads, base_fp, |_, q, d| q[k][a] += d, step),
                );
            }
        }
    }
    SuiteResult {
        name: "raster-gradients",
        scenes: n_scenes,
        checked: t.checked,
        skipped: t.skipped,
        max_rel: t.max_rel,
        tol: 1e-3,
    }
}

// ----------------------------------------------------------- articulation

fn chain_template() -> SkinnedTemplate {
    let vertices = vec![
        V3::new(-0.5, 0.0, 0.0),
        V3::new(-0.5, 0.4, 0.1),
        V3::new(-0.5, -0.3, 0.2),
        V3::new(1.5, 0.0, 0.0),
        V3::new(1.5, 0.4, 0.1),
        V3::new(1.5, -0.3, 0.2),
    ];
    SkinnedTemplate::new(
        vertices,
        vec![[0, 1, 2], [3, 4, 5], [0, 1, 4], [0, 4, 3]],
        vec![V3::new(0.0, 0.0, 0.0), V3::new(1.0, 0.0, 0.0)],
        vec![-1, 0],
        vec![
            vec![1.0, 0.0],
            vec![0.9, 0.1],
            vec![0.8, 0.2],
            vec![0.0, 1.0],
            vec![0.1, 0.9],
            vec![0.2, 0.8],
        ],
        vec![V3::new(0.0, 0.0, 1.0); 6],
    )
    .expect("chain template")
}

pub fn run_articulation_suite(n_scenes: usize) -> Result<SuiteResult> {
    let tpl = chain_template();
    let grid = bake_skinning_grid(&tpl, [5, 5, 5])?;
    let mut t = Tally::new();
    for seed in 0..n_scenes as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
        let mut pose = Pose::rest(2);
        pose.theta = (0..6).map(|_| rng.gen_range(-0.9..0.9)).collect();
        pose.translation = V3::new(rng.gen_range(-0.2..0.2), 0.0, 0.1);
        let mut net = LatentBoneNet::new(2, seed.wrapping_add(1));
        let nw = net.weights.len();
        let tail = nw - 6 * N_LATENT - 64 * 6 * N_LATENT;
        for w in net.weights[tail..].iter_mut() {
            *w = rng.gen_range(-0.05..0.05);
        }
        let surfels = SurfelSet {
            surfels: (0..3)
                .map(|_| {
                    let q = V4::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    );
                    Surfel {
                        position: V3::new(
                            rng.gen_range(-0.3..1.3),
                            rng.gen_range(-0.2..0.3),
                            rng.gen_range(0.02..0.18),
                        ),
                        quat: q / q.norm(),
                        scale: [0.1, 0.1],
                        opacity: 0.5,
                        sh: [[0.5; 3]; SH_COEFFS],
                        albedo: V3::new(0.5, 0.5, 0.5),
                        roughness: 0.5,
                        metallic: 0.0,
                        dw: vec![rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)],
                        wt: std::array::from_fn(|_| rng.gen_range(-0.3..0.3)),
                    }
                })
                .collect(),
            sh_degree: 2,
            n_bones: 2,
        };
        // random linear functional of posed positions and rotations
        let a: Vec<V3> = (0..3)
            .map(|_| V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let c: Vec<M3> = (0..3).map(|_| M3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();

        let loss = |surf: &SurfelSet, network: &LatentBoneNet| -> Result<f64> {
            let mut bones = BoneSet::rigid_only(forward_kinematics(&tpl, &pose)?);
            bones.latent = latent_bones(network, &pose)?.0;
            let out = articulate(surf, &grid, &bones)?;
            Ok((0..surf.len())
                .map(|k| a[k].dot(&out.positions[k]) + c[k].dot(&out.rotations[k]))
                .sum())
        };

        let mut bones = BoneSet::rigid_only(forward_kinematics(&tpl, &pose)?);
        let (latent, lctx) = latent_bones(&net, &pose)?;
        bones.latent = latent;
        let out = articulate(&surfels, &grid, &bones)?;
        let g = articulate_backward(&surfels, &bones, &out, &a, &c)?;
        let g_net = latent_bones_backward(&net, &lctx, &g.latent)?;

        let eps = 1e-6;
        let fd_surf = |mutate: &dyn Fn(&mut SurfelSet, f64)| -> Result<f64> {
            let mut p = surfels.clone();
            let mut m = surfels.clone();
            mutate(&mut p, eps);
            mutate(&mut m, -eps);
            Ok((loss(&p, &net)? - loss(&m, &net)?) / (2.0 * eps))
        };
        // the trilinearly interpolated skinning field has C0 kinks at cell
        // boundaries; skip position probes whose stencil straddles one
        let cell = |p: &V3| -> [i64; 3] {
            std::array::from_fn(|a| {
                let t = (p[a] - grid.min[a]) / (grid.max[a] - grid.min[a]) * (grid.res[a] - 1) as f64;
                (t.floor() as i64).clamp(0, grid.res[a] as i64 - 2)
            })
        };
        for k in 0..surfels.len() {
            for axis in 0..3 {
                let p0 = surfels.surfels[k].position;
                let mut hi = p0;
                let mut lo = p0;
                hi[axis] += eps;
                lo[axis] -= eps;
                if cell(&hi) != cell(&lo) {
                    t.skipped += 1;
                    continue;
                }
                let fd = fd_surf(&|s, d| s.surfels[k].position[axis] += d)?;
                t.record(g.position[k][axis], fd, 1e-6);
            }
            let gq = quat_backward(&surfels.surfels[k].quat, &g.rotation[k]);
            for axis in 0..4 {
                let fd = fd_surf(&|s, d| s.surfels[k].quat[axis] += d)?;
                t.record(gq[axis], fd, 1e-6);
            }
            for i in 0..2 {
                let fd = fd_surf(&|s, d| s.surfels[k].dw[i] += d)?;
                t.record(g.dw[k][i], fd, 1e-6);
            }
            for j in 0..N_LATENT {
                let fd = fd_surf(&|s, d| s.surfels[k].wt[j] += d)?;
                t.record(g.wt[k][j], fd, 1e-6);
            }
        }
        // wider step for the network weights: their loss contributions are
        // tiny relative to the total, so eps = 1e-6 sits below cancellation
        // noise
        let net_eps = 1e-4;
        for wi in [0usize, 7, 131, nw / 2, nw - 1, nw - 30] {
            let mut p = net.clone();
            let mut m = net.clone();
            p.weights[wi] += net_eps;
            m.weights[wi] -= net_eps;
            let fd = (loss(&surfels, &p)? - loss(&surfels, &m)?) / (2.0 * net_eps);
            t.record(g_net[wi], fd, 1e-6);
        }
    }
    Ok(SuiteResult {
        name: "articulation-gradients",
        scenes: n_scenes,
        checked: t.checked,
        skipped: t.skipped,
        max_rel: t.max_rel,
        tol: 1e-3,
    })
}

// --------------------------------------------------------------- shading

pub fn run_shading_suite(n_scenes: usize) -> Result<SuiteResult> {
    let lut = bake_dfg_lut();
    let mut t = Tally::new();
    for seed in 0..n_scenes as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7000));
        let mut env = EnvironmentLight::from_params(
            16,
            (0..16 * 16 * 6 * 3).map(|_| rng.gen_range(-1.5..0.5)).collect(),
        )?;
        env.refresh();
        // well-conditioned inputs: away from roughness/NoV clamp boundaries
        let n = {
            let v = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            v / v.norm()
        };
        let view = {
            let mut v = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            v /= v.norm();
            if v.dot(&n) < 0.25 {
                v = (v + n * (0.3 - v.dot(&n))).normalize();
            }
            v
        };
        let p = BrdfParams {
            albedo: V3::new(rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)),
            roughness: rng.gen_range(0.2..0.85),
            metallic: rng.gen_range(0.05..0.8),
            normal: n,
            view,
        };
        let ao = rng.gen_range(0.0..0.8);
        let w = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));

        let loss = |p: &BrdfParams, env: &EnvironmentLight| -> Result<f64> {
            let (color, _) = shade_surfel(p, env, &lut, ao)?;
            Ok(w.dot(&color))
        };

        let (_, ctx) = shade_surfel(&p, &env, &lut, ao)?;
        let mut env_grads = EnvGrads::zeros(&env);
        let g = shade_backward(&p, ao, &ctx, &w, &mut env_grads);
        let g_env = env.backward(&env_grads);

        let eps = 1e-5;
        let fd_p = |mutate: &dyn Fn(&mut BrdfParams, f64)| -> Result<f64> {
            let mut hi = p.clone();
            let mut lo = p.clone();
            mutate(&mut hi, eps);
            mutate(&mut lo, -eps);
            Ok((loss(&hi, &env)? - loss(&lo, &env)?) / (2.0 * eps))
        };
        for c in 0..3 {
            t.record(g.albedo[c], fd_p(&|q, d| q.albedo[c] += d)?, 1e-7);
        }
        t.record(g.roughness, fd_p(&|q, d| q.roughness += d)?, 1e-7);
        t.record(g.metallic, fd_p(&|q, d| q.metallic += d)?, 1e-7);
        // normal lives on the unit sphere: renormalize in the FD and compare
        // against the tangential (projected) gradient
        let proj = g.normal - p.normal * p.normal.dot(&g.normal);
        for c in 0..3 {
            let fd = fd_p(&|q, d| {
                q.normal[c] += d;
                q.normal = q.normal.normalize();
            })?;
            t.record(proj[c], fd, 1e-7);
        }
        for c in 0..3 {
            t.record(g.view[c], fd_p(&|q, d| q.view[c] += d)?, 1e-7);
        }
        // a handful of environment parameters, prefilter re-run per probe
        for _ in 0..4 {
            let i = rng.gen_range(0..env.params.len());
            let fd = {
                let mut hi = env.clone();
                let mut lo = env.clone();
                hi.params[i] += eps;
                lo.params[i] -= eps;
                hi.mark_dirty();
                lo.mark_dirty();
                hi.refresh();
                lo.refresh();
                (loss(&p, &hi)? - loss(&p, &lo)?) / (2.0 * eps)
            };
            t.record(g_env[i], fd, 1e-7);
        }
    }
    Ok(SuiteResult {
        name: "shading-gradients",
        scenes: n_scenes,
        checked: t.checked,
        skipped: t.skipped,
        max_rel: t.max_rel,
        tol: 1e-2,
    })
}

// -------------------------------------------------------------- full loss

fn sheet_scene(seed: u64) -> Result<(SkinnedTemplate, Model)> {
    let n_side = 3;
    let mut vertices = Vec::new();
    let mut weights = Vec::new();
    for j in 0..n_side {
        for i in 0..n_side {
            let x = -0.8 + 1.6 * i as f64 / (n_side - 1) as f64;
            let y = -0.8 + 1.6 * j as f64 / (n_side - 1) as f64;
            vertices.push(V3::new(x, y, 0.0));
            let w1 = ((y + 0.8) / 1.6).clamp(0.0, 1.0);
            weights.push(vec![1.0 - w1, w1]);
        }
    }
    let mut faces = Vec::new();
    for j in 0..n_side - 1 {
        for i in 0..n_side - 1 {
            let a = (j * n_side + i) as u32;
            let (b, c, d) = (a + 1, a + n_side as u32, a + n_side as u32 + 1);
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    let nv = vertices.len();
    let tpl = SkinnedTemplate::new(
        vertices,
        faces,
        vec![V3::new(0.0, -0.5, 0.0), V3::new(0.0, 0.5, 0.0)],
        vec![-1, 0],
        weights,
        vec![V3::new(0.0, 0.0, 1.0); nv],
    )?;
    let mut surfels = init_surfels_from_template(&tpl)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in &mut surfels.surfels {
        s.position.z += rng.gen_range(-0.08..0.08);
        s.opacity = 0.9;
        for c in 0..3 {
            s.sh[0][c] = rng.gen_range(0.2..0.8);
            s.albedo[c] = rng.gen_range(0.2..0.8);
        }
        s.roughness = rng.gen_range(0.3..0.9);
        s.metallic = rng.gen_range(0.0..0.5);
    }
    let mut env = EnvironmentLight::from_params(
        16,
        (0..16 * 16 * 6 * 3).map(|_| rng.gen_range(-1.5..0.5)).collect(),
    )?;
    env.refresh();
    Ok((
        tpl,
        Model {
            surfels,
            net: LatentBoneNet::new(2, seed),
            env,
            free_normals: None,
        },
    ))
}

pub fn run_full_loss_suite(n_scenes: usize) -> Result<SuiteResult> {
    let lut = bake_dfg_lut();
    let mut t = Tally::new();
    for seed in 0..n_scenes as u64 {
        let (tpl, model) = sheet_scene(seed.wrapping_add(40))?;
        let grid = bake_skinning_grid(&tpl, [8, 8, 8])?;
        let cam = Camera::look_at(V3::new(0.0, 0.0, -3.0), V3::zeros(), V3::new(0.0, 1.0, 0.0), 40.0, 16, 16);
        let mut pose = Pose::rest(2);
        pose.theta[3] = 0.2;
        let posed = pose_surfels_with(&model, &grid, &tpl, &pose, &cam)?;
        let ao = surfel_ao(&posed, None);
        let (world, _) = world_surfels_stage2(&model, &posed, &ao, &lut, false)?;
        let out = render(&world, &cam, &RenderOpts::default())?;
        let npix = out.width * out.height;
        // offset ground truth so the l1 signs are stable under perturbation
        let image: Vec<f64> = out.attrs[..3 * npix].iter().map(|v| v + 0.1).collect();
        let mask: Vec<f64> = out.alpha.iter().map(|&a| if a > 0.5 { 1.0 } else { 0.0 }).collect();
        let frame = Frame {
            image,
            mask,
            pose,
            camera: cam,
        };
        let layout = ParamLayout::new(model.surfels.len(), 2, model.net.weights.len(), model.env.params.len(), false);
        let full = LossOpts {
            nc_weight: 0.05,
            nc_mode: NcMode::FixSplats,
            ..Default::default()
        };
        let mut frozen = None;
        let (_, grads, _) = stage2_loss(&model, &grid, &tpl, &frame, None, &lut, &full, &layout, Some(&mut frozen))?;
        let frozen = frozen.expect("fix-splats pass captures the linearization");
        let no_nc = LossOpts {
            nc_weight: 0.0,
            ..full.clone()
        };
        let fd_total = |flat: &[f64]| -> Result<f64> {
            let mut m = Model {
                surfels: model.surfels.clone(),
                net: LatentBoneNet::from_weights(model.net.layout.clone(), model.net.weights.clone())?,
                env: EnvironmentLight::from_params(model.env.res, model.env.params.clone())?,
                free_normals: None,
            };
            scatter(&layout, flat, &mut m.surfels, &mut m.net, &mut m.env, None);
            m.env.refresh();
            let (bd, _, _) = stage2_loss(&m, &grid, &tpl, &frame, None, &lut, &no_nc, &layout, None)?;
            let posed = pose_surfels_with(&m, &grid, &tpl, &frame.pose, &frame.camera)?;
            let lin: f64 = frozen.coeff.iter().zip(&posed.normals).map(|(c, n)| c.dot(n)).sum();
            Ok(bd.total + frozen.constant + lin)
        };
        let (_, base_flat) = gather(&model.surfels, &model.net, &model.env, None);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(13).wrapping_add(99));
        let mut informative = 0;
        let mut attempts = 0;
        while informative < 8 && attempts < 120 {
            attempts += 1;
            let i = rng.gen_range(0..layout.total);
            let a = grads.flat[i];
            let eps = 1e-5;
            let mut plus = base_flat.clone();
            plus[i] += eps;
            let mut minus = base_flat.clone();
            minus[i] -= eps;
            let f = (fd_total(&plus)? - fd_total(&minus)?) / (2.0 * eps);
            if a.abs() < 1e-7 && f.abs() < 1e-7 {
                continue;
            }
            let denom = a.abs().max(f.abs()).max(1e-5);
            t.max_rel = t.max_rel.max((a - f).abs() / denom);
            t.checked += 1;
            informative += 1;
        }
    }
    Ok(SuiteResult {
        name: "full-loss-gradients",
        scenes: n_scenes,
        checked: t.checked,
        skipped: t.skipped,
        max_rel: t.max_rel,
        tol: 1e-2,
    })
}

/// Run every suite at the standard scene counts (≥100 scenes total).
pub fn run_all() -> Result<Vec<SuiteResult>> {
    Ok(vec![
        run_raster_suite(40),
        run_articulation_suite(30)?,
        run_shading_suite(24)?,
        run_full_loss_suite(8)?,
    ])
}
