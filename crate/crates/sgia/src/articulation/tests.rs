use super::*;
use crate::core::{bake_skinning_grid, Surfel, N_LATENT, SH_COEFFS};
use crate::math::{quat_backward, V4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

fn one_joint_template() -> SkinnedTemplate {
    SkinnedTemplate::new(
        vec![
            V3::new(0.0, 0.0, 0.0),
            V3::new(1.0, 0.0, 0.0),
            V3::new(0.0, 1.0, 0.0),
            V3::new(0.0, 0.0, 1.0),
        ],
        vec![[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]],
        vec![V3::new(0.25, 0.25, 0.25)],
        vec![-1],
        vec![vec![1.0]; 4],
        vec![V3::new(0.0, 0.0, 1.0); 4],
    )
    .unwrap()
}

fn two_joint_template() -> SkinnedTemplate {
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
    .unwrap()
}

fn zero_pose(n_joints: usize) -> Pose {
    Pose {
        theta: vec![0.0; 3 * n_joints],
        translation: V3::zeros(),
        beta: vec![],
    }
}

fn test_surfel(position: V3, quat: V4, n_bones: usize) -> Surfel {
    Surfel {
        position,
        quat: quat / quat.norm(),
        scale: [0.1, 0.1],
        opacity: 0.5,
        sh: [[0.5; 3]; SH_COEFFS],
        albedo: V3::new(0.5, 0.5, 0.5),
        roughness: 0.5,
        metallic: 0.0,
        dw: vec![0.0; n_bones],
        wt: [0.0; N_LATENT],
    }
}

fn surfel_set(surfels: Vec<Surfel>, n_bones: usize) -> SurfelSet {
    SurfelSet {
        surfels,
        sh_degree: 2,
        n_bones,
    }
}

#[test]
fn fk_zero_pose_gives_identity_bones() {
    let tpl = two_joint_template();
    let bones = forward_kinematics(&tpl, &zero_pose(2)).unwrap();
    for b in &bones {
        assert!((b.rot - M3::identity()).norm() < 1e-12);
        assert!(b.t.norm() < 1e-12);
    }
}

#[test]
fn fk_root_translation_moves_every_bone() {
    let tpl = two_joint_template();
    let mut pose = zero_pose(2);
    pose.translation = V3::new(0.3, -0.2, 0.7);
    let bones = forward_kinematics(&tpl, &pose).unwrap();
    for b in &bones {
        assert!((b.rot - M3::identity()).norm() < 1e-12);
        assert!((b.t - pose.translation).norm() < 1e-12);
    }
}

#[test]
fn fk_single_joint_quarter_turn() {
    let tpl = one_joint_template();
    let mut pose = zero_pose(1);
    pose.theta = vec![0.0, 0.0, FRAC_PI_2];
    let bones = forward_kinematics(&tpl, &pose).unwrap();
    let b = &bones[0];
    // the joint itself is the fixed point of the rotation
    let j = tpl.joints[0];
    assert!((b.apply(&j) - j).norm() < 1e-12);
    // a canonical +x offset from the joint swings to +y
    let moved = b.apply(&(j + V3::new(1.0, 0.0, 0.0)));
    assert!((moved - (j + V3::new(0.0, 1.0, 0.0))).norm() < 1e-9);
}

#[test]
fn articulate_identity_is_identity() {
    let tpl = two_joint_template();
    let grid = bake_skinning_grid(&tpl, [4, 4, 4]).unwrap();
    let bones = BoneSet::rigid_only(forward_kinematics(&tpl, &zero_pose(2)).unwrap());
    let surfels = surfel_set(
        vec![
            test_surfel(V3::new(0.0, 0.1, 0.05), V4::new(1.0, 0.2, -0.1, 0.3), 2),
            test_surfel(V3::new(0.9, -0.1, 0.1), V4::new(0.8, 0.1, 0.4, -0.2), 2),
        ],
        2,
    );
    let out = articulate(&surfels, &grid, &bones).unwrap();
    for (k, s) in surfels.surfels.iter().enumerate() {
        assert!((out.positions[k] - s.position).norm() < 1e-6);
        assert!((out.rotations[k] - s.rotation()).norm() < 1e-6);
    }
}

#[test]
fn articulate_single_bone_translation_is_rigid() {
    let tpl = one_joint_template();
    let grid = bake_skinning_grid(&tpl, [4, 4, 4]).unwrap();
    let t = V3::new(0.2, 0.5, -0.3);
    let bones = BoneSet::rigid_only(vec![Rigid {
        rot: M3::identity(),
        t,
    }]);
    let s = test_surfel(V3::new(0.2, 0.2, 0.2), V4::new(1.0, 0.3, 0.1, -0.2), 1);
    let surfels = surfel_set(vec![s.clone()], 1);
    let out = articulate(&surfels, &grid, &bones).unwrap();
    assert!((out.positions[0] - (s.position + t)).norm() < 1e-12);
    assert!((out.rotations[0] - s.rotation()).norm() < 1e-9);
}

#[test]
fn articulate_half_half_translation_blend() {
    let tpl = two_joint_template();
    let grid = bake_skinning_grid(&tpl, [4, 4, 4]).unwrap();
    let (t1, t2) = (V3::new(0.4, 0.0, 0.0), V3::new(0.0, -0.2, 0.6));
    let bones = BoneSet::rigid_only(vec![
        Rigid { rot: M3::identity(), t: t1 },
        Rigid { rot: M3::identity(), t: t2 },
    ]);
    let mut s = test_surfel(V3::new(0.5, 0.1, 0.1), V4::new(1.0, 0.0, 0.0, 0.0), 2);
    // offset the grid-sampled weights to exactly (0.5, 0.5)
    let base = grid.query(&s.position);
    s.dw = vec![0.5 - base[0], 0.5 - base[1]];
    let surfels = surfel_set(vec![s.clone()], 2);
    let out = articulate(&surfels, &grid, &bones).unwrap();
    assert!((out.positions[0] - (s.position + (t1 + t2) * 0.5)).norm() < 1e-12);
}

#[test]
fn posed_rotations_are_orthonormal() {
    let tpl = two_joint_template();
    let grid = bake_skinning_grid(&tpl, [4, 4, 4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pose = zero_pose(2);
    pose.theta = (0..6).map(|_| rng.gen_range(-1.2..1.2)).collect();
    let mut bones = BoneSet::rigid_only(forward_kinematics(&tpl, &pose).unwrap());
    for b in bones.latent.iter_mut() {
        b.rot = axis_angle_to_matrix(&V3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), 0.3));
        b.t = V3::new(rng.gen_range(-0.2..0.2), 0.0, 0.1);
    }
    let surfels = surfel_set(
        (0..4)
            .map(|_| {
                let mut s = test_surfel(
                    V3::new(rng.gen_range(-0.4..1.4), rng.gen_range(-0.2..0.3), rng.gen_range(0.0..0.2)),
                    V4::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    2,
                );
                s.dw = vec![rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
                s.wt = [0.2, -0.1, 0.15, 0.05];
                s
            })
            .collect(),
        2,
    );
    let out = articulate(&surfels, &grid, &bones).unwrap();
    for r in &out.rotations {
        let err = (r.transpose() * r - M3::identity()).norm();
        assert!(err < 1e-5, "orthonormality error {err}");
    }
}

#[test]
fn rigid_subset_preserves_pairwise_distance() {
    let tpl = one_joint_template();
    let grid = bake_skinning_grid(&tpl, [4, 4, 4]).unwrap();
    let mut pose = zero_pose(1);
    pose.theta = vec![0.4, -0.7, 0.9];
    pose.translation = V3::new(0.1, 0.2, 0.3);
    let bones = BoneSet::rigid_only(forward_kinematics(&tpl, &pose).unwrap());
    let a = test_surfel(V3::new(0.1, 0.2, 0.3), V4::new(1.0, 0.0, 0.0, 0.0), 1);
    let b = test_surfel(V3::new(0.5, 0.1, 0.0), V4::new(1.0, 0.0, 0.0, 0.0), 1);
    let d0 = (a.position - b.position).norm();
    let surfels = surfel_set(vec![a, b], 1);
    let out = articulate(&surfels, &grid, &bones).unwrap();
    let d1 = (out.positions[0] - out.positions[1]).norm();
    assert!((d0 - d1).abs() < 1e-9);
}

#[test]
fn pose_template_identity_and_rigid_rotation() {
    let tpl = one_joint_template();
    let id_bones = BoneSet::rigid_only(forward_kinematics(&tpl, &zero_pose(1)).unwrap());
    let posed = pose_template(&tpl, &id_bones, &[]).unwrap();
    for (v, r) in posed.vertices.iter().zip(&tpl.vertices) {
        assert!((v - r).norm() < 1e-12);
    }

    let mut pose = zero_pose(1);
    pose.theta = vec![0.0, FRAC_PI_2, 0.0];
    let bones = BoneSet::rigid_only(forward_kinematics(&tpl, &pose).unwrap());
    let rot = bones.bones[0].rot;
    let posed = pose_template(&tpl, &bones, &[]).unwrap();
    let canon_normals = tpl.compute_vertex_normals(&tpl.vertices);
    for (n, n0) in posed.normals.iter().zip(&canon_normals) {
        assert!((n - rot * n0).norm() < 1e-9);
    }
}

#[test]
fn latent_net_starts_as_identity_and_depends_on_pose() {
    let net = LatentBoneNet::new(2, 9);
    let (bones, _) = latent_bones(&net, &zero_pose(2)).unwrap();
    for b in &bones {
        assert_eq!(b.rot, M3::identity());
        assert_eq!(b.t, V3::zeros());
    }

    // make the output layer nonzero so the net is not constant
    let mut net = net;
    let n = net.weights.len();
    for (i, w) in net.weights[n - 6 * N_LATENT - 64 * 6 * N_LATENT..].iter_mut().enumerate() {
        *w = 0.01 * ((i % 13) as f64 - 6.0);
    }
    let mut p1 = zero_pose(2);
    p1.theta = vec![0.1, 0.2, -0.3, 0.4, -0.5, 0.6];
    let mut p2 = zero_pose(2);
    p2.theta = vec![-0.6, 0.5, 0.4, -0.3, 0.2, -0.1];
    let (b1, _) = latent_bones(&net, &p1).unwrap();
    let (b2, _) = latent_bones(&net, &p2).unwrap();
    assert!(b1.iter().zip(&b2).any(|(a, b)| (a.rot - b.rot).norm() > 1e-9 || (a.t - b.t).norm() > 1e-9));
}

/// Shared random setup for the articulation gradient checks.
struct GradScene {
    tpl: SkinnedTemplate,
    grid: crate::core::SkinningGrid,
    pose: Pose,
    net: LatentBoneNet,
    surfels: SurfelSet,
    a: Vec<V3>,
    c: Vec<M3>,
}

fn grad_scene(seed: u64) -> GradScene {
    let tpl = two_joint_template();
    let grid = bake_skinning_grid(&tpl, [5, 5, 5]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pose = zero_pose(2);
    pose.theta = (0..6).map(|_| rng.gen_range(-0.9..0.9)).collect();
    pose.translation = V3::new(rng.gen_range(-0.2..0.2), 0.0, 0.1);
    let mut net = LatentBoneNet::new(2, seed.wrapping_add(1));
    // random output layer so latent bones are active
    let n = net.weights.len();
    let tail = n - 6 * N_LATENT - 64 * 6 * N_LATENT;
    for w in net.weights[tail..].iter_mut() {
        *w = rng.gen_range(-0.05..0.05);
    }
    let surfels = surfel_set(
        (0..3)
            .map(|_| {
                let mut s = test_surfel(
                    V3::new(rng.gen_range(-0.3..1.3), rng.gen_range(-0.2..0.3), rng.gen_range(0.02..0.18)),
                    V4::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    2,
                );
                s.dw = vec![rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
                s.wt = std::array::from_fn(|_| rng.gen_range(-0.3..0.3));
                s
            })
            .collect(),
        2,
    );
    let a = (0..3).map(|_| V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let c = (0..3)
        .map(|_| M3::from_fn(|_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    GradScene {
        tpl,
        grid,
        pose,
        net,
        surfels,
        a,
        c,
    }
}

fn scene_loss(sc: &GradScene, surfels: &SurfelSet, net: &LatentBoneNet) -> f64 {
    let mut bones = BoneSet::rigid_only(forward_kinematics(&sc.tpl, &sc.pose).unwrap());
    bones.latent = latent_bones(net, &sc.pose).unwrap().0;
    let out = articulate(surfels, &sc.grid, &bones).unwrap();
    let mut l = 0.0;
    for k in 0..surfels.len() {
        l += sc.a[k].dot(&out.positions[k]) + sc.c[k].dot(&out.rotations[k]);
    }
    l
}

fn rel_err(a: f64, b: f64) -> f64 {
    let d = a.abs().max(b.abs());
    if d < 1e-8 {
        0.0
    } else {
        (a - b).abs() / d
    }
}

#[test]
fn articulation_gradients_match_finite_differences() {
    for seed in 0..3u64 {
        let sc = grad_scene(seed);
        let mut bones = BoneSet::rigid_only(forward_kinematics(&sc.tpl, &sc.pose).unwrap());
        let (latent, latent_ctx) = latent_bones(&sc.net, &sc.pose).unwrap();
        bones.latent = latent;
        let out = articulate(&sc.surfels, &sc.grid, &bones).unwrap();
        let g = articulate_backward(&sc.surfels, &bones, &out, &sc.a, &sc.c).unwrap();
        let g_net = latent_bones_backward(&sc.net, &latent_ctx, &g.latent).unwrap();

        let eps = 1e-6;
        let fd = |plus: &SurfelSet, minus: &SurfelSet| {
            (scene_loss(&sc, plus, &sc.net) - scene_loss(&sc, minus, &sc.net)) / (2.0 * eps)
        };
        for k in 0..sc.surfels.len() {
            for axis in 0..3 {
                let mut p = sc.surfels.clone();
                let mut m = sc.surfels.clone();
                p.surfels[k].position[axis] += eps;
                m.surfels[k].position[axis] -= eps;
                let e = rel_err(g.position[k][axis], fd(&p, &m));
                assert!(e < 1e-3, "seed {seed} s{k} position[{axis}] rel {e}");
            }
            let gq = quat_backward(&sc.surfels.surfels[k].quat, &g.rotation[k]);
            for axis in 0..4 {
                let mut p = sc.surfels.clone();
                let mut m = sc.surfels.clone();
                p.surfels[k].quat[axis] += eps;
                m.surfels[k].quat[axis] -= eps;
                let e = rel_err(gq[axis], fd(&p, &m));
                assert!(e < 1e-3, "seed {seed} s{k} quat[{axis}] rel {e}");
            }
            for i in 0..2 {
                let mut p = sc.surfels.clone();
                let mut m = sc.surfels.clone();
                p.surfels[k].dw[i] += eps;
                m.surfels[k].dw[i] -= eps;
                let e = rel_err(g.dw[k][i], fd(&p, &m));
                assert!(e < 1e-3, "seed {seed} s{k} dw[{i}] rel {e}");
            }
            for j in 0..N_LATENT {
                let mut p = sc.surfels.clone();
                let mut m = sc.surfels.clone();
                p.surfels[k].wt[j] += eps;
                m.surfels[k].wt[j] -= eps;
                let e = rel_err(g.wt[k][j], fd(&p, &m));
                assert!(e < 1e-3, "seed {seed} s{k} wt[{j}] rel {e}");
            }
        }

        // a spread of net weights across all three layers
        let nw = sc.net.weights.len();
        for wi in [0usize, 7, 131, nw / 2, nw - 1, nw - 30, nw - 200] {
            let mut p = sc.net.clone();
            let mut m = sc.net.clone();
            p.weights[wi] += eps;
            m.weights[wi] -= eps;
            let fdv = (scene_loss(&sc, &sc.surfels, &p) - scene_loss(&sc, &sc.surfels, &m)) / (2.0 * eps);
            let e = rel_err(g_net[wi], fdv);
            assert!(e < 1e-3, "seed {seed} net weight {wi}: analytic {} vs fd {fdv} (rel {e})", g_net[wi]);
        }
    }
}
