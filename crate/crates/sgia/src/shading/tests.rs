use super::*;
use crate::math::softplus_inv;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn constant_env(res: usize, radiance: f64) -> EnvironmentLight {
    EnvironmentLight::new(res, radiance)
}

/// Environment whose radiance is a smooth linear function of direction.
fn smooth_env(res: usize) -> EnvironmentLight {
    let mut params = vec![0.0; 6 * res * res * 3];
    for face in 0..6 {
        for j in 0..res {
            for i in 0..res {
                let d = texel_dir(res, face, i, j);
                let t = texel_index(res, face, i, j);
                let base = 1.0 + 0.3 * d.x + 0.2 * d.y - 0.1 * d.z;
                for c in 0..3 {
                    params[3 * t + c] = softplus_inv(base * (0.8 + 0.1 * c as f64));
                }
            }
        }
    }
    EnvironmentLight::from_params(res, params).unwrap()
}

fn random_env(res: usize, seed: u64) -> EnvironmentLight {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = (0..6 * res * res * 3).map(|_| rng.gen_range(-2.0..1.5)).collect();
    EnvironmentLight::from_params(res, params).unwrap()
}

fn unit(v: V3) -> V3 {
    v.normalize()
}

#[test]
fn prefilter_of_constant_environment_is_constant() {
    let env = constant_env(16, 0.8);
    for l in 0..SPEC_MIPS {
        for v in env.mip(l) {
            assert!((v - 0.8).abs() < 1e-9, "mip {l}: {v}");
        }
    }
    let d = env.sample_diffuse(&unit(V3::new(0.3, 0.8, -0.2)));
    assert!((d.value - V3::new(0.8, 0.8, 0.8)).norm() < 1e-9);
}

#[test]
fn black_environment_stays_black() {
    let env = EnvironmentLight::from_params(8, vec![-40.0; 6 * 8 * 8 * 3]).unwrap();
    for l in 0..SPEC_MIPS {
        assert!(env.mip(l).iter().all(|&v| v < 1e-12));
    }
}

#[test]
fn bright_spot_spreads_and_dims_with_mip_level() {
    // a bright 15-degree blob: wide enough that every mip's fixed sample set
    // resolves it, unlike a single-texel delta
    let res = 64;
    let hot_dir = texel_dir(res, 2, 32, 32);
    let sigma = 15f64.to_radians();
    let mut params = vec![0.0; 6 * res * res * 3];
    for face in 0..6 {
        for j in 0..res {
            for i in 0..res {
                let ang = texel_dir(res, face, i, j).dot(&hot_dir).clamp(-1.0, 1.0).acos();
                let v = 1e-6 + 20.0 * (-ang * ang / (2.0 * sigma * sigma)).exp();
                let t = texel_index(res, face, i, j);
                for c in 0..3 {
                    params[3 * t + c] = softplus_inv(v);
                }
            }
        }
    }
    let env = EnvironmentLight::from_params(res, params).unwrap();
    // widening lobes spread the energy: the response at the blob center
    // falls off with every mip level
    let peaks: Vec<f64> = (0..SPEC_MIPS)
        .map(|l| sample_bilinear(env.mip(l), (res >> l).max(1), &hot_dir).value[0])
        .collect();
    for l in 1..SPEC_MIPS {
        assert!(peaks[l] < peaks[l - 1], "peaks {peaks:?}");
    }
}

#[test]
fn irradiance_at_hemisphere_boundary_is_half() {
    let res = 16;
    let mut params = vec![softplus_inv(1e-9); 6 * res * res * 3];
    for face in 0..6 {
        for j in 0..res {
            for i in 0..res {
                if texel_dir(res, face, i, j).y > 0.0 {
                    let t = texel_index(res, face, i, j);
                    for c in 0..3 {
                        params[3 * t + c] = softplus_inv(1.0);
                    }
                }
            }
        }
    }
    let env = EnvironmentLight::from_params(res, params).unwrap();
    let d = env.sample_diffuse(&V3::new(1.0, 0.0, 0.0));
    assert!((d.value[0] - 0.5).abs() < 0.03, "boundary irradiance {}", d.value[0]);
    // facing the lit hemisphere: nearly full irradiance
    let up = env.sample_diffuse(&V3::new(0.0, 1.0, 0.0));
    assert!(up.value[0] > 0.9);
}

#[test]
fn smooth_environment_is_continuous_across_seams() {
    let env = smooth_env(32);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // pairs of directions straddling face edges
    for _ in 0..200 {
        let t = rng.gen_range(-0.95..0.95);
        let e = 2e-3;
        let pairs = [
            (V3::new(1.0, t, 1.0 - e), V3::new(1.0 - e, t, 1.0)),
            (V3::new(t, 1.0, 1.0 - e), V3::new(t, 1.0 - e, 1.0)),
            (V3::new(1.0, 1.0 - e, t), V3::new(1.0 - e, 1.0, t)),
        ];
        for (a, b) in pairs {
            let va = env.sample_diffuse(&unit(a)).value;
            let vb = env.sample_diffuse(&unit(b)).value;
            for c in 0..3 {
                let jump = (va[c] - vb[c]).abs() / va[c].max(1e-6);
                assert!(jump < 0.02, "seam jump {jump}");
            }
            let sa = env.sample_specular(&unit(a), 0.5).value;
            let sb = env.sample_specular(&unit(b), 0.5).value;
            for c in 0..3 {
                let jump = (sa[c] - sb[c]).abs() / sa[c].max(1e-6);
                assert!(jump < 0.02, "specular seam jump {jump}");
            }
        }
    }
}

fn test_params(albedo: V3, r: f64, m: f64) -> BrdfParams {
    BrdfParams {
        albedo,
        roughness: r,
        metallic: m,
        normal: unit(V3::new(0.2, 0.9, 0.1)),
        view: unit(V3::new(0.4, 0.8, -0.3)),
    }
}

#[test]
fn fully_occluded_specular_leaves_pure_diffuse() {
    let env = constant_env(16, 1.3);
    let lut = bake_dfg_lut();
    let p = test_params(V3::new(0.6, 0.4, 0.2), 0.5, 0.3);
    let (out, _) = shade_surfel(&p, &env, &lut, 1.0).unwrap();
    let expect = p.albedo * (1.0 - p.metallic) * 1.3;
    assert!((out - expect).norm() < 1e-9, "{out:?} vs {expect:?}");
}

#[test]
fn black_environment_shades_black() {
    let env = EnvironmentLight::from_params(8, vec![-40.0; 6 * 8 * 8 * 3]).unwrap();
    let lut = bake_dfg_lut();
    let p = test_params(V3::new(0.9, 0.9, 0.9), 0.2, 0.8);
    let (out, _) = shade_surfel(&p, &env, &lut, 0.0).unwrap();
    assert!(out.norm() < 1e-10);
}

#[test]
fn non_unit_normal_is_rejected() {
    let env = constant_env(8, 1.0);
    let lut = bake_dfg_lut();
    let mut p = test_params(V3::new(0.5, 0.5, 0.5), 0.5, 0.0);
    p.normal *= 1.1;
    assert!(shade_surfel(&p, &env, &lut, 0.0).is_err());
}

#[test]
fn unit_environment_nearly_conserves_energy() {
    let env = constant_env(16, 1.0);
    let lut = bake_dfg_lut();
    for a in [0.2, 1.0] {
        for r in [0.05, 0.3, 1.0] {
            for m in [0.0, 0.5, 1.0] {
                let p = test_params(V3::new(a, a, a), r, m);
                let (out, _) = shade_surfel(&p, &env, &lut, 0.0).unwrap();
                for c in 0..3 {
                    assert!(out[c] <= 1.05, "a={a} r={r} m={m}: {out:?}");
                }
            }
        }
    }
}

#[test]
fn mc_diffuse_matches_analytic_constant_environment() {
    let env = constant_env(16, 0.9);
    let p = test_params(V3::new(0.7, 0.5, 0.3), 1.0, 0.0);
    let (diffuse, _) = mc_reference_shade_split(&p, &env, 4096).unwrap();
    let expect = p.albedo * 0.9;
    for c in 0..3 {
        assert!((diffuse[c] - expect[c]).abs() / expect[c] < 0.01, "{diffuse:?} vs {expect:?}");
    }
    assert!(mc_reference_shade(&p, &env, 0).is_err());
}

#[test]
fn split_sum_tracks_monte_carlo_for_moderate_roughness() {
    let lut = bake_dfg_lut();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..10 {
        let env = random_env(16, 100 + case);
        let p = BrdfParams {
            albedo: V3::new(rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)),
            roughness: rng.gen_range(0.3..1.0),
            metallic: rng.gen_range(0.0..1.0),
            normal: unit(V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
            view: V3::zeros(),
        };
        // view within the upper hemisphere of the normal
        let p = BrdfParams {
            view: unit(p.normal + V3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))),
            ..p
        };
        let (out, _) = shade_surfel(&p, &env, &lut, 0.0).unwrap();
        let mc = mc_reference_shade(&p, &env, 4096).unwrap();
        for c in 0..3 {
            let rel = (out[c] - mc[c]).abs() / mc[c].abs().max(1e-2);
            assert!(rel < 0.10, "case {case} ch {c}: split-sum {} vs mc {} (rel {rel})", out[c], mc[c]);
        }
    }
}

#[test]
fn shading_gradients_match_finite_differences() {
    let lut = bake_dfg_lut();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let res = 8;
    for case in 0..4 {
        let env = random_env(res, 300 + case);
        let p = BrdfParams {
            albedo: V3::new(rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)),
            roughness: rng.gen_range(0.15..0.9),
            metallic: rng.gen_range(0.1..0.9),
            normal: unit(V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
            view: V3::zeros(),
        };
        let p = BrdfParams {
            view: unit(p.normal + V3::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4))),
            ..p
        };
        let ao = rng.gen_range(0.0..0.9);
        let q = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let loss = |p: &BrdfParams, env: &EnvironmentLight| {
            let (out, _) = shade_surfel(p, env, &lut, ao).unwrap();
            q.dot(&out)
        };

        let (out, ctx) = shade_surfel(&p, &env, &lut, ao).unwrap();
        let _ = out;
        let mut env_grads = EnvGrads::zeros(&env);
        let g = shade_backward(&p, ao, &ctx, &q, &mut env_grads);
        let g_env = env.backward(&env_grads);

        let eps = 1e-5;
        let rel = |a: f64, b: f64| {
            let d = a.abs().max(b.abs());
            if d < 1e-7 {
                0.0
            } else {
                (a - b).abs() / d
            }
        };
        for c in 0..3 {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp.albedo[c] += eps;
            pm.albedo[c] -= eps;
            let fd = (loss(&pp, &env) - loss(&pm, &env)) / (2.0 * eps);
            assert!(rel(g.albedo[c], fd) < 1e-2, "case {case} albedo[{c}]: {} vs {fd}", g.albedo[c]);
        }
        for (name, set, analytic) in [
            ("roughness", 0, g.roughness),
            ("metallic", 1, g.metallic),
        ] {
            let mut pp = p.clone();
            let mut pm = p.clone();
            if set == 0 {
                pp.roughness += eps;
                pm.roughness -= eps;
            } else {
                pp.metallic += eps;
                pm.metallic -= eps;
            }
            let fd = (loss(&pp, &env) - loss(&pm, &env)) / (2.0 * eps);
            assert!(rel(analytic, fd) < 1e-2, "case {case} {name}: {analytic} vs {fd}");
        }
        // normal: perturb and renormalize, compare against the projected gradient
        let proj = g.normal - p.normal * p.normal.dot(&g.normal);
        for axis in 0..3 {
            let mut np = p.normal;
            let mut nm = p.normal;
            np[axis] += eps;
            nm[axis] -= eps;
            let pp = BrdfParams { normal: unit(np), ..p.clone() };
            let pm = BrdfParams { normal: unit(nm), ..p.clone() };
            let fd = (loss(&pp, &env) - loss(&pm, &env)) / (2.0 * eps);
            assert!(rel(proj[axis], fd) < 1e-2, "case {case} normal[{axis}]: {} vs {fd}", proj[axis]);
        }
        // view direction, treated as a free (unconstrained) input
        for axis in 0..3 {
            let mut vp = p.view;
            let mut vm = p.view;
            vp[axis] += eps;
            vm[axis] -= eps;
            let pp = BrdfParams { view: vp, ..p.clone() };
            let pm = BrdfParams { view: vm, ..p.clone() };
            let fd = (loss(&pp, &env) - loss(&pm, &env)) / (2.0 * eps);
            assert!(rel(g.view[axis], fd) < 1e-2, "case {case} view[{axis}]: {} vs {fd}", g.view[axis]);
        }
        // a spread of environment parameters, prefilter re-run per perturbation
        let npar = env.params.len();
        for wi in [0usize, npar / 3, npar / 2, npar - 5] {
            let mut ep = env.clone();
            let mut em = env.clone();
            ep.params[wi] += eps;
            em.params[wi] -= eps;
            ep.mark_dirty();
            em.mark_dirty();
            ep.refresh();
            em.refresh();
            let fd = (loss(&p, &ep) - loss(&p, &em)) / (2.0 * eps);
            assert!(rel(g_env[wi], fd) < 1e-2, "case {case} env[{wi}]: {} vs {fd}", g_env[wi]);
        }
    }
}

#[test]
fn equirect_roundtrip_preserves_smooth_radiance() {
    let env = smooth_env(16);
    let eq = env_to_equirect(&env, 64, 32);
    let back = env_from_equirect(&eq, 64, 32, 16).unwrap();
    let a = env.radiance();
    let b = back.radiance();
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(&b) {
        worst = worst.max((x - y).abs() / x.max(1e-6));
    }
    assert!(worst < 0.08, "worst relative deviation {worst}");
}
