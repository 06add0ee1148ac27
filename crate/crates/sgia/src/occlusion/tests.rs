use super::*;
use crate::core::vertex_normals;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_box() -> (Vec<V3>, Vec<[u32; 3]>) {
    // closed axis-aligned cube [-1,1]^3, faces wound outward
    let v = vec![
        V3::new(-1.0, -1.0, -1.0),
        V3::new(1.0, -1.0, -1.0),
        V3::new(1.0, 1.0, -1.0),
        V3::new(-1.0, 1.0, -1.0),
        V3::new(-1.0, -1.0, 1.0),
        V3::new(1.0, -1.0, 1.0),
        V3::new(1.0, 1.0, 1.0),
        V3::new(-1.0, 1.0, 1.0),
    ];
    let f = vec![
        [0, 2, 1],
        [0, 3, 2], // z = -1
        [4, 5, 6],
        [4, 6, 7], // z = +1
        [0, 1, 5],
        [0, 5, 4], // y = -1
        [3, 6, 2],
        [3, 7, 6], // y = +1
        [0, 4, 7],
        [0, 7, 3], // x = -1
        [1, 2, 6],
        [1, 6, 5], // x = +1
    ];
    (v, f)
}

fn grid_plane(n: usize, z: f64) -> (Vec<V3>, Vec<[u32; 3]>) {
    // (n+1)^2 vertices over [-1,1]^2 at height z, +z normals
    let mut v = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            v.push(V3::new(2.0 * i as f64 / n as f64 - 1.0, 2.0 * j as f64 / n as f64 - 1.0, z));
        }
    }
    let at = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut f = Vec::new();
    for j in 0..n {
        for i in 0..n {
            f.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            f.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    (v, f)
}

#[test]
fn single_triangle_ray_through_centroid_hits() {
    let v = vec![V3::new(0.0, 0.0, 0.0), V3::new(1.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0)];
    let f = vec![[0u32, 1, 2]];
    let bvh = build_bvh(&v, &f).unwrap();
    let centroid = (v[0] + v[1] + v[2]) / 3.0;
    let origin = centroid + V3::new(0.0, 0.0, 1.0);
    assert!(bvh.any_hit(&origin, &V3::new(0.0, 0.0, -1.0), 1e-9, f64::INFINITY));
    // ray pointing away misses
    assert!(!bvh.any_hit(&origin, &V3::new(0.0, 0.0, 1.0), 1e-9, f64::INFINITY));
}

#[test]
fn outward_ray_on_convex_mesh_misses() {
    let (v, f) = unit_box();
    let bvh = build_bvh(&v, &f).unwrap();
    let eps = 1e-6;
    // point on the +z face, offset outward, looking anywhere into the upper hemisphere
    let origin = V3::new(0.3, -0.2, 1.0 + eps);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let local = cosine_sample(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let dir = to_world(&local, &V3::new(0.0, 0.0, 1.0));
        assert!(!bvh.any_hit(&origin, &dir, 1e-9, f64::INFINITY));
    }
}

#[test]
fn bvh_matches_brute_force_on_random_rays() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // random triangle soup
    let n_tris = 300;
    let mut v = Vec::new();
    let mut f = Vec::new();
    for t in 0..n_tris {
        let c = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for _ in 0..3 {
            v.push(c + V3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)));
        }
        f.push([3 * t as u32, 3 * t as u32 + 1, 3 * t as u32 + 2]);
    }
    let bvh = build_bvh(&v, &f).unwrap();
    let tris: Vec<[V3; 3]> = f.iter().map(|f| [v[f[0] as usize], v[f[1] as usize], v[f[2] as usize]]).collect();
    for _ in 0..1000 {
        let o = V3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let d = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if d.norm() < 1e-3 {
            continue;
        }
        let brute = tris
            .iter()
            .any(|t| ray_triangle(&o, &d, t).map(|t| t > 1e-9 && t < f64::INFINITY).unwrap_or(false));
        assert_eq!(bvh.any_hit(&o, &d, 1e-9, f64::INFINITY), brute);
    }
}

#[test]
fn open_plane_has_zero_ao() {
    let (v, f) = grid_plane(4, 0.0);
    let bvh = build_bvh(&v, &f).unwrap();
    let normals = vec![V3::new(0.0, 0.0, 1.0); v.len()];
    let ao = bake_vertex_ao(&v, &normals, &bvh, 100, 42);
    for &a in &ao {
        assert_eq!(a, 0.0);
    }
}

#[test]
fn closed_box_interior_has_full_ao() {
    // a tiny triangle floating at the box center; every hemisphere ray from
    // its vertices must hit the enclosing box
    let (mut v, mut f) = unit_box();
    let base = v.len() as u32;
    let s = 1e-3;
    v.push(V3::new(-s, -s, 0.0));
    v.push(V3::new(s, -s, 0.0));
    v.push(V3::new(0.0, s, 0.0));
    f.push([base, base + 1, base + 2]);
    let bvh = build_bvh(&v, &f).unwrap();
    let normals = vertex_normals(&v, &f);
    let ao = bake_vertex_ao(&v, &normals, &bvh, 100, 3);
    for &a in ao[base as usize..].iter() {
        assert_eq!(a, 1.0);
    }
}

#[test]
fn close_parallel_planes_nearly_full_ao() {
    // vertex on the lower plane looks up at a much larger plane just above:
    // almost the whole cosine-weighted hemisphere is blocked
    let (mut v, mut f) = grid_plane(8, 0.01);
    let base = v.len() as u32;
    v.push(V3::new(0.0, 0.0, 0.0));
    v.push(V3::new(0.02, 0.0, 0.0));
    v.push(V3::new(0.0, 0.02, 0.0));
    f.push([base, base + 1, base + 2]);
    let bvh = build_bvh(&v, &f).unwrap();
    let mut normals = vertex_normals(&v, &f);
    for k in 0..3 {
        normals[base as usize + k] = V3::new(0.0, 0.0, 1.0);
    }
    // dense oracle at 10^4 rays
    let dense = bake_vertex_ao(&v, &normals, &bvh, 10_000, 99);
    let ao = bake_vertex_ao(&v, &normals, &bvh, 100, 99);
    let vi = base as usize;
    assert!(dense[vi] > 0.9, "dense oracle {}", dense[vi]);
    assert!((ao[vi] - dense[vi]).abs() <= 0.05, "ao {} vs dense {}", ao[vi], dense[vi]);
    assert!((1.0 - ao[vi]).abs() <= 0.1, "ao {}", ao[vi]);
}

#[test]
fn doubling_rays_stays_within_noise() {
    let (mut v, mut f) = grid_plane(6, 0.1);
    let base = v.len() as u32;
    v.push(V3::new(0.3, 0.3, 0.0));
    v.push(V3::new(0.35, 0.3, 0.0));
    v.push(V3::new(0.3, 0.35, 0.0));
    f.push([base, base + 1, base + 2]);
    let bvh = build_bvh(&v, &f).unwrap();
    let mut normals = vertex_normals(&v, &f);
    for k in 0..3 {
        normals[base as usize + k] = V3::new(0.0, 0.0, 1.0);
    }
    let n = 400;
    let a1 = bake_vertex_ao(&v, &normals, &bvh, n, 5)[base as usize];
    let a2 = bake_vertex_ao(&v, &normals, &bvh, 2 * n, 5)[base as usize];
    let p = a1.clamp(0.05, 0.95);
    let stderr = (p * (1.0 - p) / n as f64).sqrt();
    assert!((a2 - a1).abs() < 2.0 * stderr, "a1 {a1} a2 {a2} stderr {stderr}");
}

#[test]
fn bake_is_deterministic_and_in_range() {
    let (v, f) = unit_box();
    let bvh = build_bvh(&v, &f).unwrap();
    let normals = vertex_normals(&v, &f);
    let a = bake_vertex_ao(&v, &normals, &bvh, 100, 1234);
    let b = bake_vertex_ao(&v, &normals, &bvh, 100, 1234);
    assert_eq!(a, b);
    for &x in &a {
        assert!((0.0..=1.0).contains(&x));
    }
    // a different pose hash reseeds the streams
    let c = bake_vertex_ao(&v, &normals, &bvh, 100, 1235);
    assert_eq!(a.len(), c.len());
}

#[test]
fn transfer_at_vertex_and_centroid() {
    let v = vec![V3::new(0.0, 0.0, 0.0), V3::new(1.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0)];
    let f = vec![[0u32, 1, 2]];
    let bvh = build_bvh(&v, &f).unwrap();
    let ao = vec![0.2, 0.5, 0.8];
    let centroid = (v[0] + v[1] + v[2]) / 3.0;
    let out = transfer_ao(&[v[1], centroid], &v, &f, &ao, &bvh);
    assert!((out[0] - 0.5).abs() < 1e-12);
    assert!((out[1] - (0.2 + 0.5 + 0.8) / 3.0).abs() < 1e-12);
}

#[test]
fn transfer_far_point_returns_nearest_value() {
    let v = vec![V3::new(0.0, 0.0, 0.0), V3::new(1.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0)];
    let f = vec![[0u32, 1, 2]];
    let bvh = build_bvh(&v, &f).unwrap();
    let ao = vec![0.1, 0.9, 0.4];
    // far beyond vertex 1 along +x: nearest surface point is vertex 1
    let out = transfer_ao(&[V3::new(10.0, 0.0, 0.0)], &v, &f, &ao, &bvh);
    assert!((out[0] - 0.9).abs() < 1e-12);
}

#[test]
fn nearest_point_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (v, f) = unit_box();
    let bvh = build_bvh(&v, &f).unwrap();
    let tris: Vec<[V3; 3]> = f.iter().map(|f| [v[f[0] as usize], v[f[1] as usize], v[f[2] as usize]]).collect();
    for _ in 0..300 {
        let p = V3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let hit = bvh.nearest_point(&p);
        let brute = tris
            .iter()
            .map(|t| (p - closest_point_triangle(&p, t).0).norm_squared())
            .fold(f64::INFINITY, f64::min);
        assert!((hit.dist2 - brute).abs() < 1e-10, "{} vs {}", hit.dist2, brute);
        let b = hit.bary;
        assert!((b[0] + b[1] + b[2] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn cache_bakes_once_per_pose() {
    let (v, f) = unit_box();
    let bvh = build_bvh(&v, &f).unwrap();
    let normals = vertex_normals(&v, &f);
    let mut cache = AoCache::new();
    let a = cache.get_or_bake(77, &v, &normals, &bvh, 50).unwrap();
    let b = cache.get_or_bake(77, &v, &normals, &bvh, 50).unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    assert_eq!(cache.len(), 1);
    cache.get_or_bake(78, &v, &normals, &bvh, 50).unwrap();
    assert_eq!(cache.len(), 2);
}

#[test]
fn empty_mesh_is_rejected() {
    assert!(build_bvh(&[], &[]).is_err());
}
