//! Cube-face addressing and bilinear sampling with analytic direction
//! derivatives.
//!
//! Faces are indexed +x,-x,+y,-y,+z,-z. Texel (i, j) of face f holds the
//! direction `face_uv_to_dir(f, 2(i+0.5)/res - 1, 2(j+0.5)/res - 1)`. Data is
//! stored RGB-interleaved: `data[3 * texel + c]` with
//! `texel = (f * res + j) * res + i`.

use crate::math::{M3, V3};

/// Direction for face-local coordinates `uc, vc` in [-1, 1] (unnormalized).
pub fn face_uv_to_dir(face: usize, uc: f64, vc: f64) -> V3 {
    match face {
        0 => V3::new(1.0, vc, -uc),
        1 => V3::new(-1.0, vc, uc),
        2 => V3::new(uc, 1.0, -vc),
        3 => V3::new(uc, -1.0, vc),
        4 => V3::new(uc, vc, 1.0),
        _ => V3::new(-uc, vc, -1.0),
    }
}

/// Face index plus face-local coordinates of a direction.
pub fn dir_to_face_uv(d: &V3) -> (usize, f64, f64) {
    let (ax, ay, az) = (d.x.abs(), d.y.abs(), d.z.abs());
    if ax >= ay && ax >= az {
        if d.x > 0.0 {
            (0, -d.z / d.x, d.y / d.x)
        } else {
            (1, -d.z / d.x, -d.y / d.x)
        }
    } else if ay >= az {
        if d.y > 0.0 {
            (2, d.x / d.y, -d.z / d.y)
        } else {
            (3, -d.x / d.y, -d.z / d.y)
        }
    } else if d.z > 0.0 {
        (4, d.x / d.z, d.y / d.z)
    } else {
        (5, d.x / d.z, -d.y / d.z)
    }
}

/// Gradients of the face-local coordinates w.r.t. the (unnormalized)
/// direction, for the face chosen by [`dir_to_face_uv`].
fn duv_ddir(face: usize, d: &V3) -> (V3, V3) {
    let (x, y, z) = (d.x, d.y, d.z);
    match face {
        0 => (V3::new(z / (x * x), 0.0, -1.0 / x), V3::new(-y / (x * x), 1.0 / x, 0.0)),
        1 => (V3::new(z / (x * x), 0.0, -1.0 / x), V3::new(y / (x * x), -1.0 / x, 0.0)),
        2 => (V3::new(1.0 / y, -x / (y * y), 0.0), V3::new(0.0, z / (y * y), -1.0 / y)),
        3 => (V3::new(-1.0 / y, x / (y * y), 0.0), V3::new(0.0, z / (y * y), -1.0 / y)),
        4 => (V3::new(1.0 / z, 0.0, -x / (z * z)), V3::new(0.0, 1.0 / z, -y / (z * z))),
        _ => (V3::new(1.0 / z, 0.0, -x / (z * z)), V3::new(0.0, -1.0 / z, y / (z * z))),
    }
}

pub fn texel_index(res: usize, face: usize, i: usize, j: usize) -> usize {
    (face * res + j) * res + i
}

/// Center direction of a texel (normalized).
pub fn texel_dir(res: usize, face: usize, i: usize, j: usize) -> V3 {
    let uc = 2.0 * (i as f64 + 0.5) / res as f64 - 1.0;
    let vc = 2.0 * (j as f64 + 0.5) / res as f64 - 1.0;
    face_uv_to_dir(face, uc, vc).normalize()
}

/// Texel whose center is closest to `d` (within the containing face).
pub fn nearest_texel(res: usize, d: &V3) -> usize {
    let (face, uc, vc) = dir_to_face_uv(d);
    let to_idx = |c: f64| (((c + 1.0) * 0.5 * res as f64) as isize).clamp(0, res as isize - 1) as usize;
    texel_index(res, face, to_idx(uc), to_idx(vc))
}

/// One bilinear cubemap fetch: value, the four texel footprints for gradient
/// scatter, and the derivative of the value w.r.t. the query direction.
#[derive(Debug, Clone)]
pub struct BilinearSample {
    pub value: V3,
    pub idx: [usize; 4],
    pub w: [f64; 4],
    /// Row `c` is `d value[c] / d dir`.
    pub ddir: M3,
}

/// Resolve one bilinear tap that may fall outside the face: taps past the
/// edge follow their extended direction onto the neighboring face.
fn tap_index(res: usize, face: usize, ti: isize, tj: isize) -> usize {
    let r = res as isize;
    if (0..r).contains(&ti) && (0..r).contains(&tj) {
        return texel_index(res, face, ti as usize, tj as usize);
    }
    let uc = 2.0 * (ti as f64 + 0.5) / res as f64 - 1.0;
    let vc = 2.0 * (tj as f64 + 0.5) / res as f64 - 1.0;
    nearest_texel(res, &face_uv_to_dir(face, uc, vc))
}

/// Seam-aware bilinear fetch: taps that cross a face edge wrap onto the
/// adjacent face.
pub fn sample_bilinear(data: &[f64], res: usize, d: &V3) -> BilinearSample {
    let (face, uc, vc) = dir_to_face_uv(d);
    let r = res as f64;
    // continuous texel coordinates; texel centers at integer positions
    let x = (uc + 1.0) * 0.5 * r - 0.5;
    let y = (vc + 1.0) * 0.5 * r - 0.5;
    let i0 = x.floor() as isize;
    let j0 = y.floor() as isize;
    let fx = if res == 1 { 0.0 } else { x - i0 as f64 };
    let fy = if res == 1 { 0.0 } else { y - j0 as f64 };
    let idx = [
        tap_index(res, face, i0, j0),
        tap_index(res, face, i0 + 1, j0),
        tap_index(res, face, i0, j0 + 1),
        tap_index(res, face, i0 + 1, j0 + 1),
    ];
    let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
    let mut value = V3::zeros();
    for k in 0..4 {
        for c in 0..3 {
            value[c] += w[k] * data[3 * idx[k] + c];
        }
    }
    let active_x = res > 1;
    let active_y = res > 1;
    let (gu, gv) = duv_ddir(face, d);
    let mut ddir = M3::zeros();
    for c in 0..3 {
        let t = |k: usize| data[3 * idx[k] + c];
        let dv_dfx = (1.0 - fy) * (t(1) - t(0)) + fy * (t(3) - t(2));
        let dv_dfy = (1.0 - fx) * (t(2) - t(0)) + fx * (t(3) - t(1));
        let mut g = V3::zeros();
        if active_x {
            g += gu * (dv_dfx * 0.5 * r);
        }
        if active_y {
            g += gv * (dv_dfy * 0.5 * r);
        }
        ddir.set_row(c, &g.transpose());
    }
    BilinearSample { value, idx, w, ddir }
}
