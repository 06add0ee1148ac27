//! Camera-space normals from finite differences of backprojected depth.

use crate::core::Camera;
use crate::math::V3;

fn valid(alpha: &[f64], depth: &[f64], i: usize) -> bool {
    alpha[i] >= 0.5 && depth[i] > 0.0
}

/// Pick the finite-difference neighbor pair along one axis: central when both
/// neighbors are valid, otherwise one-sided, otherwise `None`.
fn pick_pair(
    alpha: &[f64],
    depth: &[f64],
    w: usize,
    h: usize,
    x: usize,
    y: usize,
    horizontal: bool,
) -> Option<(usize, usize)> {
    let at = |x: usize, y: usize| y * w + x;
    let (lo, hi) = if horizontal {
        (
            (x > 0).then(|| at(x - 1, y)),
            (x + 1 < w).then(|| at(x + 1, y)),
        )
    } else {
        (
            (y > 0).then(|| at(x, y - 1)),
            (y + 1 < h).then(|| at(x, y + 1)),
        )
    };
    let lo = lo.filter(|&i| valid(alpha, depth, i));
    let hi = hi.filter(|&i| valid(alpha, depth, i));
    let center = at(x, y);
    match (lo, hi) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, Some(b)) => Some((center, b)),
        (Some(a), None) => Some((a, center)),
        (None, None) => None,
    }
}

fn backproject(cam: &Camera, depth: &[f64], w: usize, i: usize) -> V3 {
    let x = i % w;
    let y = i / w;
    cam.pixel_dir_cam(x as f64, y as f64) * depth[i]
}

/// Finite-difference camera-space normal per pixel, oriented toward the
/// camera; zero where alpha < 0.5 or the neighborhood is degenerate.
pub fn depth_normals(depth: &[f64], alpha: &[f64], cam: &Camera) -> Vec<V3> {
    let (w, h) = (cam.width, cam.height);
    let mut out = vec![V3::zeros(); w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !valid(alpha, depth, i) {
                continue;
            }
            let Some((xl, xr)) = pick_pair(alpha, depth, w, h, x, y, true) else {
                continue;
            };
            let Some((yl, yr)) = pick_pair(alpha, depth, w, h, x, y, false) else {
                continue;
            };
            let dx = backproject(cam, depth, w, xr) - backproject(cam, depth, w, xl);
            let dy = backproject(cam, depth, w, yr) - backproject(cam, depth, w, yl);
            let mut c = dx.cross(&dy);
            let norm = c.norm();
            if norm < 1e-12 {
                continue;
            }
            if c.dot(&cam.pixel_dir_cam(x as f64, y as f64)) > 0.0 {
                c = -c;
            }
            out[i] = c / norm;
        }
    }
    out
}

/// Adjoint of [`depth_normals`]: scatter per-pixel normal gradients back to
/// the depth plane. Branch choices (validity, orientation) are data-dependent
/// constants.
pub fn depth_normals_backward(
    depth: &[f64],
    alpha: &[f64],
    cam: &Camera,
    grad_n: &[V3],
) -> Vec<f64> {
    let (w, h) = (cam.width, cam.height);
    let mut g_depth = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let gn = grad_n[i];
            if gn == V3::zeros() || !valid(alpha, depth, i) {
                continue;
            }
            let Some((xl, xr)) = pick_pair(alpha, depth, w, h, x, y, true) else {
                continue;
            };
            let Some((yl, yr)) = pick_pair(alpha, depth, w, h, x, y, false) else {
                continue;
            };
            let dx = backproject(cam, depth, w, xr) - backproject(cam, depth, w, xl);
            let dy = backproject(cam, depth, w, yr) - backproject(cam, depth, w, yl);
            let mut c = dx.cross(&dy);
            let norm = c.norm();
            if norm < 1e-12 {
                continue;
            }
            let flip = if c.dot(&cam.pixel_dir_cam(x as f64, y as f64)) > 0.0 {
                -1.0
            } else {
                1.0
            };
            c *= flip;
            let n = c / norm;
            // through normalize, then undo the flip
            let g_c = (gn - n * n.dot(&gn)) * (flip / norm);
            // c = dx x dy  =>  g_dx = dy x g_c, g_dy = g_c x dx
            let g_dx = dy.cross(&g_c);
            let g_dy = g_c.cross(&dx);
            let mut scatter = |idx: usize, g: V3| {
                let xx = idx % w;
                let yy = idx / w;
                g_depth[idx] += cam.pixel_dir_cam(xx as f64, yy as f64).dot(&g);
            };
            scatter(xr, g_dx);
            scatter(xl, -g_dx);
            scatter(yr, g_dy);
            scatter(yl, -g_dy);
        }
    }
    g_depth
}
