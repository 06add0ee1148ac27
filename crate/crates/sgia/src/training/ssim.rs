//! SSIM with an 11x11 Gaussian window (sigma 1.5) and its analytic adjoint.

const WIN: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn kernel() -> [f64; WIN] {
    let mut k = [0.0; WIN];
    let c = (WIN / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Separable unnormalized convolution with the window kernel; out-of-bounds
/// taps are dropped (combine with [`conv`] of a ones image to renormalize).
fn conv_raw(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = kernel();
    let r = WIN / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                let xx = x as isize + i as isize - r as isize;
                if (0..w as isize).contains(&xx) {
                    acc += kv * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                let yy = y as isize + i as isize - r as isize;
                if (0..h as isize).contains(&yy) {
                    acc += kv * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Boundary-renormalized Gaussian filter.
fn conv(src: &[f64], z: &[f64], w: usize, h: usize) -> Vec<f64> {
    conv_raw(src, w, h).iter().zip(z).map(|(v, z)| v / z).collect()
}

/// Adjoint of [`conv`]: the kernel is symmetric, so the adjoint is the raw
/// convolution of the per-pixel-normalized upstream signal.
fn conv_adjoint(up: &[f64], z: &[f64], w: usize, h: usize) -> Vec<f64> {
    let scaled: Vec<f64> = up.iter().zip(z).map(|(u, z)| u / z).collect();
    conv_raw(&scaled, w, h)
}

/// Retained per-pixel statistics of one SSIM evaluation.
pub struct SsimCtx {
    w: usize,
    h: usize,
    z: Vec<f64>,
    mx: Vec<f64>,
    my: Vec<f64>,
    sx: Vec<f64>,
    sy: Vec<f64>,
    sxy: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    fg: Vec<bool>,
    n_fg: f64,
}

/// Mean SSIM of `x` against `y` over foreground pixels. Both images are
/// single-channel planes in [0,1]; the mean ignores background pixels but
/// windows may straddle the silhouette.
pub fn ssim_mean(x: &[f64], y: &[f64], w: usize, h: usize, fg: &[bool]) -> (f64, SsimCtx) {
    assert_eq!(x.len(), w * h);
    assert_eq!(y.len(), w * h);
    let ones = vec![1.0; w * h];
    let z = conv_raw(&ones, w, h);
    let mx = conv(x, &z, w, h);
    let my = conv(y, &z, w, h);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mxx = conv(&xx, &z, w, h);
    let myy = conv(&yy, &z, w, h);
    let mxy = conv(&xy, &z, w, h);
    let sx: Vec<f64> = mxx.iter().zip(&mx).map(|(m2, m)| m2 - m * m).collect();
    let sy: Vec<f64> = myy.iter().zip(&my).map(|(m2, m)| m2 - m * m).collect();
    let sxy: Vec<f64> = mxy.iter().zip(mx.iter().zip(&my)).map(|(m2, (a, b))| m2 - a * b).collect();
    let n_fg = fg.iter().filter(|&&b| b).count().max(1) as f64;
    let mut acc = 0.0;
    for i in 0..w * h {
        if fg[i] {
            acc += ssim_pixel(mx[i], my[i], sx[i], sy[i], sxy[i]);
        }
    }
    (
        acc / n_fg,
        SsimCtx {
            w,
            h,
            z,
            mx,
            my,
            sx,
            sy,
            sxy,
            x: x.to_vec(),
            y: y.to_vec(),
            fg: fg.to_vec(),
            n_fg,
        },
    )
}

fn ssim_pixel(mx: f64, my: f64, sx: f64, sy: f64, sxy: f64) -> f64 {
    let a1 = 2.0 * mx * my + C1;
    let a2 = 2.0 * sxy + C2;
    let b1 = mx * mx + my * my + C1;
    let b2 = sx + sy + C2;
    (a1 * a2) / (b1 * b2)
}

/// Gradient of `upstream * mean-SSIM` w.r.t. the first image `x`.
pub fn ssim_backward(ctx: &SsimCtx, upstream: f64) -> Vec<f64> {
    let n = ctx.w * ctx.h;
    // per-pixel gradients of the SSIM map w.r.t. the filtered moments
    let mut g_mx = vec![0.0; n];
    let mut g_mxx = vec![0.0; n];
    let mut g_mxy = vec![0.0; n];
    for i in 0..n {
        if !ctx.fg[i] {
            continue;
        }
        let u = upstream / ctx.n_fg;
        let (mx, my, sx, sy, sxy) = (ctx.mx[i], ctx.my[i], ctx.sx[i], ctx.sy[i], ctx.sxy[i]);
        let a1 = 2.0 * mx * my + C1;
        let a2 = 2.0 * sxy + C2;
        let b1 = mx * mx + my * my + C1;
        let b2 = sx + sy + C2;
        let s = (a1 * a2) / (b1 * b2);
        let ds_dmx = (2.0 * my * a2) / (b1 * b2) - s * 2.0 * mx / b1;
        let ds_dsx = -s / b2;
        let ds_dsxy = 2.0 * a1 / (b1 * b2);
        // sx = mxx - mx^2, sxy = mxy - mx*my
        g_mx[i] = u * (ds_dmx + ds_dsx * (-2.0 * mx) + ds_dsxy * (-my));
        g_mxx[i] = u * ds_dsx;
        g_mxy[i] = u * ds_dsxy;
    }
    let t_mx = conv_adjoint(&g_mx, &ctx.z, ctx.w, ctx.h);
    let t_mxx = conv_adjoint(&g_mxx, &ctx.z, ctx.w, ctx.h);
    let t_mxy = conv_adjoint(&g_mxy, &ctx.z, ctx.w, ctx.h);
    (0..n)
        .map(|i| t_mx[i] + t_mxx[i] * 2.0 * ctx.x[i] + t_mxy[i] * ctx.y[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images_have_unit_ssim() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, h) = (16, 16);
        let x: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect();
        let fg = vec![true; w * h];
        let (s, _) = ssim_mean(&x, &x.clone(), w, h, &fg);
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn dissimilar_images_score_lower() {
        let (w, h) = (16, 16);
        let x = vec![0.2; w * h];
        let y: Vec<f64> = (0..w * h).map(|i| if (i / w + i % w) % 2 == 0 { 0.9 } else { 0.1 }).collect();
        let fg = vec![true; w * h];
        let (s, _) = ssim_mean(&x, &y, w, h, &fg);
        assert!(s < 0.5, "{s}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, h) = (12, 12);
        let x: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect();
        let fg: Vec<bool> = (0..w * h).map(|i| i % 5 != 0).collect();
        let (_, ctx) = ssim_mean(&x, &y, w, h, &fg);
        let g = ssim_backward(&ctx, 1.0);
        let eps = 1e-6;
        for &i in &[0usize, 7, w * h / 2, w * h - 3] {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += eps;
            xm[i] -= eps;
            let (sp, _) = ssim_mean(&xp, &y, w, h, &fg);
            let (sm, _) = ssim_mean(&xm, &y, w, h, &fg);
            let fd = (sp - sm) / (2.0 * eps);
            assert!((g[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "pixel {i}: {} vs {fd}", g[i]);
        }
    }
}
