//! Image-space loss terms and parameter regularizers. Each returns its value
//! together with analytic gradients; stop-gradient routing between the
//! normal-consistency variants is handled by the pipeline.

use crate::core::{Surfel, SurfelSet, N_LATENT};
use crate::math::V3;
use crate::shading::EnvironmentLight;
use rayon::prelude::*;

/// Subgradient sign convention: zero at zero (`f64::signum` maps 0 to 1).
fn sgn(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean over foreground pixels (and channels) of |pred - gt| for planar
/// multi-channel images.
pub fn masked_l1(pred: &[f64], gt: &[f64], n_channels: usize, fg: &[bool]) -> (f64, Vec<f64>) {
    let npix = fg.len();
    let n_fg = fg.iter().filter(|&&b| b).count().max(1) as f64;
    let norm = n_fg * n_channels as f64;
    let mut grad = vec![0.0; pred.len()];
    let mut acc = 0.0;
    for c in 0..n_channels {
        for i in 0..npix {
            if !fg[i] {
                continue;
            }
            let d = pred[c * npix + i] - gt[c * npix + i];
            acc += d.abs();
            grad[c * npix + i] = sgn(d) / norm;
        }
    }
    (acc / norm, grad)
}

/// Mean |alpha - mask| over all pixels; anchors opacity outside the
/// silhouette.
pub fn alpha_l1(alpha: &[f64], mask: &[f64]) -> (f64, Vec<f64>) {
    let n = alpha.len().max(1) as f64;
    let mut grad = vec![0.0; alpha.len()];
    let mut acc = 0.0;
    for i in 0..alpha.len() {
        let d = alpha[i] - mask[i];
        acc += d.abs();
        grad[i] = sgn(d) / n;
    }
    (acc / n, grad)
}

/// Per-pixel value and gradients of the normal-consistency loss
/// `sum_i w_i (1 - n_i . N)`, averaged over foreground. With the blend
/// weights detached this is `alpha - v . N` up to a constant, where `v` is
/// the rendered normal plane; gradients are returned w.r.t. `v` and `N`.
pub struct NcGrads {
    /// Upstream for the normal attribute channels (planar, 3 channels).
    pub v_plane: Vec<f64>,
    /// Upstream for the per-pixel depth normal.
    pub n_plane: Vec<V3>,
}

pub fn normal_consistency(v_plane: &[f64], alpha: &[f64], depth_n: &[V3], fg: &[bool], l1_form: bool) -> (f64, NcGrads) {
    let npix = fg.len();
    let n_fg = fg.iter().filter(|&&b| b).count().max(1) as f64;
    let mut gv = vec![0.0; 3 * npix];
    let mut gn = vec![V3::zeros(); npix];
    let mut acc = 0.0;
    for i in 0..npix {
        if !fg[i] || depth_n[i] == V3::zeros() {
            continue;
        }
        let v = V3::new(v_plane[i], v_plane[npix + i], v_plane[2 * npix + i]);
        let nn = depth_n[i];
        if l1_form {
            for c in 0..3 {
                let d = v[c] - nn[c];
                acc += d.abs();
                gv[c * npix + i] = sgn(d) / n_fg;
                gn[i][c] = -sgn(d) / n_fg;
            }
        } else {
            acc += alpha[i] - v.dot(&nn);
            for c in 0..3 {
                gv[c * npix + i] = -nn[c] / n_fg;
            }
            gn[i] = -v / n_fg;
        }
    }
    (acc / n_fg, NcGrads { v_plane: gv, n_plane: gn })
}

/// Edge-aware first-order smoothness of a rendered attribute plane:
/// `|d attr| * exp(-|d image|)` with forward differences, foreground only.
pub fn smoothness(attr: &[f64], n_channels: usize, image: &[f64], fg: &[bool], width: usize) -> (f64, Vec<f64>) {
    let npix = fg.len();
    let height = npix / width;
    let mut grad = vec![0.0; attr.len()];
    let mut acc = 0.0;
    let mut count = 0usize;
    let pair = |i: usize, j: usize, grad: &mut Vec<f64>, acc: &mut f64| {
        let mut di = 0.0;
        for c in 0..3 {
            let d = image[c * npix + j] - image[c * npix + i];
            di += d * d;
        }
        let damp = (-di.sqrt()).exp();
        for c in 0..n_channels {
            let d = attr[c * npix + j] - attr[c * npix + i];
            *acc += d.abs() * damp / n_channels as f64;
            let g = sgn(d) * damp / n_channels as f64;
            grad[c * npix + j] += g;
            grad[c * npix + i] -= g;
        }
    };
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !fg[i] {
                continue;
            }
            count += 1;
            if x + 1 < width && fg[i + 1] {
                pair(i, i + 1, &mut grad, &mut acc);
            }
            if y + 1 < height && fg[i + width] {
                pair(i, i + width, &mut grad, &mut acc);
            }
        }
    }
    let norm = count.max(1) as f64;
    for g in &mut grad {
        *g /= norm;
    }
    (acc / norm, grad)
}

/// Sum over base-map texels of the squared channel deviations from the
/// per-texel mean; zero exactly for grayscale environments. Gradient is
/// w.r.t. the pre-activation environment parameters.
pub fn white_light_reg(env: &EnvironmentLight) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; env.params.len()];
    let mut acc = 0.0;
    let n_texels = env.params.len() / 3;
    for t in 0..n_texels {
        let l: Vec<f64> = (0..3).map(|c| crate::math::softplus(env.params[3 * t + c])).collect();
        let mean = (l[0] + l[1] + l[2]) / 3.0;
        for c in 0..3 {
            let d = l[c] - mean;
            acc += d * d;
            grad[3 * t + c] = 2.0 * d * crate::math::softplus_deriv(env.params[3 * t + c]);
        }
    }
    (acc, grad)
}

/// Brute-force K-nearest-neighbor index over canonical positions;
/// deterministic tie-break on index.
pub fn knn_indices(positions: &[V3], k: usize) -> Vec<Vec<u32>> {
    positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<(f64, u32)> = positions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| ((p - q).norm_squared(), j as u32))
                .collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

fn sigma_attrs(s: &Surfel) -> Vec<f64> {
    let mut a = Vec::with_capacity(10 + s.dw.len());
    a.extend(s.quat.iter());
    a.extend(s.scale);
    a.push(s.opacity);
    a.extend(s.sh[0]);
    a.extend(&s.dw);
    a
}

/// Per-surfel gradients of the KNN sigma regularizer, in attribute order
/// (quat, scale, opacity, DC color, delta-W).
pub struct SigmaGrads {
    pub per_surfel: Vec<Vec<f64>>,
}

/// Mean over surfels and attribute dimensions of the standard deviation of
/// each attribute over the K nearest canonical neighbors.
pub fn knn_sigma_reg(set: &SurfelSet, knn: &[Vec<u32>], lambda_attr: f64) -> (f64, SigmaGrads) {
    let n = set.len();
    let attrs: Vec<Vec<f64>> = set.surfels.iter().map(sigma_attrs).collect();
    let dim = attrs[0].len();
    let mut grads = vec![vec![0.0; dim]; n];
    let mut acc = 0.0;
    let norm = (n * dim).max(1) as f64;
    for (k, nb) in knn.iter().enumerate() {
        if nb.is_empty() {
            continue;
        }
        let _ = k;
        let kk = nb.len() as f64;
        for j in 0..dim {
            let mu = nb.iter().map(|&i| attrs[i as usize][j]).sum::<f64>() / kk;
            let var = nb.iter().map(|&i| (attrs[i as usize][j] - mu).powi(2)).sum::<f64>() / kk;
            let sigma = var.sqrt();
            acc += sigma;
            if sigma > 1e-12 {
                for &i in nb {
                    grads[i as usize][j] += lambda_attr * (attrs[i as usize][j] - mu) / (kk * sigma) / norm;
                }
            }
        }
    }
    (lambda_attr * acc / norm, SigmaGrads { per_surfel: grads })
}

/// Gradients of the blend-weight norm regularizer.
pub struct WeightNormGrads {
    pub dw: Vec<Vec<f64>>,
    pub wt: Vec<[f64; N_LATENT]>,
}

/// `lambda_hat * ||dW_k|| + lambda_tilde * ||wt_k||`, averaged over surfels.
pub fn weight_norm_reg(set: &SurfelSet, lambda_hat: f64, lambda_tilde: f64) -> (f64, WeightNormGrads) {
    let n = set.len().max(1) as f64;
    let mut g_dw = Vec::with_capacity(set.len());
    let mut g_wt = Vec::with_capacity(set.len());
    let mut acc = 0.0;
    for s in &set.surfels {
        let norm_dw = s.dw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_wt = s.wt.iter().map(|x| x * x).sum::<f64>().sqrt();
        acc += lambda_hat * norm_dw + lambda_tilde * norm_wt;
        let mut gd = vec![0.0; s.dw.len()];
        if norm_dw > 1e-12 {
            for (g, x) in gd.iter_mut().zip(&s.dw) {
                *g = lambda_hat * x / (norm_dw * n);
            }
        }
        let mut gw = [0.0; N_LATENT];
        if norm_wt > 1e-12 {
            for (g, x) in gw.iter_mut().zip(&s.wt) {
                *g = lambda_tilde * x / (norm_wt * n);
            }
        }
        g_dw.push(gd);
        g_wt.push(gw);
    }
    (acc / n, WeightNormGrads { dw: g_dw, wt: g_wt })
}
