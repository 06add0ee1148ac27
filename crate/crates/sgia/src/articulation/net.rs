//! Pose-conditioned latent bones: a small MLP maps joint rotations to four
//! extra rigid transforms (axis-angle + translation each).

use super::{Rigid, RigidGrad};
use crate::core::{Pose, N_LATENT};
use crate::math::{axis_angle_backward, axis_angle_to_matrix, softplus, V3};
use crate::{Result, SgiaError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HIDDEN: usize = 64;

/// Fully connected pose-to-latent-bones network with softplus hidden layers.
///
/// The output layer starts at zero so the latent bones begin as identities.
#[derive(Debug, Clone)]
pub struct LatentBoneNet {
    /// Layer sizes `[input, hidden.., output]`.
    pub layout: Vec<usize>,
    /// Row-major weight matrix then bias vector for each layer, concatenated.
    pub weights: Vec<f64>,
}

impl LatentBoneNet {
    pub fn new(n_joints: usize, seed: u64) -> Self {
        let layout = vec![3 * n_joints, HIDDEN, HIDDEN, 6 * N_LATENT];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(Self::n_params(&layout));
        for l in 0..layout.len() - 1 {
            let (fan_in, fan_out) = (layout[l], layout[l + 1]);
            let last = l == layout.len() - 2;
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                weights.push(if last { 0.0 } else { rng.gen_range(-bound..bound) });
            }
            weights.extend(std::iter::repeat(0.0).take(fan_out));
        }
        LatentBoneNet { layout, weights }
    }

    pub fn n_params(layout: &[usize]) -> usize {
        layout.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn from_weights(layout: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != Self::n_params(&layout) {
            return Err(SgiaError::ShapeMismatch("latent net weight count mismatch".into()));
        }
        Ok(LatentBoneNet { layout, weights })
    }

    /// Forward pass retaining pre-activations for the backward pass.
    fn forward(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n_layers = self.layout.len() - 1;
        let mut acts: Vec<Vec<f64>> = vec![input.to_vec()];
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.layout[l], self.layout[l + 1]);
            let w = &self.weights[off..off + fan_in * fan_out];
            let b = &self.weights[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let prev = acts.last().unwrap();
            let mut z = vec![0.0; fan_out];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                *zo = b[o] + row.iter().zip(prev).map(|(a, x)| a * x).sum::<f64>();
            }
            let a = if l + 1 == n_layers {
                z.clone()
            } else {
                z.iter().map(|&x| softplus(x)).collect()
            };
            zs.push(z);
            acts.push(a);
        }
        (acts, zs)
    }
}

/// Retained forward state of [`latent_bones`].
pub struct LatentCtx {
    acts: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    aa: Vec<V3>,
}

/// Evaluate the latent bones for a pose.
pub fn latent_bones(net: &LatentBoneNet, pose: &Pose) -> Result<(Vec<Rigid>, LatentCtx)> {
    if pose.theta.len() != net.layout[0] {
        return Err(SgiaError::ShapeMismatch("pose length does not match latent net input".into()));
    }
    let (acts, zs) = net.forward(&pose.theta);
    let out = acts.last().unwrap();
    let mut bones = Vec::with_capacity(N_LATENT);
    let mut aa = Vec::with_capacity(N_LATENT);
    for j in 0..N_LATENT {
        let o = &out[6 * j..6 * j + 6];
        let w = V3::new(o[0], o[1], o[2]);
        bones.push(Rigid {
            rot: axis_angle_to_matrix(&w),
            t: V3::new(o[3], o[4], o[5]),
        });
        aa.push(w);
    }
    Ok((bones, LatentCtx { acts, zs, aa }))
}

/// Pull rigid-transform gradients back to flat net-weight gradients.
pub fn latent_bones_backward(net: &LatentBoneNet, ctx: &LatentCtx, grads: &[RigidGrad]) -> Result<Vec<f64>> {
    if grads.len() != N_LATENT {
        return Err(SgiaError::ShapeMismatch("latent bone gradient count mismatch".into()));
    }
    let mut g_out = vec![0.0; 6 * N_LATENT];
    for (j, g) in grads.iter().enumerate() {
        let g_aa = axis_angle_backward(&ctx.aa[j], &g.rot);
        g_out[6 * j..6 * j + 3].copy_from_slice(g_aa.as_slice());
        g_out[6 * j + 3..6 * j + 6].copy_from_slice(g.t.as_slice());
    }

    let n_layers = net.layout.len() - 1;
    let mut g_weights = vec![0.0; net.weights.len()];
    let mut layer_off: Vec<usize> = Vec::with_capacity(n_layers);
    let mut off = 0;
    for l in 0..n_layers {
        layer_off.push(off);
        off += net.layout[l] * net.layout[l + 1] + net.layout[l + 1];
    }

    let mut g_a = g_out;
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = (net.layout[l], net.layout[l + 1]);
        let off = layer_off[l];
        let w = &net.weights[off..off + fan_in * fan_out];
        // hidden layers go through softplus; the output layer is linear
        let g_z: Vec<f64> = if l + 1 == n_layers {
            g_a
        } else {
            ctx.zs[l]
                .iter()
                .zip(&g_a)
                .map(|(&z, &g)| g / (1.0 + (-z).exp()))
                .collect()
        };
        let prev = &ctx.acts[l];
        for o in 0..fan_out {
            for i in 0..fan_in {
                g_weights[off + o * fan_in + i] += g_z[o] * prev[i];
            }
            g_weights[off + fan_in * fan_out + o] += g_z[o];
        }
        let mut g_prev = vec![0.0; fan_in];
        for o in 0..fan_out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            for (gp, wv) in g_prev.iter_mut().zip(row) {
                *gp += g_z[o] * wv;
            }
        }
        g_a = g_prev;
    }
    Ok(g_weights)
}
