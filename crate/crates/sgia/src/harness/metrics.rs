//! Evaluation metrics: scale-aligned albedo PSNR/SSIM, normal angular error,
//! and photometric re-render quality against a dataset with ground truth.

use super::dataset::SceneDataset;
use crate::core::{bake_skinning_grid, Checkpoint};
use crate::shading::bake_dfg_lut;
use crate::splatter::{render, RenderOpts};
use crate::training::{
    pose_surfels_with, surfel_ao, world_surfels_stage2, AoBake, Model, S2_ALBEDO, S2_NORMAL, S2_SHADE,
};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// PSNR cap: identical images report this instead of infinity.
pub const PSNR_CAP: f64 = 99.0;

fn to_srgb(x: f64) -> f64 {
    x.clamp(0.0, 1.0).powf(1.0 / 2.2)
}

/// PSNR between two linear images, measured in gamma-encoded (display) space.
pub fn psnr_srgb(a: &[f64], b: &[f64]) -> f64 {
    let mse: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = to_srgb(x) - to_srgb(y);
            d * d
        })
        .sum::<f64>()
        / a.len().max(1) as f64;
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

/// Masked PSNR in display space: only pixels where `mask > 0.5` contribute.
pub fn psnr_srgb_masked(a: &[f64], b: &[f64], mask: &[f64], channels: usize) -> f64 {
    let npix = mask.len();
    let mut mse = 0.0;
    let mut n = 0usize;
    for i in 0..npix {
        if mask[i] <= 0.5 {
            continue;
        }
        for c in 0..channels {
            let d = to_srgb(a[c * npix + i]) - to_srgb(b[c * npix + i]);
            mse += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return PSNR_CAP;
    }
    mse /= n as f64;
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

/// Mean SSIM of a 3-channel planar image pair, averaged over channels,
/// restricted to `mask > 0.5`.
pub fn ssim_rgb(a: &[f64], b: &[f64], mask: &[f64], w: usize, h: usize) -> f64 {
    let npix = w * h;
    let fg: Vec<bool> = mask.iter().map(|&m| m > 0.5).collect();
    (0..3)
        .map(|c| crate::training::ssim_mean(&a[c * npix..(c + 1) * npix], &b[c * npix..(c + 1) * npix], w, h, &fg).0)
        .sum::<f64>()
        / 3.0
}

/// Least-squares per-channel scale aligning `pred` to `gt` over masked
/// pixels: s_c = sum(gt·pred) / sum(pred²). Returns the scaled prediction.
pub fn scale_align(pred: &[f64], gt: &[f64], mask: &[f64], channels: usize) -> (Vec<f64>, Vec<f64>) {
    let npix = mask.len();
    let mut scales = Vec::with_capacity(channels);
    let mut out = pred.to_vec();
    for c in 0..channels {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..npix {
            if mask[i] > 0.5 {
                num += gt[c * npix + i] * pred[c * npix + i];
                den += pred[c * npix + i] * pred[c * npix + i];
            }
        }
        let s = if den > 1e-12 { num / den } else { 1.0 };
        scales.push(s);
        for i in 0..npix {
            out[c * npix + i] *= s;
        }
    }
    (out, scales)
}

/// Mean angular error in degrees between two normal images over pixels where
/// both alphas exceed 0.5.
pub fn normal_error_deg(pred_n: &[f64], pred_a: &[f64], gt_n: &[f64], gt_a: &[f64]) -> Option<f64> {
    let npix = pred_a.len();
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 0..npix {
        if pred_a[i] <= 0.5 || gt_a[i] <= 0.5 {
            continue;
        }
        let mut dot = 0.0;
        let mut la = 0.0;
        let mut lb = 0.0;
        for c in 0..3 {
            let (x, y) = (pred_n[c * npix + i], gt_n[c * npix + i]);
            dot += x * y;
            la += x * x;
            lb += y * y;
        }
        if la < 1e-12 || lb < 1e-12 {
            continue;
        }
        let cosang = (dot / (la.sqrt() * lb.sqrt())).clamp(-1.0, 1.0);
        acc += cosang.acos().to_degrees();
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(acc / n as f64)
    }
}

/// Metrics of one frame; `None` entries mean the ground truth needed for
/// them was not present in the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub photo_psnr_db: f64,
    pub photo_ssim: f64,
    pub albedo_psnr_db: Option<f64>,
    pub albedo_ssim: Option<f64>,
    pub normal_error_deg: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_frame: Vec<FrameMetrics>,
    pub mean_photo_psnr_db: f64,
    pub mean_albedo_psnr_db: Option<f64>,
    pub mean_normal_error_deg: Option<f64>,
    /// Per-channel albedo alignment scales averaged over frames.
    pub albedo_scales: Option<[f64; 3]>,
}

fn mean_opt(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = vals.flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Render every dataset frame from `model` and compare against the images
/// and any available ground-truth planes.
pub fn evaluate(model: &Model, ds: &SceneDataset) -> Result<MetricsReport> {
    let tpl = &ds.template;
    let grid = bake_skinning_grid(tpl, [32, 32, 32])?;
    let lut = bake_dfg_lut();
    let npix = ds.manifest.width * ds.manifest.height;
    let empty = Vec::new();
    let (gt_albedo, gt_normal, gt_alpha) = match &ds.manifest.gt {
        Some(g) => (&g.albedo, &g.normal, &g.alpha),
        None => (&empty, &empty, &empty),
    };

    let mut per_frame = Vec::with_capacity(ds.n_frames());
    let mut scale_acc = [0.0f64; 3];
    let mut scale_n = 0usize;
    for m in 0..ds.n_frames() {
        let frame = ds.frame(m)?;
        let (bvh, verts, vao) = super::generate::bake_ao_for_pose(tpl, &frame.pose, 100)?;
        let bake = AoBake {
            bvh: &bvh,
            vertices: &verts,
            faces: &tpl.faces,
            vertex_ao: &vao,
        };
        let posed = pose_surfels_with(model, &grid, tpl, &frame.pose, &frame.camera)?;
        let ao = surfel_ao(&posed, Some(&bake));
        let (world, _) = world_surfels_stage2(model, &posed, &ao, &lut, false)?;
        let out = render(&world, &frame.camera, &RenderOpts::default())?;

        let shade = &out.attrs[S2_SHADE * npix..(S2_SHADE + 3) * npix];
        let photo_psnr = psnr_srgb_masked(shade, &frame.image, &frame.mask, 3);
        let photo_ssim = ssim_rgb(shade, &frame.image, &frame.mask, ds.manifest.width, ds.manifest.height);

        let mut fm = FrameMetrics {
            frame: m,
            photo_psnr_db: photo_psnr,
            photo_ssim,
            albedo_psnr_db: None,
            albedo_ssim: None,
            normal_error_deg: None,
        };
        if let (Some(gt_alb), Some(gt_a)) = (ds.gt_plane(gt_albedo, m)?, ds.gt_plane(gt_alpha, m)?) {
            let pred = &out.attrs[S2_ALBEDO * npix..(S2_ALBEDO + 3) * npix];
            let mut both = vec![0.0; npix];
            for i in 0..npix {
                both[i] = if out.alpha[i] > 0.5 && gt_a[i] > 0.5 { 1.0 } else { 0.0 };
            }
            let (aligned, scales) = scale_align(pred, &gt_alb, &both, 3);
            fm.albedo_psnr_db = Some(psnr_srgb_masked(&aligned, &gt_alb, &both, 3));
            fm.albedo_ssim = Some(ssim_rgb(&aligned, &gt_alb, &both, ds.manifest.width, ds.manifest.height));
            for c in 0..3 {
                scale_acc[c] += scales[c];
            }
            scale_n += 1;
        }
        if let (Some(gt_n), Some(gt_a)) = (ds.gt_plane(gt_normal, m)?, ds.gt_plane(gt_alpha, m)?) {
            let pred_n = &out.attrs[S2_NORMAL * npix..(S2_NORMAL + 3) * npix];
            fm.normal_error_deg = normal_error_deg(pred_n, &out.alpha, &gt_n, &gt_a);
        }
        per_frame.push(fm);
    }

    let mean_photo = per_frame.iter().map(|f| f.photo_psnr_db).sum::<f64>() / per_frame.len().max(1) as f64;
    let report = MetricsReport {
        mean_photo_psnr_db: mean_photo,
        mean_albedo_psnr_db: mean_opt(per_frame.iter().map(|f| f.albedo_psnr_db)),
        mean_normal_error_deg: mean_opt(per_frame.iter().map(|f| f.normal_error_deg)),
        albedo_scales: if scale_n > 0 {
            Some([
                scale_acc[0] / scale_n as f64,
                scale_acc[1] / scale_n as f64,
                scale_acc[2] / scale_n as f64,
            ])
        } else {
            None
        },
        per_frame,
    };
    Ok(report)
}

/// Load a checkpoint into a [`Model`].
pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<Model> {
    use crate::articulation::LatentBoneNet;
    use crate::shading::EnvironmentLight;
    let mut env = EnvironmentLight::from_params(ck.env_res, ck.env_params.clone())?;
    env.refresh();
    Ok(Model {
        surfels: ck.surfels.clone(),
        net: LatentBoneNet::from_weights(ck.net_layout.clone(), ck.net_weights.clone())?,
        env,
        free_normals: None,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

/// Write the report as CSV (machine) and Markdown (human).
pub fn write_report(report: &MetricsReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from("frame,photo_psnr_db,photo_ssim,albedo_psnr_db,albedo_ssim,normal_error_deg\n");
    for f in &report.per_frame {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{},{},{}\n",
            f.frame,
            f.photo_psnr_db,
            f.photo_ssim,
            fmt_opt(f.albedo_psnr_db),
            fmt_opt(f.albedo_ssim),
            fmt_opt(f.normal_error_deg),
        ));
    }
    std::fs::write(out_dir.join("metrics.csv"), csv)?;

    let mut md = String::from("# Evaluation\n\n");
    md.push_str(&format!("- mean photometric PSNR: {:.2} dB\n", report.mean_photo_psnr_db));
    md.push_str(&format!(
        "- mean albedo PSNR (scale-aligned): {}\n",
        fmt_opt(report.mean_albedo_psnr_db)
    ));
    md.push_str(&format!(
        "- mean normal angular error: {} deg\n",
        fmt_opt(report.mean_normal_error_deg)
    ));
    if let Some(s) = report.albedo_scales {
        md.push_str(&format!("- albedo scales (r,g,b): {:.4}, {:.4}, {:.4}\n", s[0], s[1], s[2]));
    }
    std::fs::write(out_dir.join("metrics.md"), md)?;
    super::dataset::write_json(&out_dir.join("metrics.json"), report)?;
    Ok(())
}
