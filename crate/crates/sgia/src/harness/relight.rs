//! Novel-pose relighting: render a trained model under an external
//! environment map, re-prefiltering the lighting and re-baking ambient
//! occlusion for every pose.

use super::dataset::SceneDataset;
use crate::core::bake_skinning_grid;
use crate::shading::{bake_dfg_lut, env_from_equirect, EnvironmentLight};
use crate::splatter::{load_plane, load_png, render, save_png16, RenderOpts};
use crate::training::{pose_surfels_with, surfel_ao, world_surfels_stage2, AoBake, Model, S2_SHADE};
use crate::{Result, SgiaError};
use std::path::Path;

/// Load an equirectangular environment (SGFP float plane or PNG) and
/// prefilter it into the engine's cubemap representation.
pub fn load_environment(path: &Path, res: usize) -> Result<EnvironmentLight> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let (data, w, h, c) = if ext.eq_ignore_ascii_case("png") {
        load_png(path)?
    } else {
        load_plane(path)?
    };
    if c != 3 {
        return Err(SgiaError::BadFormat(format!("environment map must have 3 channels, got {c}")));
    }
    env_from_equirect(&data, w, h, res)
}

/// Result of relighting one pose sequence.
pub struct RelightOutput {
    /// Per-frame shaded linear images (3 planar channels).
    pub images: Vec<Vec<f64>>,
    /// Per-frame alpha planes.
    pub alphas: Vec<Vec<f64>>,
    pub width: usize,
    pub height: usize,
}

/// Render every frame of `ds` from `model` lit by `env`, writing a 16-bit
/// PNG sequence plus a contact sheet into `out_dir`.
pub fn relight(model: &Model, env: &EnvironmentLight, ds: &SceneDataset, out_dir: &Path) -> Result<RelightOutput> {
    let mut lit = Model {
        surfels: model.surfels.clone(),
        net: model.net.clone(),
        env: env.clone(),
        free_normals: model.free_normals.clone(),
    };
    lit.env.refresh();
    let tpl = &ds.template;
    let grid = bake_skinning_grid(tpl, [32, 32, 32])?;
    let lut = bake_dfg_lut();
    let (w, h) = (ds.manifest.width, ds.manifest.height);
    let npix = w * h;
    std::fs::create_dir_all(out_dir)?;

    let mut images = Vec::with_capacity(ds.n_frames());
    let mut alphas = Vec::with_capacity(ds.n_frames());
    for m in 0..ds.n_frames() {
        let pose = &ds.poses[m];
        let cam = &ds.cameras[m];
        let (bvh, verts, vao) = super::generate::bake_ao_for_pose(tpl, pose, 100)?;
        let bake = AoBake {
            bvh: &bvh,
            vertices: &verts,
            faces: &tpl.faces,
            vertex_ao: &vao,
        };
        let posed = pose_surfels_with(&lit, &grid, tpl, pose, cam)?;
        let ao = surfel_ao(&posed, Some(&bake));
        let (world, _) = world_surfels_stage2(&lit, &posed, &ao, &lut, false)?;
        let out = render(&world, cam, &RenderOpts::default())?;
        let shade = out.attrs[S2_SHADE * npix..(S2_SHADE + 3) * npix].to_vec();
        save_png16(&out_dir.join(format!("relight_{m:04}.png")), &shade, w, h, 3)?;
        save_png16(&out_dir.join(format!("alpha_{m:04}.png")), &out.alpha, w, h, 1)?;
        images.push(shade);
        alphas.push(out.alpha);
    }
    contact_sheet(&images, w, h, &out_dir.join("contact_sheet.png"))?;
    Ok(RelightOutput {
        images,
        alphas,
        width: w,
        height: h,
    })
}

/// Tile the frames into a roughly square grid and save one overview PNG.
pub fn contact_sheet(images: &[Vec<f64>], w: usize, h: usize, path: &Path) -> Result<()> {
    if images.is_empty() {
        return Ok(());
    }
    let cols = (images.len() as f64).sqrt().ceil() as usize;
    let rows = images.len().div_ceil(cols);
    let (sw, sh) = (cols * w, rows * h);
    let mut sheet = vec![0.0; sw * sh * 3];
    let npix = w * h;
    for (m, img) in images.iter().enumerate() {
        let (tx, ty) = ((m % cols) * w, (m / cols) * h);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    sheet[c * sw * sh + (ty + y) * sw + tx + x] = img[c * npix + y * w + x];
                }
            }
        }
    }
    save_png16(path, &sheet, sw, sh, 3)
}

/// Dilate a binary mask outward by `radius` pixels (chessboard metric).
pub fn dilate_mask(mask: &[f64], w: usize, h: usize, radius: usize) -> Vec<f64> {
    let mut cur: Vec<f64> = mask.iter().map(|&m| if m > 0.5 { 1.0 } else { 0.0 }).collect();
    for _ in 0..radius {
        let prev = cur.clone();
        for y in 0..h {
            for x in 0..w {
                if prev[y * w + x] > 0.5 {
                    continue;
                }
                let mut hit = false;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && prev[ny as usize * w + nx as usize] > 0.5 {
                            hit = true;
                        }
                    }
                }
                if hit {
                    cur[y * w + x] = 1.0;
                }
            }
        }
    }
    cur
}

/// Foreground dilation radius used for relighting metrics, scaled from the
/// reference 100 px at 540-px resolution.
pub fn relight_dilation_radius(res: usize) -> usize {
    ((100 * res) as f64 / 540.0).round() as usize
}

/// Relighting PSNR over the dilated foreground.
pub fn relight_psnr(pred: &[f64], gt: &[f64], alpha_gt: &[f64], w: usize, h: usize) -> f64 {
    let mask = dilate_mask(alpha_gt, w, h, relight_dilation_radius(w.max(h)));
    super::metrics::psnr_srgb_masked(pred, gt, &mask, 3)
}
