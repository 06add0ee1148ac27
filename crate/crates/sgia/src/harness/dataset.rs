//! On-disk scene dataset: a JSON manifest referencing PNG images/masks,
//! JSON pose/camera arrays, the skinned template, and (for synthetic scenes)
//! ground-truth planes.

use crate::core::{Camera, Pose, SkinnedTemplate};
use crate::splatter::{load_plane, load_png};
use crate::training::Frame;
use crate::{Result, SgiaError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Ground-truth artifacts emitted by the synthetic generator. All paths are
/// relative to the manifest directory.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct GroundTruth {
    /// Per-frame albedo planes (3-channel float).
    #[serde(default)]
    pub albedo: Vec<String>,
    /// Per-frame world-normal planes (3-channel float).
    #[serde(default)]
    pub normal: Vec<String>,
    /// Per-frame alpha planes (1-channel float).
    #[serde(default)]
    pub alpha: Vec<String>,
    /// Equirectangular environment radiance (3-channel float plane).
    #[serde(default)]
    pub env: Option<String>,
    /// Full generating model as a checkpoint.
    #[serde(default)]
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub width: usize,
    pub height: usize,
    pub template: String,
    /// Image paths, one per frame.
    pub images: Vec<String>,
    /// Mask paths, one per frame.
    pub masks: Vec<String>,
    /// Path of the JSON pose array.
    pub poses: String,
    /// Path of the JSON camera array.
    pub cameras: String,
    #[serde(default)]
    pub gt: Option<GroundTruth>,
}

/// A loaded dataset with resolved paths and parsed poses/cameras.
pub struct SceneDataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub template: SkinnedTemplate,
    pub poses: Vec<Pose>,
    pub cameras: Vec<Camera>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl SceneDataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let f = std::fs::File::open(dir.join(MANIFEST_NAME))?;
        let manifest: Manifest = serde_json::from_reader(std::io::BufReader::new(f))?;
        let template = SkinnedTemplate::load_json(&dir.join(&manifest.template))?;
        let poses: Vec<Pose> = read_json(&dir.join(&manifest.poses))?;
        let cameras: Vec<Camera> = read_json(&dir.join(&manifest.cameras))?;
        let ds = SceneDataset {
            dir: dir.to_path_buf(),
            manifest,
            template,
            poses,
            cameras,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_frames(&self) -> usize {
        self.manifest.images.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_frames();
        if self.manifest.masks.len() != n || self.poses.len() != n || self.cameras.len() != n {
            return Err(SgiaError::ShapeMismatch(format!(
                "manifest lists {n} images but {} masks, {} poses, {} cameras",
                self.manifest.masks.len(),
                self.poses.len(),
                self.cameras.len()
            )));
        }
        let nj = self.template.n_joints();
        for (i, p) in self.poses.iter().enumerate() {
            p.validate(nj)
                .map_err(|e| SgiaError::InvalidInput(format!("pose {i}: {e}")))?;
        }
        for (i, c) in self.cameras.iter().enumerate() {
            c.validate()?;
            if c.width != self.manifest.width || c.height != self.manifest.height {
                return Err(SgiaError::ShapeMismatch(format!(
                    "camera {i} resolution differs from the manifest"
                )));
            }
        }
        Ok(())
    }

    /// Load one supervised frame (image to linear RGB, mask to [0,1]).
    pub fn frame(&self, i: usize) -> Result<Frame> {
        let (image, w, h, _) = load_png(&self.dir.join(&self.manifest.images[i]))?;
        if w != self.manifest.width || h != self.manifest.height {
            return Err(SgiaError::ShapeMismatch(format!("frame {i} image size mismatch")));
        }
        let (mask_rgb, mw, mh, _) = load_png(&self.dir.join(&self.manifest.masks[i]))?;
        if mw != w || mh != h {
            return Err(SgiaError::ShapeMismatch(format!("frame {i} mask size mismatch")));
        }
        Ok(Frame {
            image,
            mask: mask_rgb[..w * h].to_vec(),
            pose: self.poses[i].clone(),
            camera: self.cameras[i].clone(),
        })
    }

    pub fn frames(&self) -> Result<Vec<Frame>> {
        (0..self.n_frames()).map(|i| self.frame(i)).collect()
    }

    /// Ground-truth plane for frame `i`, if the dataset carries it.
    pub fn gt_plane(&self, list: &[String], i: usize) -> Result<Option<Vec<f64>>> {
        if i >= list.len() {
            return Ok(None);
        }
        let (data, w, h, _) = load_plane(&self.dir.join(&list[i]))?;
        if w != self.manifest.width || h != self.manifest.height {
            return Err(SgiaError::ShapeMismatch(format!("ground-truth plane {i} size mismatch")));
        }
        Ok(Some(data))
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
    Ok(())
}
