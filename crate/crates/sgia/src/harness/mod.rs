//! Experiment infrastructure: the synthetic scene generator, dataset
//! format, evaluation metrics, relighting export, ablation bundles, and the
//! finite-difference verification suites behind the CLI.

pub mod ablate;
pub mod capsule;
pub mod dataset;
pub mod generate;
pub mod gradcheck;
pub mod metrics;
pub mod relight;

pub use ablate::{apply_bundle, config_diff, expected_keys, BUNDLES};
pub use capsule::{capsule_man, CapsuleManSpec};
pub use dataset::{read_json, write_json, GroundTruth, Manifest, SceneDataset, MANIFEST_NAME};
pub use generate::{generate_synthetic_scene, ground_truth_model, pose_sequence, GenerateReport, GeneratorSpec};
pub use gradcheck::{run_all as run_gradcheck, SuiteResult};
pub use metrics::{evaluate, model_from_checkpoint, normal_error_deg, psnr_srgb, scale_align, write_report, MetricsReport, PSNR_CAP};
pub use relight::{dilate_mask, load_environment, relight, relight_psnr, RelightOutput};

use crate::articulation::LatentBoneNet;
use crate::core::init_surfels_from_template;
use crate::shading::EnvironmentLight;
use crate::training::{train, Model, TrainConfig, TrainOutcome};
use crate::Result;
use std::path::Path;

/// Fresh model for training on a dataset: surfels seeded from the template,
/// a neutral gray environment, and an identity-initialized bone network.
pub fn initial_model(ds: &SceneDataset, cfg: &TrainConfig) -> Result<Model> {
    let surfels = init_surfels_from_template(&ds.template)?;
    let mut env = EnvironmentLight::new(cfg.env_res, 0.5);
    env.refresh();
    Ok(Model {
        surfels,
        net: LatentBoneNet::new(ds.template.n_joints(), cfg.seed),
        env,
        free_normals: None,
    })
}

/// Load the dataset frames and run the full training schedule.
pub fn run_training(ds: &SceneDataset, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let frames = ds.frames()?;
    let model = initial_model(ds, cfg)?;
    train(&frames, &ds.template, model, cfg, out_dir)
}
