//! Named ablation bundles. Each bundle mutates exactly the configuration
//! keys that implement its named behavior; `config_diff` makes the footprint
//! auditable.

use crate::training::TrainConfig;
use crate::{Result, SgiaError};

pub const BUNDLES: [&str; 8] = [
    "freeze-shape",
    "no-progressive",
    "l1-consistency",
    "3d-primitive-normals",
    "no-occlusion",
    "no-white-reg",
    "no-smooth-reg",
    "clothed-mesh-ao",
];

/// Apply one ablation bundle to a base configuration. `clothed-mesh-ao`
/// needs the path of the replacement occluder mesh.
pub fn apply_bundle(base: &TrainConfig, name: &str, mesh_path: Option<&str>) -> Result<TrainConfig> {
    let mut cfg = base.clone();
    match name {
        "freeze-shape" => cfg.freeze_shape = true,
        "no-progressive" => cfg.progressive = false,
        "l1-consistency" => cfg.nc_l1 = true,
        "3d-primitive-normals" => cfg.free_normals = true,
        "no-occlusion" => cfg.occlusion = false,
        "no-white-reg" => cfg.white_reg = false,
        "no-smooth-reg" => cfg.smooth_reg = false,
        "clothed-mesh-ao" => {
            let path = mesh_path.ok_or_else(|| {
                SgiaError::InvalidInput("clothed-mesh-ao requires the path of the occluder mesh template".into())
            })?;
            cfg.ao_mesh = Some(path.to_string());
        }
        other => {
            return Err(SgiaError::InvalidInput(format!(
                "unknown ablation bundle '{other}'; known: {}",
                BUNDLES.join(", ")
            )))
        }
    }
    Ok(cfg)
}

/// Top-level keys whose values differ between two configurations.
pub fn config_diff(a: &TrainConfig, b: &TrainConfig) -> Vec<String> {
    let ta = toml::Value::try_from(a).expect("serializable config");
    let tb = toml::Value::try_from(b).expect("serializable config");
    let (ta, tb) = match (ta, tb) {
        (toml::Value::Table(x), toml::Value::Table(y)) => (x, y),
        _ => return vec!["<non-table config>".into()],
    };
    let mut keys: Vec<String> = ta.keys().chain(tb.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    keys.into_iter().filter(|k| ta.get(k) != tb.get(k)).collect()
}

/// The configuration keys each bundle is allowed to touch.
pub fn expected_keys(name: &str) -> &'static [&'static str] {
    match name {
        "freeze-shape" => &["freeze_shape"],
        "no-progressive" => &["progressive"],
        "l1-consistency" => &["nc_l1"],
        "3d-primitive-normals" => &["free_normals"],
        "no-occlusion" => &["occlusion"],
        "no-white-reg" => &["white_reg"],
        "no-smooth-reg" => &["smooth_reg"],
        "clothed-mesh-ao" => &["ao_mesh"],
        _ => &[],
    }
}
