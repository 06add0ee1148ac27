//! Surfel-based differentiable inverse rendering for articulated subjects.
//!
//! The engine reconstructs geometry, PBR materials, and environment lighting
//! of a skinned subject from posed images. Flat 2D Gaussian surfels are
//! animated by linear blend skinning, shaded with split-sum image-based
//! lighting gated by template-baked ambient occlusion, and rasterized with a
//! differentiable tile-based splatter. Training runs in two stages: radiance
//! field reconstruction, then PBR estimation with a progressive
//! normal-consistency schedule.

pub mod articulation;
pub mod core;
pub mod harness;
pub mod math;
pub mod occlusion;
pub mod shading;
pub mod splatter;
pub mod training;

mod error;

pub use error::{Result, SgiaError};
