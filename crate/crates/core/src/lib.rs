//! Multi-camera vehicle re-identification for a left/front/right surround rig.
//!
//! Each camera runs one single-object tracker per vehicle with quality-gated
//! template updates and an occlusion lifecycle ([`sct`]). Detections that no
//! track explains are matched against a shared identity gallery using
//! appearance and ground-plane keypoint evidence ([`mct`]). [`sim`] generates
//! deterministic scenarios with ground truth and [`metrics`] scores identity
//! consistency.

pub mod ablate;
pub mod assignment;
pub mod config;
pub mod error;
pub mod io;
pub mod mct;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod quality;
pub mod sct;
pub mod sim;
pub mod types;

pub use config::RunConfig;
pub use error::{Error, Result};
