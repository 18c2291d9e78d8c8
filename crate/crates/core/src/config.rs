//! Run configuration: one TOML document covering every stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ablate::AblateConfig;
use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::mct::{DiskParams, MctConfig};
use crate::projection::{CameraModel, GroundPoint};
use crate::quality::QualityConfig;
use crate::sim::ScenarioConfig;

/// Left, front and right cameras of the default surround rig.
///
/// 1280x720 wide-angle cameras, 1 m above the ground, tilted 20 degrees down.
/// The front camera sits 2 m ahead of the ego origin; the side cameras look
/// sideways from 1 m left and right of it.
pub fn default_rig() -> [CameraModel; 3] {
    let cam = |x: f64, y: f64, yaw: f64| CameraModel {
        position: GroundPoint::new(x, y),
        height: 1.0,
        yaw,
        pitch: 20f64.to_radians(),
        hfov: 150f64.to_radians(),
        vfov: 84f64.to_radians(),
        image_width: 1280.0,
        image_height: 720.0,
        calib_noise_sigma: 0.1,
    };
    let half = std::f64::consts::FRAC_PI_2;
    [cam(0.0, 1.0, half), cam(2.0, 0.0, 0.0), cam(0.0, -1.0, -half)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    pub left: CameraModel,
    pub front: CameraModel,
    pub right: CameraModel,
}

impl Default for RigConfig {
    fn default() -> Self {
        let [left, front, right] = default_rig();
        Self { left, front, right }
    }
}

impl RigConfig {
    pub fn cameras(&self) -> [CameraModel; 3] {
        [self.left.clone(), self.front.clone(), self.right.clone()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    /// Disk radius at zero range, meters.
    pub r0: f64,
    /// Disk radius growth per meter of range.
    pub k: f64,
    pub rig: RigConfig,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { r0: 0.2, k: 0.05, rig: RigConfig::default() }
    }
}

impl ProjectionConfig {
    pub fn disks(&self) -> DiskParams {
        DiskParams { r0: self.r0, k: self.k }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Minimum IoU for a detection to count as explained by a track output.
    pub det_match_iou: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { det_match_iou: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub quality: QualityConfig,
    pub mct: MctConfig,
    pub projection: ProjectionConfig,
    pub sim: ScenarioConfig,
    pub eval: EvalConfig,
    pub pipeline: PipelineConfig,
    pub ablate: AblateConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.quality.validate()?;
        self.mct.validate()?;
        let p = &self.projection;
        if !(p.r0 >= 0.0 && p.k >= 0.0) {
            return Err(Error::InvalidConfig(format!("projection.r0/k must be non-negative, got {}/{}", p.r0, p.k)));
        }
        for cam in p.rig.cameras() {
            cam.validate()?;
        }
        self.sim.validate()?;
        self.eval.validate()?;
        if !(self.pipeline.det_match_iou > 0.0 && self.pipeline.det_match_iou <= 1.0) {
            return Err(Error::InvalidConfig("pipeline.det_match_iou must lie in (0,1]".into()));
        }
        self.ablate.validate()
    }

    pub fn rig(&self) -> [CameraModel; 3] {
        self.projection.rig.cameras()
    }
}
