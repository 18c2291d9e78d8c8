//! Identity-consistency evaluation: ground-truth matching and
//! last-known-assignment identity switch counting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_matching;
use crate::error::{Error, Result};
use crate::types::{box_iou, BoundingBox, CameraId, GlobalId, GtId};

/// Where the last known assignment of a ground-truth target is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateScope {
    /// One state per `(camera, gt_id)`.
    #[default]
    PerCamera,
    /// One state per `gt_id`, shared by all cameras.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_min: f64,
    pub scope: StateScope,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_min: 0.5, scope: StateScope::PerCamera }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_min > 0.0 && self.iou_min <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("eval.iou_min must lie in (0,1], got {}", self.iou_min)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalFrame {
    pub frame: u32,
    pub gt: Vec<(GtId, BoundingBox)>,
    pub hyp: Vec<(GlobalId, BoundingBox)>,
}

/// Ground truth and hypotheses per camera, frames in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSequence {
    cameras: BTreeMap<CameraId, Vec<EvalFrame>>,
}

impl EvalSequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a frame for `camera`; missing frames since the previous one
    /// are filled in as empty.
    pub fn push(&mut self, camera: CameraId, frame: EvalFrame) -> Result<()> {
        let frames = self.cameras.entry(camera).or_default();
        if let Some(last) = frames.last() {
            if frame.frame <= last.frame {
                return Err(Error::SequenceMismatch(format!(
                    "{camera} frame {} does not follow {}",
                    frame.frame, last.frame
                )));
            }
            for f in last.frame + 1..frame.frame {
                frames.push(EvalFrame { frame: f, ..Default::default() });
            }
        }
        frames.push(frame);
        Ok(())
    }

    pub fn frames(&self, camera: CameraId) -> &[EvalFrame] {
        self.cameras.get(&camera).map_or(&[], Vec::as_slice)
    }

    pub fn cameras(&self) -> impl Iterator<Item = CameraId> + '_ {
        self.cameras.keys().copied()
    }
}

/// Optimal one-to-one matching of ground truth to hypotheses by total IoU,
/// restricted to pairs with IoU of at least `iou_min`.
pub fn match_frame(gt: &[(GtId, BoundingBox)], hyp: &[(GlobalId, BoundingBox)], iou_min: f64) -> Vec<(GtId, GlobalId)> {
    let weights: Vec<Vec<f64>> = gt
        .iter()
        .map(|(_, g)| {
            hyp.iter()
                .map(|(_, h)| {
                    let iou = box_iou(g, h);
                    if iou >= iou_min { iou } else { 0.0 }
                })
                .collect()
        })
        .collect();
    max_weight_matching(&weights).into_iter().map(|(g, h)| (gt[g].0, hyp[h].0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCount {
    pub camera: CameraId,
    pub frame: u32,
    pub idsw: u64,
    pub id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraReport {
    pub idsw: u64,
    pub id: u64,
    pub ic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IcReport {
    pub total_idsw: u64,
    pub total_id: u64,
    /// Absent when there is no ground truth at all.
    pub ic: Option<f64>,
    pub per_camera: BTreeMap<CameraId, CameraReport>,
    pub per_frame: Vec<FrameCount>,
}

pub fn identity_consistency(idsw: u64, id: u64) -> Option<f64> {
    (id > 0).then(|| 1.0 - idsw as f64 / id as f64)
}

/// Counts identity switches: a matched target whose hypothesis differs from
/// its last known assignment. Unmatched frames leave the assignment alone.
pub fn count_idsw(seq: &EvalSequence, cfg: &EvalConfig) -> IcReport {
    let mut state: BTreeMap<(Option<CameraId>, GtId), GlobalId> = BTreeMap::new();
    let mut report = IcReport::default();

    // Frame-major order so that a shared state sees cameras in rig order.
    let mut order: Vec<(u32, CameraId, &EvalFrame)> = seq
        .cameras
        .iter()
        .flat_map(|(c, frames)| frames.iter().map(move |f| (f.frame, *c, f)))
        .collect();
    order.sort_by_key(|(f, c, _)| (*f, *c));

    for (frame, camera, ef) in order {
        let mut idsw = 0;
        for (gt, hyp) in match_frame(&ef.gt, &ef.hyp, cfg.iou_min) {
            let key = match cfg.scope {
                StateScope::PerCamera => (Some(camera), gt),
                StateScope::Global => (None, gt),
            };
            if let Some(prev) = state.insert(key, hyp) {
                if prev != hyp {
                    idsw += 1;
                }
            }
        }
        let id = ef.gt.len() as u64;
        let cam = report.per_camera.entry(camera).or_default();
        cam.idsw += idsw;
        cam.id += id;
        report.total_idsw += idsw;
        report.total_id += id;
        report.per_frame.push(FrameCount { camera, frame, idsw, id });
    }
    for cam in report.per_camera.values_mut() {
        cam.ic = identity_consistency(cam.idsw, cam.id);
    }
    report.ic = identity_consistency(report.total_idsw, report.total_id);
    report
}
