//! Single-camera pipeline: one tracker per object, quality-gated template
//! updates, and the occlusion lifecycle.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quality::{
    iou_r, reid_confidence, resolve_occlusions, should_update_template, step_occlusion,
    OcclusionState, OcclusionStatus, QualityConfig, QualityHistory, UpdateMetric,
};
use crate::types::{box_iou, BoundingBox, CameraId, Detection, GlobalId, GtId};

/// Annotated position of a vehicle in one camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthBox {
    pub gt_id: GtId,
    pub bbox: BoundingBox,
    /// Fully hidden behind another vehicle; no detection exists for it.
    #[serde(default)]
    pub occluded: bool,
}

/// Everything one camera delivers for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub camera: CameraId,
    pub frame: u32,
    pub detections: Vec<Detection>,
    pub truth: Vec<TruthBox>,
}

impl FrameInput {
    pub fn empty(camera: CameraId, frame: u32) -> Self {
        Self { camera, frame, detections: Vec::new(), truth: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackTemplate {
    pub source: BoundingBox,
    pub frame: u32,
    /// Frames since the template was (re)initialized.
    pub age: u32,
}

impl TrackTemplate {
    pub fn new(source: BoundingBox, frame: u32) -> Self {
        Self { source, frame, age: 0 }
    }
}

/// Opaque per-track key handed out by a [`TrackerBackend`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrackHandle(pub u64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: BoundingBox,
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("target lost")]
    Lost,
}

/// Single-object tracker contract.
///
/// Implementations must be deterministic for a fixed seed and return
/// confidences in `[0, 1]`.
pub trait TrackerBackend {
    fn start(&mut self, template: &TrackTemplate, input: &FrameInput) -> TrackHandle;

    fn propose(
        &mut self,
        handle: TrackHandle,
        template: &TrackTemplate,
        input: &FrameInput,
    ) -> Result<Proposal, BackendError>;

    fn reinitialize(&mut self, handle: TrackHandle, template: &TrackTemplate, input: &FrameInput);

    fn release(&mut self, handle: TrackHandle);
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub id: GlobalId,
    pub handle: TrackHandle,
    pub template: TrackTemplate,
    pub last_box: BoundingBox,
    pub history: QualityHistory,
    pub occl: OcclusionState,
    pub last_c_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub id: GlobalId,
    pub bbox: BoundingBox,
    pub c_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum TrackEvent {
    TrackCreated(GlobalId),
    TemplateUpdated(GlobalId),
    TrackOccluded(GlobalId),
    /// The backend produced nothing; counted as occluded for the lifecycle.
    TrackLost(GlobalId),
    TrackDeleted(GlobalId),
    /// Superseded in this camera by a newcomer that inherited its id.
    TrackReplaced(GlobalId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub camera: CameraId,
    pub frame: u32,
    pub outputs: Vec<TrackOutput>,
    pub events: Vec<TrackEvent>,
}

/// Starts a tracker whose template is the detection box.
pub fn create_track(
    det: &Detection,
    id: GlobalId,
    input: &FrameInput,
    cfg: &QualityConfig,
    backend: &mut dyn TrackerBackend,
) -> TrackerState {
    let template = TrackTemplate::new(det.bbox, det.frame);
    let handle = backend.start(&template, input);
    TrackerState {
        id,
        handle,
        template,
        last_box: det.bbox,
        history: QualityHistory::new(cfg.m_window),
        occl: OcclusionState::default(),
        last_c_r: det.conf,
    }
}

/// `(overlap, confidence, c_r)` of a proposal relative to the previous output.
fn evaluate(prev: &BoundingBox, p: &Proposal, cfg: &QualityConfig) -> Result<(f64, f64, f64)> {
    let drift = iou_r(prev.center(), p.bbox.center(), cfg.r_side)?;
    let c_r = reid_confidence(p.conf.clamp(0.0, 1.0), drift)?;
    Ok(match cfg.update_metric {
        UpdateMetric::CenterDrift => (drift, c_r, c_r),
        UpdateMetric::BoxIou => (box_iou(prev, &p.bbox), p.conf, c_r),
    })
}

/// Advances every track by one frame.
///
/// Deleted tracks are removed from `tracks` and released from the backend.
pub fn process_frame(
    tracks: &mut Vec<TrackerState>,
    input: &FrameInput,
    cfg: &QualityConfig,
    backend: &mut dyn TrackerBackend,
) -> Result<FrameResult> {
    let mut events = Vec::new();
    let mut proposals: Vec<Option<(BoundingBox, f64)>> = Vec::with_capacity(tracks.len());

    for t in tracks.iter_mut() {
        debug_assert!(t.occl.status != OcclusionStatus::Deleted);
        let mut result = backend.propose(t.handle, &t.template, input).ok();
        if let Some(p) = result {
            let (overlap, conf, _) = evaluate(&t.last_box, &p, cfg)?;
            t.history.push(overlap, conf);
            if should_update_template(&t.history, cfg)? {
                t.template = TrackTemplate::new(p.bbox, input.frame);
                backend.reinitialize(t.handle, &t.template, input);
                events.push(TrackEvent::TemplateUpdated(t.id));
                t.history.clear();
                result = backend.propose(t.handle, &t.template, input).ok();
                if let Some(p2) = result {
                    let (overlap, conf, _) = evaluate(&t.last_box, &p2, cfg)?;
                    t.history.push(overlap, conf);
                }
            }
        }
        let out = match result {
            Some(p) => Some((p.bbox, evaluate(&t.last_box, &p, cfg)?.2)),
            None => None,
        };
        proposals.push(out);
    }

    let visible: Vec<(GlobalId, BoundingBox, f64)> = tracks
        .iter()
        .zip(&proposals)
        .filter_map(|(t, p)| p.map(|(b, c)| (t.id, b, c)))
        .collect();
    let occluded = resolve_occlusions(&visible, cfg);

    let mut outputs = Vec::new();
    let mut keep = Vec::with_capacity(tracks.len());
    for (t, proposal) in tracks.iter_mut().zip(&proposals) {
        let lost = proposal.is_none();
        let covered = occluded.contains(&t.id);
        if lost {
            events.push(TrackEvent::TrackLost(t.id));
        } else if covered {
            events.push(TrackEvent::TrackOccluded(t.id));
        }
        t.occl = step_occlusion(t.occl, lost || covered, cfg)?;
        if t.occl.status == OcclusionStatus::Deleted {
            events.push(TrackEvent::TrackDeleted(t.id));
            backend.release(t.handle);
            keep.push(false);
            continue;
        }
        if let Some((bbox, c_r)) = *proposal {
            outputs.push(TrackOutput { id: t.id, bbox, c_r });
            t.last_box = bbox;
            t.last_c_r = c_r;
        }
        t.template.age += 1;
        keep.push(true);
    }
    let mut flags = keep.into_iter();
    tracks.retain(|_| flags.next().unwrap_or(true));

    Ok(FrameResult { camera: input.camera, frame: input.frame, outputs, events })
}
