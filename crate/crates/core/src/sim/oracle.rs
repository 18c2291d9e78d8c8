//! Stand-in single-object tracker driven by the simulator's ground truth.
//!
//! Each track follows its annotated vehicle with an accumulating random-walk
//! drift plus a per-frame positional jitter that does not accumulate. Both
//! grow with template age and with proximity to the image edge, and
//! reinitializing the template zeroes them. Confidence reflects the drift
//! only. A target that
//! stays hidden long enough makes the tracker lock onto the vehicle in front.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gauss, stream};
use crate::projection::CameraModel;
use crate::sct::{BackendError, FrameInput, Proposal, TrackHandle, TrackTemplate, TrackerBackend};
use crate::types::{box_intersection_area, box_iou, BoundingBox, GtId};

const TAG_TRACKER: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerNoise {
    /// Drift step deviation per frame of template age, pixels.
    pub drift_rate: f64,
    /// Upper bound on the template age used for the step size.
    pub age_cap: u32,
    /// Per-frame jitter deviation per frame of template age, pixels.
    pub jitter_rate: f64,
    /// Relative step increase at the image edges.
    pub edge_gain: f64,
    /// Relative box size jitter per proposal.
    pub scale_jitter: f64,
    /// Frames hidden before the tracker locks onto the occluder.
    pub latch_frames: u32,
    /// Drift beyond this multiple of the box size loses the target.
    pub loss_factor: f64,
    /// Confidence falls to 1/e when the drift reaches this multiple of the
    /// shorter box side.
    pub conf_scale: f64,
    pub occluded_conf: f64,
    pub latched_conf: f64,
}

impl Default for TrackerNoise {
    fn default() -> Self {
        Self {
            drift_rate: 0.05,
            age_cap: 60,
            jitter_rate: 0.0,
            edge_gain: 1.0,
            scale_jitter: 0.02,
            latch_frames: 3,
            loss_factor: 0.5,
            conf_scale: 0.5,
            occluded_conf: 0.5,
            latched_conf: 0.8,
        }
    }
}

impl TrackerNoise {
    pub fn noiseless() -> Self {
        Self { drift_rate: 0.0, jitter_rate: 0.0, scale_jitter: 0.0, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
struct Track {
    target: Option<GtId>,
    drift: (f64, f64),
    hidden_run: u32,
    latched: bool,
    lost: bool,
    rng: ChaCha8Rng,
}

/// [`TrackerBackend`] backed by simulator truth; see the module docs.
#[derive(Debug, Clone)]
pub struct OracleTracker {
    noise: TrackerNoise,
    rig: [CameraModel; 3],
    seed: u64,
    next: u64,
    tracks: BTreeMap<u64, Track>,
}

impl OracleTracker {
    pub fn new(noise: TrackerNoise, rig: [CameraModel; 3], seed: u64) -> Self {
        Self { noise, rig, seed, next: 0, tracks: BTreeMap::new() }
    }

    /// Accumulated drift of a live handle.
    pub fn drift(&self, handle: TrackHandle) -> Option<(f64, f64)> {
        self.tracks.get(&handle.0).map(|t| t.drift)
    }

    pub fn live_handles(&self) -> usize {
        self.tracks.len()
    }

    /// Standard deviation of one drift step.
    pub fn step_sigma(&self, age: u32, edge_proximity: f64) -> f64 {
        self.noise.drift_rate * age.min(self.noise.age_cap) as f64 * (1.0 + self.noise.edge_gain * edge_proximity)
    }

    fn best_match(template: &BoundingBox, input: &FrameInput, prefer: Option<GtId>) -> Option<GtId> {
        if let Some(t) = prefer.and_then(|g| input.truth.iter().find(|t| t.gt_id == g)) {
            if box_iou(&t.bbox, template) > 0.1 {
                return Some(t.gt_id);
            }
        }
        input
            .truth
            .iter()
            .map(|t| (box_iou(&t.bbox, template), t.gt_id))
            .filter(|(iou, _)| *iou > 0.1)
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|(_, g)| g)
    }
}

impl TrackerBackend for OracleTracker {
    fn start(&mut self, template: &TrackTemplate, input: &FrameInput) -> TrackHandle {
        let handle = self.next;
        self.next += 1;
        let track = Track {
            target: Self::best_match(&template.source, input, None),
            drift: (0.0, 0.0),
            hidden_run: 0,
            latched: false,
            lost: false,
            rng: stream(self.seed, TAG_TRACKER, handle, 0),
        };
        self.tracks.insert(handle, track);
        TrackHandle(handle)
    }

    fn propose(
        &mut self,
        handle: TrackHandle,
        template: &TrackTemplate,
        input: &FrameInput,
    ) -> Result<Proposal, BackendError> {
        let cam = &self.rig[input.camera.index()];
        let age = template.age.min(self.noise.age_cap) as f64;
        let noise = self.noise.clone();
        let t = self.tracks.get_mut(&handle.0).ok_or(BackendError::Lost)?;
        if t.lost {
            return Err(BackendError::Lost);
        }
        let gt = t.target.and_then(|g| input.truth.iter().find(|b| b.gt_id == g));
        let Some(mut gt) = gt.copied() else {
            t.lost = true;
            return Err(BackendError::Lost);
        };

        if gt.occluded {
            t.hidden_run += 1;
            if t.hidden_run > noise.latch_frames {
                let occluder = input
                    .truth
                    .iter()
                    .filter(|o| !o.occluded && o.gt_id != gt.gt_id)
                    .map(|o| (box_intersection_area(&o.bbox, &gt.bbox), o))
                    .filter(|(a, _)| *a > 0.0)
                    .max_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((_, o)) = occluder {
                    t.target = Some(o.gt_id);
                    t.latched = true;
                    t.hidden_run = 0;
                    gt = *o;
                }
            }
        } else {
            t.hidden_run = 0;
        }

        let edge = 1.0 + noise.edge_gain * cam.edge_proximity(gt.bbox.cx);
        let sigma = noise.drift_rate * age * edge;
        t.drift.0 += sigma * gauss(&mut t.rng);
        t.drift.1 += sigma * gauss(&mut t.rng);
        let jitter = noise.jitter_rate * age * edge;
        let jx = jitter * gauss(&mut t.rng);
        let jy = jitter * gauss(&mut t.rng);
        let sw = 1.0 + noise.scale_jitter * gauss(&mut t.rng);
        let sh = 1.0 + noise.scale_jitter * gauss(&mut t.rng);

        let b = gt.bbox;
        let magnitude = t.drift.0.hypot(t.drift.1);
        if magnitude > noise.loss_factor * b.w.max(b.h) {
            t.lost = true;
            return Err(BackendError::Lost);
        }
        let mut conf = (-magnitude / (noise.conf_scale * b.w.min(b.h))).exp();
        if gt.occluded {
            conf *= noise.occluded_conf;
        }
        if t.latched {
            conf *= noise.latched_conf;
        }
        let bbox = BoundingBox::new(
            b.cx + t.drift.0 + jx,
            b.cy + t.drift.1 + jy,
            (b.w * sw).max(1.0),
            (b.h * sh).max(1.0),
        )
        .map_err(|_| BackendError::Lost)?;
        Ok(Proposal { bbox, conf: conf.clamp(0.0, 1.0) })
    }

    fn reinitialize(&mut self, handle: TrackHandle, template: &TrackTemplate, input: &FrameInput) {
        if let Some(t) = self.tracks.get_mut(&handle.0) {
            t.target = Self::best_match(&template.source, input, t.target);
            t.drift = (0.0, 0.0);
            t.hidden_run = 0;
            t.latched = false;
            t.lost = false;
        }
    }

    fn release(&mut self, handle: TrackHandle) {
        self.tracks.remove(&handle.0);
    }
}
