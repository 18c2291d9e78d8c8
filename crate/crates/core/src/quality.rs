//! Quality evaluation of single-camera tracker outputs.
//!
//! A tracker output is judged by how far its center moved since the previous
//! frame (`iou_r`), by the tracker confidence discounted by that movement
//! (`reid_confidence`), and by how much of it is covered by other tracks
//! (`occlusion_coefficient`). Windowed averages of the first two decide when a
//! template is refreshed; the third drives the occlusion lifecycle.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{box_intersection_area, BoundingBox, PixelPoint};

/// Which pair of windowed quantities drives template updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMetric {
    /// Center-drift overlap and drift-discounted confidence.
    #[default]
    CenterDrift,
    /// Plain box IoU between consecutive outputs and raw tracker confidence.
    BoxIou,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    /// Side length of the center square, pixels.
    pub r_side: f64,
    pub t1: f64,
    pub t2: f64,
    pub m_window: usize,
    pub t_o: f64,
    /// Consecutive occluded frames before deletion; 0 disables occlusion handling.
    pub n_occl: u32,
    pub update_metric: UpdateMetric,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            r_side: 32.0,
            t1: 0.4,
            t2: 0.3,
            m_window: 3,
            t_o: 0.6,
            n_occl: 4,
            update_metric: UpdateMetric::CenterDrift,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.r_side > 0.0 && self.r_side.is_finite()) {
            return bad(format!("quality.r_side must be positive, got {}", self.r_side));
        }
        if !(0.0..=1.0).contains(&self.t1) || !(0.0..=1.0).contains(&self.t2) {
            return bad(format!("quality.t1/t2 must lie in [0,1], got {}/{}", self.t1, self.t2));
        }
        if self.m_window == 0 {
            return bad("quality.m_window must be at least 1".into());
        }
        if !(self.t_o > 0.0 && self.t_o <= 1.0) {
            return bad(format!("quality.t_o must lie in (0,1], got {}", self.t_o));
        }
        Ok(())
    }
}

/// Overlap ratio of two `r_side` squares centered on consecutive box centers.
pub fn iou_r(prev: PixelPoint, curr: PixelPoint, r_side: f64) -> Result<f64> {
    if !(r_side > 0.0 && r_side.is_finite()) {
        return Err(Error::InvalidConfig(format!("r_side must be positive, got {r_side}")));
    }
    let ox = (r_side - (curr.x - prev.x).abs()).max(0.0);
    let oy = (r_side - (curr.y - prev.y).abs()).max(0.0);
    let s = ox * oy;
    Ok(s / (2.0 * r_side * r_side - s))
}

/// Tracker confidence discounted by center stability.
pub fn reid_confidence(c_t: f64, iou_r: f64) -> Result<f64> {
    for (what, v) in [("tracking confidence", c_t), ("iou_r", iou_r)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain { what, value: v });
        }
    }
    Ok(c_t * iou_r)
}

/// Fraction of `subject`'s area covered by `other`. Not symmetric.
pub fn occlusion_coefficient(subject: &BoundingBox, other: &BoundingBox) -> f64 {
    (box_intersection_area(subject, other) / subject.area()).clamp(0.0, 1.0)
}

/// Sliding window over the most recent `(overlap, confidence)` evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityHistory {
    window: usize,
    entries: VecDeque<(f64, f64)>,
}

impl QualityHistory {
    pub fn new(window: usize) -> Self {
        Self { window: window.max(1), entries: VecDeque::with_capacity(window.max(1)) }
    }

    pub fn push(&mut self, overlap: f64, confidence: f64) {
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back((overlap, confidence));
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.entries.iter().copied()
    }

    /// Window means, averaged over however many entries exist.
    pub fn means(&self) -> Option<(f64, f64)> {
        if self.entries.is_empty() {
            return None;
        }
        let n = self.entries.len() as f64;
        let (a, b) = self.entries.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        Some((a / n, b / n))
    }
}

/// True when both windowed means fall below their thresholds.
pub fn should_update_template(history: &QualityHistory, cfg: &QualityConfig) -> Result<bool> {
    let (overlap, confidence) = history.means().ok_or(Error::EmptyHistory)?;
    Ok(overlap < cfg.t1 && confidence < cfg.t2)
}

/// Returns the ids of tracks counted as occluded in this frame.
///
/// A track is occluded when another track covers more than `t_o` of it. When
/// two tracks cover each other beyond `t_o`, only the one with the lower
/// `c_r` is counted; equal `c_r` marks the higher id.
pub fn resolve_occlusions<K: Ord + Copy>(
    tracks: &[(K, BoundingBox, f64)],
    cfg: &QualityConfig,
) -> BTreeSet<K> {
    let mut occluded = BTreeSet::new();
    for (i, (id_i, box_i, cr_i)) in tracks.iter().enumerate() {
        for (j, (id_j, box_j, cr_j)) in tracks.iter().enumerate() {
            if i == j || occlusion_coefficient(box_i, box_j) <= cfg.t_o {
                continue;
            }
            if occlusion_coefficient(box_j, box_i) > cfg.t_o {
                let i_loses = cr_i < cr_j || (cr_i == cr_j && id_i > id_j);
                if i_loses {
                    occluded.insert(*id_i);
                }
            } else {
                occluded.insert(*id_i);
            }
        }
    }
    occluded
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionStatus {
    Visible,
    Occluded,
    Deleted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OcclusionState {
    pub consecutive_occluded: u32,
    pub status: OcclusionStatus,
}

impl Default for OcclusionState {
    fn default() -> Self {
        Self { consecutive_occluded: 0, status: OcclusionStatus::Visible }
    }
}

/// Advances the occlusion lifecycle by one frame.
pub fn step_occlusion(
    state: OcclusionState,
    occluded_now: bool,
    cfg: &QualityConfig,
) -> Result<OcclusionState> {
    if state.status == OcclusionStatus::Deleted {
        return Err(Error::Lifecycle("cannot step a deleted track".into()));
    }
    if cfg.n_occl == 0 {
        return Ok(OcclusionState { status: OcclusionStatus::Visible, ..state });
    }
    if !occluded_now {
        return Ok(OcclusionState::default());
    }
    let consecutive_occluded = state.consecutive_occluded + 1;
    let status = if consecutive_occluded >= cfg.n_occl {
        OcclusionStatus::Deleted
    } else {
        OcclusionStatus::Occluded
    };
    Ok(OcclusionState { consecutive_occluded, status })
}
