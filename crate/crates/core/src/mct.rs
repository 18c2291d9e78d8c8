//! Cross-camera identity association.
//!
//! Each new target is scored against gallery identities seen in the cameras
//! its image region points to. The appearance score comes from the closest
//! stored embedding; the spatial score from ground-projected wheel keypoints,
//! which also act as a hard gate through distance-dependent uncertainty disks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{
    disks_overlap, keypoint_distance, uncertainty_radius, CameraModel, GroundPoint,
    ProjectedKeypoints, UncertaintyDisk,
};
use crate::types::{BoundingBox, CameraId, Embedding, GlobalId, GtId, IdAllocator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

/// How ground-plane keypoints take part in association.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialMode {
    /// Appearance only.
    Off,
    /// Uncertainty-disk gate, appearance score.
    Gate,
    /// Gate, then fuse appearance and keypoint scores.
    #[default]
    GateAndScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MctConfig {
    /// Embeddings kept per (id, camera).
    pub k_embeddings: usize,
    pub tau_s: f64,
    pub edge_fraction: f64,
    pub weights: FusionWeights,
    pub epsilon: f64,
    pub spatial: SpatialMode,
    /// Gallery keypoints older than this many frames are ignored.
    pub keypoint_max_age: u32,
}

impl Default for MctConfig {
    fn default() -> Self {
        Self {
            k_embeddings: 5,
            tau_s: 0.35,
            edge_fraction: 0.25,
            weights: FusionWeights::default(),
            epsilon: 1e-6,
            spatial: SpatialMode::GateAndScore,
            keypoint_max_age: 10,
        }
    }
}

impl MctConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k_embeddings == 0 {
            return bad("mct.k_embeddings must be at least 1".into());
        }
        if !(self.edge_fraction > 0.0 && self.edge_fraction < 0.5) {
            return bad(format!("mct.edge_fraction must lie in (0, 0.5), got {}", self.edge_fraction));
        }
        if !(self.epsilon > 0.0) {
            return bad("mct.epsilon must be positive".into());
        }
        let w = self.weights;
        if w.alpha < 0.0 || w.beta < 0.0 || !(w.alpha + w.beta > 0.0) {
            return bad(format!("mct.weights need alpha, beta >= 0 and alpha + beta > 0, got {w:?}"));
        }
        Ok(())
    }
}

/// Parameters of the distance-dependent uncertainty disks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskParams {
    pub r0: f64,
    pub k: f64,
}

/// Minimum Euclidean distance from `query` to any stored embedding.
pub fn feature_distance(query: &Embedding, entries: &[Embedding]) -> Result<f64> {
    let mut best: Option<f64> = None;
    for e in entries {
        let d = query.euclidean(e)?;
        best = Some(best.map_or(d, |b| b.min(d)));
    }
    best.ok_or(Error::NoCandidate)
}

fn distance_score(d: f64, epsilon: f64, what: &'static str) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::Domain { what, value: d });
    }
    Ok((1.0 / d.max(epsilon)).ln_1p())
}

/// Appearance score from the feature distance.
pub fn score_s1(d_f: f64, epsilon: f64) -> Result<f64> {
    distance_score(d_f, epsilon, "feature distance")
}

/// Spatial score from the summed keypoint distance.
pub fn score_s2(d_k: f64, epsilon: f64) -> Result<f64> {
    distance_score(d_k, epsilon, "keypoint distance")
}

pub fn fuse(s1: f64, s2: f64, w: FusionWeights) -> Result<f64> {
    let total = w.alpha + w.beta;
    if !(total > 0.0) || w.alpha < 0.0 || w.beta < 0.0 {
        return Err(Error::InvalidConfig(format!("fusion weights {w:?}")));
    }
    Ok((w.alpha * s1 + w.beta * s2) / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRegion {
    LeftEdge,
    Interior,
    RightEdge,
}

pub fn region_of(bbox: &BoundingBox, cam: &CameraModel, edge_fraction: f64) -> ImageRegion {
    let w = cam.image_width;
    if bbox.cx < edge_fraction * w {
        ImageRegion::LeftEdge
    } else if bbox.cx > (1.0 - edge_fraction) * w {
        ImageRegion::RightEdge
    } else {
        ImageRegion::Interior
    }
}

/// Cameras whose gallery a new target is compared against.
///
/// The outer edges of the side cameras only see their own past; the rest of
/// a side camera looks at the front camera, and the front camera's edges
/// look at the side camera on that side.
pub fn candidate_cameras(camera: CameraId, region: ImageRegion) -> Vec<CameraId> {
    use CameraId::*;
    use ImageRegion::*;
    match (camera, region) {
        (Left, LeftEdge) => vec![Left],
        (Right, RightEdge) => vec![Right],
        (Left, _) | (Right, _) => vec![Front],
        (Front, LeftEdge) => vec![Left],
        (Front, RightEdge) => vec![Right],
        (Front, Interior) => vec![],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub embeddings: VecDeque<Embedding>,
    pub keypoints: Option<ProjectedKeypoints>,
    pub keypoint_frame: u32,
    /// Ground truth of the most recent observation, when known.
    pub last_gt: Option<GtId>,
}

/// Per-identity, per-camera store of recent appearance and position.
#[derive(Debug, Clone, Default)]
pub struct Gallery {
    capacity: usize,
    entries: BTreeMap<GlobalId, BTreeMap<CameraId, GalleryEntry>>,
    retired: BTreeSet<GlobalId>,
}

impl Gallery {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), ..Default::default() }
    }

    pub fn entry(&self, id: GlobalId, camera: CameraId) -> Option<&GalleryEntry> {
        self.entries.get(&id)?.get(&camera)
    }

    pub fn is_live(&self, id: GlobalId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn is_retired(&self, id: GlobalId) -> bool {
        self.retired.contains(&id)
    }

    /// All `(id, camera, entry)` triples in id order.
    pub fn iter(&self) -> impl Iterator<Item = (GlobalId, CameraId, &GalleryEntry)> {
        self.entries
            .iter()
            .flat_map(|(id, cams)| cams.iter().map(move |(c, e)| (*id, *c, e)))
    }

    pub fn update(
        &mut self,
        id: GlobalId,
        camera: CameraId,
        embedding: Option<&Embedding>,
        keypoints: Option<ProjectedKeypoints>,
        frame: u32,
        gt: Option<GtId>,
    ) -> Result<()> {
        if self.retired.contains(&id) {
            return Err(Error::RetiredId(id));
        }
        let capacity = self.capacity;
        let entry = self.entries.entry(id).or_default().entry(camera).or_insert_with(|| {
            GalleryEntry {
                embeddings: VecDeque::with_capacity(capacity),
                keypoints: None,
                keypoint_frame: frame,
                last_gt: None,
            }
        });
        if let Some(e) = embedding {
            if entry.embeddings.len() == capacity {
                entry.embeddings.pop_front();
            }
            entry.embeddings.push_back(e.clone());
        }
        if let Some(kp) = keypoints.filter(|k| !k.is_empty()) {
            entry.keypoints = Some(kp);
            entry.keypoint_frame = frame;
        }
        if gt.is_some() {
            entry.last_gt = gt;
        }
        Ok(())
    }

    /// Drops the `(id, camera)` entry; an id with no entries left is retired.
    pub fn remove(&mut self, id: GlobalId, camera: CameraId) {
        if let Some(cams) = self.entries.get_mut(&id) {
            cams.remove(&camera);
            if cams.is_empty() {
                self.entries.remove(&id);
                self.retired.insert(id);
            }
        }
    }
}

/// A detection that no existing track accounted for.
#[derive(Debug, Clone, PartialEq)]
pub struct NewTarget {
    pub camera: CameraId,
    pub frame: u32,
    pub bbox: BoundingBox,
    pub conf: f64,
    pub embedding: Option<Embedding>,
    pub keypoints: Option<ProjectedKeypoints>,
    pub gt_id: Option<GtId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub id: GlobalId,
    pub camera: CameraId,
    pub s1: Option<f64>,
    pub s2: Option<f64>,
    /// Fused score; absent when the candidate was gated out or unscorable.
    pub s: Option<f64>,
    pub gated_out: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_id: Option<GtId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Inherit { id: GlobalId, s: f64 },
    NewId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationOutcome {
    pub decision: Decision,
    pub candidates: Vec<CandidateScore>,
}

/// Everything `associate` needs besides the target and the gallery.
#[derive(Debug, Clone, Copy)]
pub struct AssociationContext<'a> {
    pub cfg: &'a MctConfig,
    pub rig: &'a [CameraModel; 3],
    pub disks: DiskParams,
}

fn disk(p: GroundPoint, cam: &CameraModel, d: DiskParams) -> UncertaintyDisk {
    UncertaintyDisk { center: p, radius: uncertainty_radius(&p, cam, d.r0, d.k) }
}

fn score_candidate(
    target: &NewTarget,
    id: GlobalId,
    camera: CameraId,
    entry: &GalleryEntry,
    ctx: &AssociationContext<'_>,
) -> Result<CandidateScore> {
    let cfg = ctx.cfg;
    let s1 = match (&target.embedding, entry.embeddings.is_empty()) {
        (Some(q), false) => {
            let stored: Vec<Embedding> = entry.embeddings.iter().cloned().collect();
            Some(score_s1(feature_distance(q, &stored)?, cfg.epsilon)?)
        }
        _ => None,
    };
    let mut out = CandidateScore {
        id,
        camera,
        s1,
        s2: None,
        s: None,
        gated_out: false,
        gt_id: entry.last_gt,
    };

    let fresh = entry
        .keypoints
        .filter(|_| target.frame.saturating_sub(entry.keypoint_frame) <= cfg.keypoint_max_age);
    if cfg.spatial != SpatialMode::Off {
        if let (Some(q), Some(g)) = (target.keypoints, fresh) {
            let q_cam = &ctx.rig[target.camera.index()];
            let g_cam = &ctx.rig[camera.index()];
            let shared = [(q.front, g.front), (q.rear, g.rear)];
            for (a, b) in shared.into_iter().filter_map(|(a, b)| a.zip(b)) {
                if !disks_overlap(&disk(a, q_cam, ctx.disks), &disk(b, g_cam, ctx.disks)) {
                    out.gated_out = true;
                    return Ok(out);
                }
            }
            if cfg.spatial == SpatialMode::GateAndScore {
                if let Ok(d_k) = keypoint_distance(&q, &g) {
                    out.s2 = Some(score_s2(d_k, cfg.epsilon)?);
                }
            }
        }
    }

    let w = cfg.weights;
    let alpha = if out.s1.is_some() { w.alpha } else { 0.0 };
    let beta = if out.s2.is_some() { w.beta } else { 0.0 };
    if alpha + beta > 0.0 {
        let s = fuse(out.s1.unwrap_or(0.0), out.s2.unwrap_or(0.0), FusionWeights { alpha, beta })?;
        out.s = Some(s);
    }
    Ok(out)
}

/// Scores every live gallery entry in `cameras` and picks the best one.
///
/// Ties on the fused score go to the smaller id. `exclude` lists ids that
/// may not be inherited (already claimed in the target's camera).
pub fn associate(
    target: &NewTarget,
    gallery: &Gallery,
    cameras: &[CameraId],
    ctx: &AssociationContext<'_>,
    exclude: &BTreeSet<GlobalId>,
) -> Result<AssociationOutcome> {
    let mut candidates = Vec::new();
    for (id, camera, entry) in gallery.iter() {
        if cameras.contains(&camera) && !exclude.contains(&id) {
            candidates.push(score_candidate(target, id, camera, entry, ctx)?);
        }
    }
    let mut best: Option<(GlobalId, f64)> = None;
    for c in &candidates {
        if let Some(s) = c.s {
            let better = match best {
                None => true,
                Some((bid, bs)) => s > bs || (s == bs && c.id < bid),
            };
            if better {
                best = Some((c.id, s));
            }
        }
    }
    let decision = match best {
        Some((id, s)) if s >= ctx.cfg.tau_s => Decision::Inherit { id, s },
        _ => Decision::NewId,
    };
    Ok(AssociationOutcome { decision, candidates })
}

/// One resolved new target from an association pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationRecord {
    /// Position of the target in the list handed to the pass.
    pub input: usize,
    pub target: NewTarget,
    pub region: ImageRegion,
    pub cameras: Vec<CameraId>,
    pub outcome: AssociationOutcome,
    /// Id the target was finally given (inherited or freshly allocated).
    pub assigned: GlobalId,
}

fn pass_order(camera: CameraId, cameras: &[CameraId]) -> u8 {
    // Left <-> front associations are resolved before front <-> right.
    let touches_left = camera == CameraId::Left || cameras.contains(&CameraId::Left);
    if touches_left {
        0
    } else {
        1
    }
}

/// Resolves all new targets of one frame tick, updating the gallery as it goes.
pub fn run_association_pass(
    targets: Vec<NewTarget>,
    gallery: &mut Gallery,
    ids: &mut IdAllocator,
    ctx: &AssociationContext<'_>,
) -> Result<Vec<AssociationRecord>> {
    let mut queue: Vec<(u8, usize, usize, NewTarget, ImageRegion, Vec<CameraId>)> = targets
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let region = region_of(&t.bbox, &ctx.rig[t.camera.index()], ctx.cfg.edge_fraction);
            let cams = candidate_cameras(t.camera, region);
            (pass_order(t.camera, &cams), t.camera.index(), i, t, region, cams)
        })
        .collect();
    queue.sort_by_key(|q| (q.0, q.1, q.2));

    let mut claimed: BTreeMap<CameraId, BTreeSet<GlobalId>> = BTreeMap::new();
    let mut records = Vec::with_capacity(queue.len());
    for (_, _, input, target, region, cameras) in queue {
        let exclude = claimed.entry(target.camera).or_default();
        let outcome = associate(&target, gallery, &cameras, ctx, exclude)?;
        let assigned = match outcome.decision {
            Decision::Inherit { id, .. } => id,
            Decision::NewId => ids.allocate(),
        };
        exclude.insert(assigned);
        gallery.update(
            assigned,
            target.camera,
            target.embedding.as_ref(),
            target.keypoints,
            target.frame,
            target.gt_id,
        )?;
        records.push(AssociationRecord { input, target, region, cameras, outcome, assigned });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_rig;

    fn emb(v: &[f64]) -> Embedding {
        let mut full = v.to_vec();
        full.resize(8, 0.0);
        Embedding::new(full).unwrap()
    }

    fn target(camera: CameraId, e: Embedding, kp: Option<ProjectedKeypoints>) -> NewTarget {
        NewTarget {
            camera,
            frame: 10,
            bbox: BoundingBox::new(100.0, 400.0, 80.0, 60.0).unwrap(),
            conf: 0.9,
            embedding: Some(e),
            keypoints: kp,
            gt_id: None,
        }
    }

    fn kp(fx: f64, fy: f64, rx: f64, ry: f64) -> ProjectedKeypoints {
        ProjectedKeypoints {
            front: Some(GroundPoint::new(fx, fy)),
            rear: Some(GroundPoint::new(rx, ry)),
        }
    }

    #[test]
    fn feature_distance_examples() {
        let origin = emb(&[]);
        assert_eq!(feature_distance(&origin, std::slice::from_ref(&origin)).unwrap(), 0.0);
        assert_eq!(feature_distance(&origin, &[origin.clone(), emb(&[3.0, 4.0])]).unwrap(), 0.0);
        assert_eq!(feature_distance(&origin, &[emb(&[3.0, 4.0])]).unwrap(), 5.0);
        assert!(matches!(feature_distance(&origin, &[]), Err(Error::NoCandidate)));
        let short = Embedding::new(vec![1.0]).unwrap();
        assert!(feature_distance(&origin, &[short]).is_err());
    }

    #[test]
    fn score_examples() {
        let eps = 1e-6;
        assert!((score_s1(1.0, eps).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(score_s1(1e12, eps).unwrap() < 1e-11);
        assert!((score_s1(0.0, eps).unwrap() - (1e6f64 + 1.0).ln()).abs() < 1e-9);
        assert!((score_s2(0.8, eps).unwrap() - 2.25f64.ln()).abs() < 1e-12);
        assert!(score_s2(0.5, eps).unwrap() > score_s2(0.8, eps).unwrap());
        assert!(score_s1(-0.1, eps).is_err());
        assert!(score_s2(f64::NAN, eps).is_err());
    }

    #[test]
    fn fuse_examples() {
        let one = FusionWeights::default();
        assert!((fuse(0.7, 0.7, one).unwrap() - 0.7).abs() < 1e-15);
        assert!((fuse(0.6, 0.8, one).unwrap() - 0.7).abs() < 1e-15);
        let feature_only = FusionWeights { alpha: 1.0, beta: 0.0 };
        assert_eq!(fuse(0.6, 0.8, feature_only).unwrap(), 0.6);
        assert!(fuse(0.6, 0.8, FusionWeights { alpha: 0.0, beta: 0.0 }).is_err());
    }

    #[test]
    fn region_examples() {
        let rig = default_rig();
        let cam = &rig[0];
        let w = cam.image_width;
        let at = |x: f64| BoundingBox::new(x, 300.0, 10.0, 10.0).unwrap();
        assert_eq!(region_of(&at(0.1 * w), cam, 0.25), ImageRegion::LeftEdge);
        assert_eq!(region_of(&at(0.5 * w), cam, 0.25), ImageRegion::Interior);
        assert_eq!(region_of(&at(0.25 * w), cam, 0.25), ImageRegion::Interior);
        assert_eq!(region_of(&at(0.9 * w), cam, 0.25), ImageRegion::RightEdge);
    }

    #[test]
    fn candidate_camera_rules() {
        use CameraId::*;
        use ImageRegion::*;
        assert_eq!(candidate_cameras(Left, LeftEdge), vec![Left]);
        assert_eq!(candidate_cameras(Left, Interior), vec![Front]);
        assert_eq!(candidate_cameras(Left, RightEdge), vec![Front]);
        assert_eq!(candidate_cameras(Right, Interior), vec![Front]);
        assert_eq!(candidate_cameras(Right, LeftEdge), vec![Front]);
        assert_eq!(candidate_cameras(Right, RightEdge), vec![Right]);
        assert_eq!(candidate_cameras(Front, RightEdge), vec![Right]);
        assert_eq!(candidate_cameras(Front, LeftEdge), vec![Left]);
        assert!(candidate_cameras(Front, Interior).is_empty());
    }

    #[test]
    fn gallery_ring_and_keying() {
        let mut g = Gallery::new(5);
        let id = GlobalId(1);
        for i in 0..6 {
            g.update(id, CameraId::Left, Some(&emb(&[i as f64])), None, i, None).unwrap();
        }
        let e = g.entry(id, CameraId::Left).unwrap();
        assert_eq!(e.embeddings.len(), 5);
        assert_eq!(e.embeddings[0], emb(&[1.0]));

        g.update(id, CameraId::Front, Some(&emb(&[9.0])), None, 6, None).unwrap();
        assert_eq!(g.entry(id, CameraId::Front).unwrap().embeddings.len(), 1);
        assert_eq!(g.entry(id, CameraId::Left).unwrap().embeddings.len(), 5);

        g.remove(id, CameraId::Left);
        assert!(g.is_live(id));
        g.remove(id, CameraId::Front);
        assert!(!g.is_live(id) && g.is_retired(id));
        assert!(matches!(
            g.update(id, CameraId::Left, None, None, 7, None),
            Err(Error::RetiredId(_))
        ));
    }

    fn ctx<'a>(cfg: &'a MctConfig, rig: &'a [CameraModel; 3]) -> AssociationContext<'a> {
        AssociationContext { cfg, rig, disks: DiskParams { r0: 0.2, k: 0.05 } }
    }

    #[test]
    fn empty_gallery_gives_new_id() {
        let cfg = MctConfig::default();
        let rig = default_rig();
        let out = associate(
            &target(CameraId::Left, emb(&[1.0]), None),
            &Gallery::new(5),
            &[CameraId::Front],
            &ctx(&cfg, &rig),
            &BTreeSet::new(),
        )
        .unwrap();
        assert_eq!(out.decision, Decision::NewId);
        assert!(out.candidates.is_empty());
    }

    #[test]
    fn perfect_match_hits_clamped_maximum() {
        let cfg = MctConfig::default();
        let rig = default_rig();
        let e = emb(&[0.5, 0.5]);
        let k = kp(6.0, 3.5, 3.5, 3.5);
        let mut g = Gallery::new(5);
        g.update(GlobalId(4), CameraId::Front, Some(&e), Some(k), 10, None).unwrap();
        let out = associate(
            &target(CameraId::Left, e, Some(k)),
            &g,
            &[CameraId::Front],
            &ctx(&cfg, &rig),
            &BTreeSet::new(),
        )
        .unwrap();
        let max = (1e6f64 + 1.0).ln();
        match out.decision {
            Decision::Inherit { id, s } => {
                assert_eq!(id, GlobalId(4));
                assert!((s - max).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spatial_gate_separates_lookalikes() {
        let cfg = MctConfig::default();
        let rig = default_rig();
        let e = emb(&[1.0, 1.0]);
        let mut g = Gallery::new(5);
        // Same appearance; id 2 sits 0.1 m away per wheel, id 1 an adjacent lane away.
        g.update(GlobalId(1), CameraId::Front, Some(&e), Some(kp(6.0, 0.0, 3.5, 0.0)), 10, None).unwrap();
        g.update(GlobalId(2), CameraId::Front, Some(&e), Some(kp(6.1, 3.5, 3.6, 3.5)), 10, None).unwrap();
        let q = target(CameraId::Left, e, Some(kp(6.0, 3.5, 3.5, 3.5)));
        let out = associate(&q, &g, &[CameraId::Front], &ctx(&cfg, &rig), &BTreeSet::new()).unwrap();
        assert!(out.candidates.iter().any(|c| c.id == GlobalId(1) && c.gated_out));
        match out.decision {
            Decision::Inherit { id, .. } => assert_eq!(id, GlobalId(2)),
            other => panic!("{other:?}"),
        }
        let s2 = out.candidates.iter().find(|c| c.id == GlobalId(2)).unwrap().s2.unwrap();
        assert!((s2 - (1.0f64 / 0.2).ln_1p()).abs() < 1e-9);

        // Without the gate the tie goes to the smaller id.
        let off = MctConfig { spatial: SpatialMode::Off, ..cfg };
        let out = associate(&q, &g, &[CameraId::Front], &ctx(&off, &rig), &BTreeSet::new()).unwrap();
        assert!(matches!(out.decision, Decision::Inherit { id: GlobalId(1), .. }));
    }

    #[test]
    fn missing_keypoints_fall_back_to_appearance() {
        let cfg = MctConfig::default();
        let rig = default_rig();
        let e = emb(&[1.0]);
        let mut g = Gallery::new(5);
        g.update(GlobalId(3), CameraId::Front, Some(&e), None, 10, None).unwrap();
        let q = target(CameraId::Left, emb(&[1.5]), Some(kp(6.0, 3.5, 3.5, 3.5)));
        let out = associate(&q, &g, &[CameraId::Front], &ctx(&cfg, &rig), &BTreeSet::new()).unwrap();
        let c = &out.candidates[0];
        assert_eq!(c.s2, None);
        assert!((c.s.unwrap() - score_s1(0.5, 1e-6).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn below_threshold_is_new_id() {
        let cfg = MctConfig::default();
        let rig = default_rig();
        let mut g = Gallery::new(5);
        g.update(GlobalId(3), CameraId::Front, Some(&emb(&[0.0])), None, 10, None).unwrap();
        let q = target(CameraId::Left, emb(&[10.0]), None);
        let out = associate(&q, &g, &[CameraId::Front], &ctx(&cfg, &rig), &BTreeSet::new()).unwrap();
        assert_eq!(out.decision, Decision::NewId);
    }

    #[test]
    fn pass_resolves_left_before_right_and_feeds_gallery() {
        let cfg = MctConfig::default();
        let rig = default_rig();
        let mut g = Gallery::new(5);
        let mut ids = IdAllocator::default();
        let mk = |camera, x: f64, e: Embedding| NewTarget {
            camera,
            frame: 0,
            bbox: BoundingBox::new(x, 400.0, 50.0, 50.0).unwrap(),
            conf: 1.0,
            embedding: Some(e),
            keypoints: None,
            gt_id: None,
        };
        let targets = vec![
            mk(CameraId::Right, 640.0, emb(&[5.0])),
            mk(CameraId::Left, 640.0, emb(&[0.0])),
            mk(CameraId::Front, 640.0, emb(&[9.0])),
        ];
        let recs = run_association_pass(targets, &mut g, &mut ids, &ctx(&cfg, &rig)).unwrap();
        let order: Vec<CameraId> = recs.iter().map(|r| r.target.camera).collect();
        assert_eq!(order, vec![CameraId::Left, CameraId::Front, CameraId::Right]);
        assert_eq!(recs[0].assigned, GlobalId(1));
        // The front target (interior) never looks anywhere and gets a fresh id.
        assert_eq!(recs[1].assigned, GlobalId(2));
        // The right target sees the front target that was just added.
        assert_eq!(recs[2].cameras, vec![CameraId::Front]);
        assert_eq!(recs[2].outcome.candidates.len(), 1);

        let none = run_association_pass(Vec::new(), &mut g, &mut ids, &ctx(&cfg, &rig)).unwrap();
        assert!(none.is_empty());
    }
}
