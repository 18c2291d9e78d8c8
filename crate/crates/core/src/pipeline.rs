//! Frame-tick engine wiring single-camera tracking to cross-camera
//! association, plus the simulate / track / evaluate drivers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_matching;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{DatasetRecord, ResultsRecord};
use crate::metrics::{count_idsw, identity_consistency, CameraReport, EvalFrame, EvalSequence, IcReport};
use crate::mct::{run_association_pass, AssociationContext, AssociationRecord, Decision, Gallery, NewTarget};
use crate::projection::{project_keypoints, CameraModel};
use crate::sct::{create_track, process_frame, FrameInput, FrameResult, TrackEvent, TrackOutput, TrackerBackend, TrackerState};
use crate::sim::{generate_world, render_frame, OracleTracker};
use crate::types::{box_iou, CameraId, Detection, IdAllocator};

/// Everything one frame tick produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub frames: [FrameResult; 3],
    pub associations: Vec<AssociationRecord>,
}

/// Single-camera trackers for the whole rig plus the shared identity gallery.
pub struct Engine<B: TrackerBackend> {
    cfg: RunConfig,
    rig: [CameraModel; 3],
    backend: B,
    tracks: [Vec<TrackerState>; 3],
    gallery: Gallery,
    ids: IdAllocator,
    embedding_dim: Option<usize>,
}

impl<B: TrackerBackend> Engine<B> {
    pub fn new(cfg: &RunConfig, backend: B) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            rig: cfg.rig(),
            backend,
            tracks: Default::default(),
            gallery: Gallery::new(cfg.mct.k_embeddings),
            ids: IdAllocator::default(),
            embedding_dim: None,
        })
    }

    pub fn gallery(&self) -> &Gallery {
        &self.gallery
    }

    pub fn tracks(&self, camera: CameraId) -> &[TrackerState] {
        &self.tracks[camera.index()]
    }

    fn check_dims(&mut self, inputs: &[FrameInput; 3]) -> Result<()> {
        for e in inputs.iter().flat_map(|i| &i.detections).filter_map(|d| d.embedding.as_ref()) {
            match self.embedding_dim {
                None => self.embedding_dim = Some(e.dim()),
                Some(expected) if expected != e.dim() => {
                    return Err(Error::DimensionMismatch { expected, found: e.dim() })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Processes one synchronized frame of all three cameras.
    ///
    /// Cameras are tracked serially (left, front, right), detections not
    /// explained by a track become new targets, and the association pass
    /// decides their identities before their trackers are started.
    pub fn step(&mut self, inputs: &[FrameInput; 3]) -> Result<Tick> {
        self.check_dims(inputs)?;
        let mut frames: Vec<FrameResult> = Vec::with_capacity(3);
        let mut targets: Vec<NewTarget> = Vec::new();
        let mut sources: Vec<&Detection> = Vec::new();

        for camera in CameraId::ALL {
            let input = &inputs[camera.index()];
            if input.camera != camera {
                return Err(Error::SequenceMismatch(format!(
                    "input for {camera} labelled {}",
                    input.camera
                )));
            }
            let tracks = &mut self.tracks[camera.index()];
            let result = process_frame(tracks, input, &self.cfg.quality, &mut self.backend)?;
            for ev in &result.events {
                if let TrackEvent::TrackDeleted(id) = ev {
                    self.gallery.remove(*id, camera);
                }
            }

            let cam = &self.rig[camera.index()];
            let threshold = self.cfg.pipeline.det_match_iou;
            let weights: Vec<Vec<f64>> = result
                .outputs
                .iter()
                .map(|o| {
                    input
                        .detections
                        .iter()
                        .map(|d| {
                            let iou = box_iou(&o.bbox, &d.bbox);
                            if iou >= threshold { iou } else { 0.0 }
                        })
                        .collect()
                })
                .collect();
            let mut explained = vec![false; input.detections.len()];
            for (o, d) in max_weight_matching(&weights) {
                explained[d] = true;
                let det = &input.detections[d];
                let kp = det.keypoints.map(|k| project_keypoints(&k, cam));
                self.gallery.update(result.outputs[o].id, camera, det.embedding.as_ref(), kp, input.frame, det.gt_id)?;
            }
            for (det, _) in input.detections.iter().zip(&explained).filter(|(_, e)| !**e) {
                targets.push(NewTarget {
                    camera,
                    frame: input.frame,
                    bbox: det.bbox,
                    conf: det.conf,
                    embedding: det.embedding.clone(),
                    keypoints: det.keypoints.map(|k| project_keypoints(&k, cam)),
                    gt_id: det.gt_id,
                });
                sources.push(det);
            }
            frames.push(result);
        }

        let ctx = AssociationContext { cfg: &self.cfg.mct, rig: &self.rig, disks: self.cfg.projection.disks() };
        let records = run_association_pass(targets, &mut self.gallery, &mut self.ids, &ctx)?;

        for rec in &records {
            let camera = rec.target.camera;
            let det = sources[rec.input];
            let input = &inputs[camera.index()];
            let result = &mut frames[camera.index()];
            let tracks = &mut self.tracks[camera.index()];
            if let Some(pos) = tracks.iter().position(|t| t.id == rec.assigned) {
                let old = tracks.remove(pos);
                self.backend.release(old.handle);
                result.outputs.retain(|o| o.id != rec.assigned);
                result.events.push(TrackEvent::TrackReplaced(rec.assigned));
            }
            let state = create_track(det, rec.assigned, input, &self.cfg.quality, &mut self.backend);
            result.events.push(TrackEvent::TrackCreated(rec.assigned));
            result.outputs.push(TrackOutput { id: rec.assigned, bbox: det.bbox, c_r: det.conf });
            tracks.push(state);
        }

        let frames: [FrameResult; 3] = frames.try_into().expect("three cameras");
        Ok(Tick { frames, associations: records })
    }
}

pub fn sequence_name(seed: u64) -> String {
    format!("sim-{seed}")
}

/// Renders the configured scenario into dataset records.
///
/// Only `(camera, frame)` pairs with at least one visible vehicle are kept.
pub fn simulate_records(cfg: &RunConfig) -> Result<Vec<DatasetRecord>> {
    cfg.validate()?;
    let world = generate_world(&cfg.sim, &cfg.rig())?;
    let seq = sequence_name(cfg.sim.seed);
    let mut out = Vec::new();
    for frame in 0..cfg.sim.duration_frames {
        for input in render_frame(&world, frame)? {
            if !input.truth.is_empty() {
                out.push(DatasetRecord::from_input(&seq, &input));
            }
        }
    }
    Ok(out)
}

/// Groups records by sequence, in first-appearance order.
fn by_sequence(records: &[DatasetRecord]) -> Vec<(String, Vec<&DatasetRecord>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&DatasetRecord>> = BTreeMap::new();
    for r in records {
        if !groups.contains_key(r.seq.as_str()) {
            order.push(r.seq.clone());
        }
        groups.entry(r.seq.as_str()).or_default().push(r);
    }
    order
        .into_iter()
        .map(|s| {
            let g = groups.remove(s.as_str()).unwrap_or_default();
            (s, g)
        })
        .collect()
}

/// Runs the full pipeline over a dataset with the simulator-backed tracker.
///
/// Frames between the first and last record of a sequence are all
/// processed; cameras without a record in a frame get an empty input.
pub fn track_records(records: &[DatasetRecord], cfg: &RunConfig) -> Result<Vec<ResultsRecord>> {
    cfg.validate()?;
    crate::io::check_dataset_order(records)?;
    let mut out = Vec::new();
    for (seq, recs) in by_sequence(records) {
        let backend = OracleTracker::new(cfg.sim.noise.tracker.clone(), cfg.rig(), cfg.sim.seed);
        let mut engine = Engine::new(cfg, backend)?;
        let mut frames: BTreeMap<u32, [FrameInput; 3]> = BTreeMap::new();
        for r in recs {
            let slot = frames.entry(r.frame).or_insert_with(|| CameraId::ALL.map(|c| FrameInput::empty(c, r.frame)));
            slot[r.camera.index()] = r.to_input()?;
        }
        let (Some(&first), Some(&last)) = (frames.keys().next(), frames.keys().next_back()) else {
            continue;
        };
        for f in first..=last {
            let inputs = frames.remove(&f).unwrap_or_else(|| CameraId::ALL.map(|c| FrameInput::empty(c, f)));
            let tick = engine.step(&inputs)?;
            out.extend(tick.frames.iter().map(|r| ResultsRecord::frame(&seq, r)));
            out.extend(tick.associations.iter().map(|a| ResultsRecord::association(&seq, a)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub total_idsw: u64,
    pub total_id: u64,
    pub ic: Option<f64>,
    pub per_camera: BTreeMap<CameraId, CameraReport>,
    pub sequences: BTreeMap<String, IcReport>,
}

/// Scores results against the dataset's annotations.
///
/// Fully occluded vehicles are not counted as ground truth. Records without
/// annotations fall back to the detections' ground-truth ids.
pub fn evaluate_records(dataset: &[DatasetRecord], results: &[ResultsRecord], cfg: &RunConfig) -> Result<EvaluationReport> {
    let data_seqs: BTreeSet<&str> = dataset.iter().map(|r| r.seq.as_str()).collect();
    let result_seqs: BTreeSet<&str> = results.iter().map(|r| r.seq()).collect();
    if data_seqs != result_seqs {
        return Err(Error::SequenceMismatch(format!(
            "dataset sequences {data_seqs:?} differ from results sequences {result_seqs:?}"
        )));
    }
    let mut hyps: BTreeMap<(&str, CameraId, u32), &[TrackOutput]> = BTreeMap::new();
    for r in results {
        if let ResultsRecord::Frame { seq, camera, frame, outputs, .. } = r {
            hyps.insert((seq.as_str(), *camera, *frame), outputs);
        }
    }

    let mut report = EvaluationReport::default();
    for (seq, recs) in by_sequence(dataset) {
        let mut eval = EvalSequence::new();
        for r in recs {
            let gt = if r.truth.is_empty() {
                r.detections.iter().filter_map(|d| d.gt_id.map(|g| (g, d.bbox))).collect()
            } else {
                r.truth.iter().filter(|t| !t.occluded).map(|t| (t.gt_id, t.bbox)).collect()
            };
            let hyp = hyps
                .get(&(seq.as_str(), r.camera, r.frame))
                .map(|o| o.iter().map(|o| (o.id, o.bbox)).collect())
                .unwrap_or_default();
            eval.push(r.camera, EvalFrame { frame: r.frame, gt, hyp })?;
        }
        let ic = count_idsw(&eval, &cfg.eval);
        report.total_idsw += ic.total_idsw;
        report.total_id += ic.total_id;
        for (cam, c) in &ic.per_camera {
            let agg = report.per_camera.entry(*cam).or_default();
            agg.idsw += c.idsw;
            agg.id += c.id;
        }
        report.sequences.insert(seq, ic);
    }
    for c in report.per_camera.values_mut() {
        c.ic = identity_consistency(c.idsw, c.id);
    }
    report.ic = identity_consistency(report.total_idsw, report.total_id);
    Ok(report)
}

/// Event and decision counts of a results stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub tracks_created: u64,
    pub template_updates: u64,
    /// Deletions of tracks that were still producing boxes but stayed covered.
    pub deletions: u64,
    /// Deletions of tracks whose backend had lost the target, typically
    /// because the vehicle left the camera's view.
    pub exits: u64,
    pub replacements: u64,
    pub inherits: u64,
    pub new_ids: u64,
    /// Inherits whose candidate came from another camera.
    pub cross_inherits: u64,
    /// Cross-camera inherits whose candidate was last seen on the same vehicle.
    pub cross_correct: u64,
}

impl RunStats {
    pub fn from_results(results: &[ResultsRecord]) -> Self {
        let mut s = RunStats::default();
        for r in results {
            match r {
                ResultsRecord::Frame { events, .. } => {
                    for e in events {
                        match e {
                            TrackEvent::TrackCreated(_) => s.tracks_created += 1,
                            TrackEvent::TemplateUpdated(_) => s.template_updates += 1,
                            TrackEvent::TrackDeleted(id) => {
                                if events.contains(&TrackEvent::TrackLost(*id)) {
                                    s.exits += 1;
                                } else {
                                    s.deletions += 1;
                                }
                            }
                            TrackEvent::TrackReplaced(_) => s.replacements += 1,
                            TrackEvent::TrackOccluded(_) | TrackEvent::TrackLost(_) => {}
                        }
                    }
                }
                ResultsRecord::Association { camera, candidates, decision, gt_id, .. } => match decision {
                    Decision::NewId => s.new_ids += 1,
                    Decision::Inherit { id, .. } => {
                        s.inherits += 1;
                        let Some(c) = candidates.iter().find(|c| c.id == *id && c.s.is_some()) else {
                            continue;
                        };
                        if c.camera != *camera {
                            s.cross_inherits += 1;
                            if c.gt_id.is_some() && c.gt_id == *gt_id {
                                s.cross_correct += 1;
                            }
                        }
                    }
                },
            }
        }
        s
    }

    /// Share of cross-camera inherits that picked the right vehicle.
    pub fn cross_accuracy(&self) -> Option<f64> {
        (self.cross_inherits > 0).then(|| self.cross_correct as f64 / self.cross_inherits as f64)
    }
}

/// Simulate, track and evaluate one scenario in process.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: EvaluationReport,
    pub stats: RunStats,
}

pub fn run_scenario(cfg: &RunConfig) -> Result<RunOutcome> {
    let dataset = simulate_records(cfg)?;
    let results = track_records(&dataset, cfg)?;
    let report = evaluate_records(&dataset, &results, cfg)?;
    Ok(RunOutcome { report, stats: RunStats::from_results(&results) })
}
