//! Line-delimited JSON formats for datasets and results.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mct::{AssociationRecord, CandidateScore, Decision, ImageRegion};
use crate::sct::{FrameInput, FrameResult, TrackEvent, TrackOutput, TruthBox};
use crate::types::{BoundingBox, CameraId, Detection, Embedding, GlobalId, GtId, PixelPoint, WheelKeypoints};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointRecord {
    pub front: Option<PixelPoint>,
    pub rear: Option<PixelPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub bbox: BoundingBox,
    pub conf: f64,
    pub keypoints: Option<KeypointRecord>,
    pub embedding: Option<Embedding>,
    pub gt_id: Option<GtId>,
}

/// One camera frame of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub seq: String,
    pub camera: CameraId,
    pub frame: u32,
    pub detections: Vec<DetectionRecord>,
    /// Annotated vehicles, including fully occluded ones.
    #[serde(default)]
    pub truth: Vec<TruthBox>,
}

impl DatasetRecord {
    pub fn from_input(seq: &str, input: &FrameInput) -> Self {
        let detections = input
            .detections
            .iter()
            .map(|d| DetectionRecord {
                bbox: d.bbox,
                conf: d.conf,
                keypoints: d.keypoints.map(|k| KeypointRecord { front: k.front, rear: k.rear }),
                embedding: d.embedding.clone(),
                gt_id: d.gt_id,
            })
            .collect();
        Self { seq: seq.to_owned(), camera: input.camera, frame: input.frame, detections, truth: input.truth.clone() }
    }

    pub fn to_input(&self) -> Result<FrameInput> {
        let detections = self
            .detections
            .iter()
            .map(|r| {
                let mut d = Detection::new(self.camera, self.frame, r.bbox, r.conf)?;
                d.keypoints = r.keypoints.as_ref().and_then(|k| WheelKeypoints::new(k.front, k.rear));
                d.embedding = r.embedding.clone();
                d.gt_id = r.gt_id;
                Ok(d)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FrameInput { camera: self.camera, frame: self.frame, detections, truth: self.truth.clone() })
    }
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResultsRecord {
    Frame {
        seq: String,
        camera: CameraId,
        frame: u32,
        outputs: Vec<TrackOutput>,
        events: Vec<TrackEvent>,
    },
    Association {
        seq: String,
        camera: CameraId,
        frame: u32,
        bbox: BoundingBox,
        region: ImageRegion,
        cameras: Vec<CameraId>,
        candidates: Vec<CandidateScore>,
        decision: Decision,
        assigned: GlobalId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gt_id: Option<GtId>,
    },
}

impl ResultsRecord {
    pub fn frame(seq: &str, r: &FrameResult) -> Self {
        ResultsRecord::Frame {
            seq: seq.to_owned(),
            camera: r.camera,
            frame: r.frame,
            outputs: r.outputs.clone(),
            events: r.events.clone(),
        }
    }

    pub fn association(seq: &str, r: &AssociationRecord) -> Self {
        ResultsRecord::Association {
            seq: seq.to_owned(),
            camera: r.target.camera,
            frame: r.target.frame,
            bbox: r.target.bbox,
            region: r.region,
            cameras: r.cameras.clone(),
            candidates: r.outcome.candidates.clone(),
            decision: r.outcome.decision,
            assigned: r.assigned,
            gt_id: r.target.gt_id,
        }
    }

    pub fn seq(&self) -> &str {
        match self {
            ResultsRecord::Frame { seq, .. } | ResultsRecord::Association { seq, .. } => seq,
        }
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl_to(&mut w, records)?;
    w.flush()?;
    Ok(())
}

pub fn write_jsonl_to<T: Serialize, W: Write>(w: &mut W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads one JSON object per non-empty line; errors carry the line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    read_jsonl_from(reader, &path.display().to_string())
}

pub fn read_jsonl_from<T: DeserializeOwned, R: BufRead>(reader: R, name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| Error::Record {
            path: name.to_owned(),
            line: i + 1,
            source,
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Checks that dataset records are ordered by sequence, frame, then camera.
pub fn check_dataset_order(records: &[DatasetRecord]) -> Result<()> {
    for pair in records.windows(2) {
        let key = |r: &DatasetRecord| (r.frame, r.camera);
        let (a, b) = (&pair[0], &pair[1]);
        if a.seq == b.seq && key(a) >= key(b) {
            return Err(Error::SequenceMismatch(format!(
                "dataset record {} {} {} is out of order",
                b.seq, b.frame, b.camera
            )));
        }
    }
    Ok(())
}
