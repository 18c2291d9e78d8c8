//! C ABI over the surround-reid engine.
//!
//! Every function returns an [`SrStatus`]. On failure a message is kept per
//! thread and can be read with [`sr_last_error_message`]. Strings handed out
//! by the library are NUL-terminated UTF-8 and must be released with
//! [`sr_string_free`]. Datasets and results cross the boundary in the same
//! line-delimited JSON formats the command-line tool reads and writes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use surround_reid::io::{read_jsonl_from, write_jsonl_to, DatasetRecord, ResultsRecord};
use surround_reid::mct::{fuse, score_s1, FusionWeights};
use surround_reid::pipeline::{evaluate_records, simulate_records, track_records, Engine};
use surround_reid::quality::{iou_r, occlusion_coefficient, reid_confidence};
use surround_reid::sct::FrameInput;
use surround_reid::sim::OracleTracker;
use surround_reid::types::{BoundingBox, CameraId, PixelPoint};
use surround_reid::{Error, RunConfig};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidInput = 4,
    DimensionMismatch = 5,
    SequenceMismatch = 6,
    Internal = 7,
    Panic = 8,
}

/// Axis-aligned box given by center and size, in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Streaming engine handle. Create with [`sr_engine_new`], release with
/// [`sr_engine_free`].
pub struct SrEngine {
    engine: Engine<OracleTracker>,
    seq: Option<String>,
    last_frame: Option<u32>,
    pending: Vec<ResultsRecord>,
}

struct Failure(SrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::InvalidConfig(_) => SrStatus::InvalidConfig,
            Error::DimensionMismatch { .. } => SrStatus::DimensionMismatch,
            Error::SequenceMismatch(_) => SrStatus::SequenceMismatch,
            Error::InvalidBox { .. }
            | Error::InvalidEmbedding
            | Error::Domain { .. }
            | Error::NoGroundIntersection { .. }
            | Error::MissingKeypointCategory
            | Error::NoCandidate
            | Error::Record { .. }
            | Error::Json(_) => SrStatus::InvalidInput,
            _ => SrStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(SrStatus::InvalidInput, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SrStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_owned());
            set_error(&format!("internal panic: {msg}"));
            SrStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SrStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` is null or points to a NUL-terminated string that outlives `'a`.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(SrStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` is null or points to a NUL-terminated string.
unsafe fn config(p: *const c_char) -> Result<RunConfig, Failure> {
    let cfg = if p.is_null() { RunConfig::default() } else { RunConfig::from_toml_str(text(p, "config")?)? };
    cfg.validate()?;
    Ok(cfg)
}

/// # Safety
/// `out` is null or valid for a write.
unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

/// # Safety
/// `out` is null or valid for a write.
unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(SrStatus::Internal, "output contains NUL".into()))?;
    put(out, c.into_raw())
}

fn jsonl<T: serde::Serialize>(records: &[T]) -> Result<String, Failure> {
    let mut buf = Vec::new();
    write_jsonl_to(&mut buf, records)?;
    String::from_utf8(buf).map_err(|e| Failure(SrStatus::Internal, e.to_string()))
}

fn to_box(b: &SrBox) -> Result<BoundingBox, Failure> {
    Ok(BoundingBox::new(b.cx, b.cy, b.w, b.h)?)
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Overlap of two `r_side` squares centered on consecutive box centers.
///
/// # Safety
/// `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sr_iou_r(prev_x: f64, prev_y: f64, curr_x: f64, curr_y: f64, r_side: f64, out: *mut f64) -> SrStatus {
    guard(|| put(out, iou_r(PixelPoint::new(prev_x, prev_y), PixelPoint::new(curr_x, curr_y), r_side)?))
}

/// # Safety
/// `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sr_reid_confidence(c_t: f64, iou_r: f64, out: *mut f64) -> SrStatus {
    guard(|| put(out, reid_confidence(c_t, iou_r)?))
}

/// Fraction of `subject` covered by `other`.
///
/// # Safety
/// `subject` and `other` point to valid boxes; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sr_occlusion_coefficient(subject: *const SrBox, other: *const SrBox, out: *mut f64) -> SrStatus {
    guard(|| {
        let (s, o) = (subject.as_ref().ok_or_else(|| null("subject"))?, other.as_ref().ok_or_else(|| null("other"))?);
        put(out, occlusion_coefficient(&to_box(s)?, &to_box(o)?))
    })
}

/// Distance score `ln(1 / max(d, epsilon) + 1)`, shared by the appearance
/// and keypoint scores.
///
/// # Safety
/// `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sr_score(distance: f64, epsilon: f64, out: *mut f64) -> SrStatus {
    guard(|| {
        if !(epsilon > 0.0) {
            return Err(Failure(SrStatus::InvalidConfig, format!("epsilon must be positive, got {epsilon}")));
        }
        put(out, score_s1(distance, epsilon)?)
    })
}

/// # Safety
/// `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sr_fuse(s1: f64, s2: f64, alpha: f64, beta: f64, out: *mut f64) -> SrStatus {
    guard(|| put(out, fuse(s1, s2, FusionWeights { alpha, beta })?))
}

/// Renders the configured scenario into dataset lines.
///
/// # Safety
/// `config_toml` is null (defaults) or a NUL-terminated string; `out` is
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sr_simulate(config_toml: *const c_char, out: *mut *mut c_char) -> SrStatus {
    guard(|| {
        let cfg = config(config_toml)?;
        put_string(out, jsonl(&simulate_records(&cfg)?)?)
    })
}

/// Runs the pipeline over dataset lines and returns results lines.
///
/// # Safety
/// `config_toml` is null or a NUL-terminated string; `dataset_jsonl` is a
/// NUL-terminated string; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sr_track(config_toml: *const c_char, dataset_jsonl: *const c_char, out: *mut *mut c_char) -> SrStatus {
    guard(|| {
        let cfg = config(config_toml)?;
        let data: Vec<DatasetRecord> = read_jsonl_from(text(dataset_jsonl, "dataset")?.as_bytes(), "dataset")?;
        put_string(out, jsonl(&track_records(&data, &cfg)?)?)
    })
}

/// Scores results lines against dataset lines; returns the report as JSON.
///
/// # Safety
/// `config_toml` is null or a NUL-terminated string; the two inputs are
/// NUL-terminated strings; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sr_evaluate(
    config_toml: *const c_char,
    dataset_jsonl: *const c_char,
    results_jsonl: *const c_char,
    out: *mut *mut c_char,
) -> SrStatus {
    guard(|| {
        let cfg = config(config_toml)?;
        let data: Vec<DatasetRecord> = read_jsonl_from(text(dataset_jsonl, "dataset")?.as_bytes(), "dataset")?;
        let results: Vec<ResultsRecord> = read_jsonl_from(text(results_jsonl, "results")?.as_bytes(), "results")?;
        let report = evaluate_records(&data, &results, &cfg)?;
        put_string(out, serde_json::to_string(&report)?)
    })
}

/// Creates a streaming engine. The tracker backend is the simulator's
/// oracle, so pushed records must carry their `truth` annotations.
///
/// # Safety
/// `config_toml` is null or a NUL-terminated string; `out` is valid for a
/// write.
#[no_mangle]
pub unsafe extern "C" fn sr_engine_new(config_toml: *const c_char, out: *mut *mut SrEngine) -> SrStatus {
    guard(|| {
        let cfg = config(config_toml)?;
        let backend = OracleTracker::new(cfg.sim.noise.tracker.clone(), cfg.rig(), cfg.sim.seed);
        let engine = Engine::new(&cfg, backend)?;
        let handle = Box::new(SrEngine { engine, seq: None, last_frame: None, pending: Vec::new() });
        put(out, Box::into_raw(handle))
    })
}

impl SrEngine {
    fn step(&mut self, seq: &str, inputs: &[FrameInput; 3]) -> Result<(), Failure> {
        let tick = self.engine.step(inputs)?;
        self.pending.extend(tick.frames.iter().map(|r| ResultsRecord::frame(seq, r)));
        self.pending.extend(tick.associations.iter().map(|a| ResultsRecord::association(seq, a)));
        Ok(())
    }

    fn push(&mut self, records: Vec<DatasetRecord>) -> Result<(), Failure> {
        let mismatch = |m: String| Failure(SrStatus::SequenceMismatch, m);
        let Some(first) = records.first() else {
            return Err(Failure(SrStatus::InvalidInput, "no records in frame".into()));
        };
        let (seq, frame) = (first.seq.clone(), first.frame);
        if self.seq.as_ref().is_some_and(|s| *s != seq) {
            return Err(mismatch(format!("engine is tracking sequence {:?}, got {seq:?}", self.seq.as_deref().unwrap_or(""))));
        }
        if self.last_frame.is_some_and(|last| frame <= last) {
            return Err(mismatch(format!("frame {frame} does not follow {}", self.last_frame.unwrap_or(0))));
        }
        let mut inputs = CameraId::ALL.map(|c| FrameInput::empty(c, frame));
        let mut seen = [false; 3];
        for r in &records {
            if r.seq != seq || r.frame != frame {
                return Err(mismatch("records of one push must share sequence and frame".into()));
            }
            if std::mem::replace(&mut seen[r.camera.index()], true) {
                return Err(mismatch(format!("camera {} appears twice in frame {frame}", r.camera)));
            }
            inputs[r.camera.index()] = r.to_input()?;
        }
        // Frames skipped since the last push are processed as empty, as the
        // batch tracker does.
        if let Some(last) = self.last_frame {
            for f in last + 1..frame {
                self.step(&seq, &CameraId::ALL.map(|c| FrameInput::empty(c, f)))?;
            }
        }
        self.step(&seq, &inputs)?;
        self.seq = Some(seq);
        self.last_frame = Some(frame);
        Ok(())
    }
}

/// Processes one frame given as a JSON array of dataset records (at most
/// one per camera, all with the same sequence and frame). Cameras without
/// a record see an empty frame.
///
/// # Safety
/// `engine` was returned by [`sr_engine_new`]; `frame_json` is a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sr_engine_push_frame(engine: *mut SrEngine, frame_json: *const c_char) -> SrStatus {
    guard(|| {
        let engine = engine.as_mut().ok_or_else(|| null("engine"))?;
        let records: Vec<DatasetRecord> = serde_json::from_str(text(frame_json, "frame")?)?;
        engine.push(records)
    })
}

/// Returns the results lines produced since the last call and clears them.
///
/// # Safety
/// `engine` was returned by [`sr_engine_new`]; `out` is valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sr_engine_take_results(engine: *mut SrEngine, out: *mut *mut c_char) -> SrStatus {
    guard(|| {
        let engine = engine.as_mut().ok_or_else(|| null("engine"))?;
        let lines = jsonl(&engine.pending)?;
        put_string(out, lines)?;
        engine.pending.clear();
        Ok(())
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` is null or was returned by [`sr_engine_new`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sr_engine_free(engine: *mut SrEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}
