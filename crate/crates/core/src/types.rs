//! Geometric and identity value types shared by every stage of the engine.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in continuous pixel coordinates, stored by center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let ok = cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite();
        if !ok || w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox { cx, cy, w, h });
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from corner coordinates `(x0, y0)`-`(x1, y1)`.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(self.cx, self.cy)
    }

    pub fn x0(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn x1(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn y0(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn y1(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { cx: self.cx + dx, cy: self.cy + dy, ..*self }
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.cx, b.cy, b.w, b.h]
    }
}

/// Overlap area of two boxes; zero when they are disjoint.
pub fn box_intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.x1().min(b.x1()) - a.x0().max(b.x0());
    let ih = a.y1().min(b.y1()) - a.y0().max(b.y0());
    if iw <= 0.0 || ih <= 0.0 {
        0.0
    } else {
        iw * ih
    }
}

pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = box_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<[f64; 2]> for PixelPoint {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<PixelPoint> for [f64; 2] {
    fn from(p: PixelPoint) -> Self {
        [p.x, p.y]
    }
}

/// The three cameras of the surround-view rig, in serial processing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraId {
    Left,
    Front,
    Right,
}

impl CameraId {
    pub const ALL: [CameraId; 3] = [CameraId::Left, CameraId::Front, CameraId::Right];

    pub fn index(self) -> usize {
        match self {
            CameraId::Left => 0,
            CameraId::Front => 1,
            CameraId::Right => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CameraId::Left => "left",
            CameraId::Front => "front",
            CameraId::Right => "right",
        }
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Identity assigned by the engine, shared by all cameras.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlobalId(pub u64);

impl fmt::Display for GlobalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Hands out [`GlobalId`]s in increasing order, never reusing one.
#[derive(Debug, Clone)]
pub struct IdAllocator {
    next: u64,
}

impl Default for IdAllocator {
    fn default() -> Self {
        Self { next: 1 }
    }
}

impl IdAllocator {
    pub fn allocate(&mut self) -> GlobalId {
        let id = GlobalId(self.next);
        self.next += 1;
        id
    }
}

/// Ground-truth vehicle identity. Only the simulator and evaluation read it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GtId(pub u32);

impl fmt::Display for GtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Wheel grounding points (image pixels) of the visible side of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelKeypoints {
    pub front: Option<PixelPoint>,
    pub rear: Option<PixelPoint>,
}

impl WheelKeypoints {
    /// Returns `None` when neither wheel is present.
    pub fn new(front: Option<PixelPoint>, rear: Option<PixelPoint>) -> Option<Self> {
        (front.is_some() || rear.is_some()).then_some(Self { front, rear })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn euclidean(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }
}

/// One detector observation in one camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub camera: CameraId,
    pub frame: u32,
    pub bbox: BoundingBox,
    pub conf: f64,
    pub keypoints: Option<WheelKeypoints>,
    pub embedding: Option<Embedding>,
    pub gt_id: Option<GtId>,
}

impl Detection {
    pub fn new(camera: CameraId, frame: u32, bbox: BoundingBox, conf: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::Domain { what: "detection confidence", value: conf });
        }
        Ok(Self { camera, frame, bbox, conf, keypoints: None, embedding: None, gt_id: None })
    }
}
