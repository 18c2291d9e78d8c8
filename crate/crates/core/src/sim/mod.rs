//! Deterministic scenario simulator.
//!
//! Vehicles drive lane-like trajectories around a static ego vehicle carrying
//! a left/front/right camera rig. Rendering a frame yields, per camera, the
//! annotated boxes plus a noisy detector channel with wheel keypoints and
//! appearance embeddings. Noise grows toward the image edges, keypoints carry a
//! per-camera calibration offset, and occlusions are scripted episodes in
//! which one vehicle hides directly behind another.

mod oracle;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use oracle::{OracleTracker, TrackerNoise};

use crate::error::{Error, Result};
use crate::projection::{CameraModel, GroundPoint};
use crate::sct::{FrameInput, TruthBox};
use crate::types::{BoundingBox, CameraId, Detection, Embedding, GtId, PixelPoint, WheelKeypoints};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleDims {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub wheelbase: f64,
    pub track: f64,
}

impl Default for VehicleDims {
    fn default() -> Self {
        Self { length: 4.5, width: 1.8, height: 1.5, wheelbase: 2.7, track: 1.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub lane_width: f64,
    /// Lanes on each side of the ego lane.
    pub lanes_per_side: u32,
    /// Relative speed range of passing vehicles, m/s.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Chance that one free vehicle drives ahead in the ego lane.
    pub ahead_probability: f64,
    /// Bumper-to-bumper spacing range of vehicles sharing a lane, meters.
    pub gap_min: f64,
    pub gap_max: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Drive each lookalike pair side by side in neighbouring lanes.
    pub pair_lookalikes: bool,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            lane_width: 3.5,
            lanes_per_side: 1,
            speed_min: 0.8,
            speed_max: 2.5,
            ahead_probability: 0.5,
            gap_min: 6.0,
            gap_max: 14.0,
            min_range: 2.5,
            max_range: 25.0,
            pair_lookalikes: false,
        }
    }
}

/// `vehicle` hides behind `occluder` for `length` frames starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionEpisode {
    pub vehicle: usize,
    pub occluder: usize,
    pub start: u32,
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Detection box noise at the image center, pixels.
    pub drift_sigma: f64,
    /// Relative noise increase at the image edges.
    pub edge_noise_gain: f64,
    /// Per-observation keypoint jitter, meters per meter of range.
    pub keypoint_jitter: f64,
    pub tracker: TrackerNoise,
    pub occlusions: Vec<OcclusionEpisode>,
    /// Frames a scripted follower takes to slide behind its occluder and back.
    pub occlusion_ramp: u32,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            drift_sigma: 1.0,
            edge_noise_gain: 1.0,
            keypoint_jitter: 0.01,
            tracker: TrackerNoise::default(),
            occlusions: Vec::new(),
            occlusion_ramp: 12,
        }
    }
}

impl NoiseConfig {
    /// Every noise source switched off.
    pub fn noiseless() -> Self {
        Self {
            drift_sigma: 0.0,
            edge_noise_gain: 0.0,
            keypoint_jitter: 0.0,
            tracker: TrackerNoise::noiseless(),
            occlusions: Vec::new(),
            occlusion_ramp: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookalikePair {
    pub a: usize,
    pub b: usize,
    /// Distance between the two identity anchors.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Per-observation appearance noise around the identity anchor.
    pub identity_sigma: f64,
    /// Fixed per-(vehicle, camera) viewpoint offset.
    pub camera_view_sigma: f64,
    pub lookalike_pairs: Vec<LookalikePair>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { dim: 64, identity_sigma: 0.1, camera_view_sigma: 0.1, lookalike_pairs: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_vehicles: usize,
    pub duration_frames: u32,
    pub fps: f64,
    pub vehicle: VehicleDims,
    pub traffic: TrafficConfig,
    pub noise: NoiseConfig,
    pub embedding: EmbeddingConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_vehicles: 6,
            duration_frames: 300,
            fps: 30.0,
            vehicle: VehicleDims::default(),
            traffic: TrafficConfig::default(),
            noise: NoiseConfig::default(),
            embedding: EmbeddingConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.duration_frames == 0 {
            return bad("sim.duration_frames must be at least 1".into());
        }
        if !(self.fps > 0.0) {
            return bad("sim.fps must be positive".into());
        }
        if self.embedding.dim == 0 {
            return bad("sim.embedding.dim must be at least 1".into());
        }
        let n = &self.noise;
        let t = &n.tracker;
        let sigmas = [
            n.drift_sigma,
            n.edge_noise_gain,
            n.keypoint_jitter,
            t.drift_rate,
            t.jitter_rate,
            t.edge_gain,
            t.scale_jitter,
            t.loss_factor,
            self.embedding.identity_sigma,
            self.embedding.camera_view_sigma,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return bad("sim noise parameters must be non-negative".into());
        }
        if !(t.conf_scale > 0.0) {
            return bad(format!("sim.noise.tracker.conf_scale must be positive, got {}", t.conf_scale));
        }
        for e in &n.occlusions {
            if e.vehicle >= self.n_vehicles || e.occluder >= self.n_vehicles || e.vehicle == e.occluder {
                return bad(format!("occlusion episode {e:?} references invalid vehicles"));
            }
        }
        for p in &self.embedding.lookalike_pairs {
            if p.a >= self.n_vehicles || p.b >= self.n_vehicles || p.a == p.b || !(p.delta >= 0.0) {
                return bad(format!("lookalike pair {p:?} is invalid"));
            }
        }
        if !(self.traffic.min_range < self.traffic.max_range) || self.traffic.lanes_per_side == 0 {
            return bad("sim.traffic ranges or lanes are invalid".into());
        }
        Ok(())
    }
}

/// Independent RNG stream for `(seed, tag, a, b)`.
pub(crate) fn stream(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut z = seed;
    for v in [tag, a, b] {
        z = splitmix(z ^ splitmix(v));
    }
    ChaCha8Rng::seed_from_u64(z)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

const TAG_WORLD: u64 = 1;
const TAG_ANCHOR: u64 = 2;
const TAG_RENDER: u64 = 3;
const TAG_CALIB: u64 = 4;

/// Assumed absolute ego speed; only used to turn lateral motion into yaw.
const EGO_SPEED: f64 = 15.0;
/// Sideways distance of a visible follower from its hiding spot, meters.
const FOLLOW_SHIFT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub gt_id: GtId,
    pub poses: Vec<Pose>,
    pub anchor: Vec<f64>,
    /// Viewpoint offset per camera, indexed by [`CameraId::index`].
    pub views: [Vec<f64>; 3],
}

/// Ground truth of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioWorld {
    pub cfg: ScenarioConfig,
    pub rig: [CameraModel; 3],
    pub vehicles: Vec<Vehicle>,
    /// Fixed ground-plane calibration offset per camera.
    pub calib_offsets: [GroundPoint; 3],
}

#[derive(Debug, Clone)]
enum Script {
    Lane { x_at_zero: f64, speed: f64, y: f64 },
    /// Parked `depth` meters behind the leader on the front camera's line of
    /// sight while hidden, moved `shift` meters across that line otherwise.
    Follow { leader: usize, depth: f64, shift: f64, ramp: f64, episodes: Vec<(u32, u32)> },
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// 1 while hidden, 0 when fully beside the leader, with ramps on both sides.
fn hide_profile(frame: f64, episodes: &[(u32, u32)], ramp: f64) -> f64 {
    let ramp = ramp.max(1.0);
    episodes
        .iter()
        .map(|&(start, len)| {
            let (s, e) = (start as f64, (start + len) as f64 - 1.0);
            if frame < s {
                smoothstep(1.0 - (s - frame) / ramp)
            } else if frame <= e {
                1.0
            } else {
                smoothstep(1.0 - (frame - e) / ramp)
            }
        })
        .fold(0.0, f64::max)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn signed_speed(rng: &mut ChaCha8Rng, t: &TrafficConfig) -> f64 {
    let dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
    dir * uniform(rng, t.speed_min, t.speed_max)
}

/// Lays out every vehicle's trajectory.
///
/// Side lanes flow at a constant speed relative to the ego vehicle and keep
/// their vehicles spaced, so nothing drives through anything else. Scripted
/// occluders crawl ahead of the ego vehicle (the first in the ego lane, the
/// next ones in side lanes) with their followers further ahead; a follower's
/// lane is kept free of flowing traffic.
fn lane_scripts(cfg: &ScenarioConfig) -> Vec<Script> {
    let n = cfg.n_vehicles;
    let t = &cfg.traffic;
    let duration = cfg.duration_frames as f64;
    let mut rng = stream(cfg.seed, TAG_WORLD, 0, 0);
    let mut scripts: Vec<Option<Script>> = vec![None; n];

    let lanes: Vec<f64> = (1..=t.lanes_per_side)
        .flat_map(|k| [k as f64 * t.lane_width, -(k as f64) * t.lane_width])
        .collect();
    let mut speeds: Vec<f64> = lanes.iter().map(|_| signed_speed(&mut rng, t)).collect();
    if t.pair_lookalikes {
        // Lanes on one side move together so that pairs stay side by side.
        for i in 2..speeds.len() {
            speeds[i] = speeds[i % 2];
        }
    }
    // Frame at which the next vehicle of each lane passes x = 0.
    let mut next_cross: Vec<f64> = lanes.iter().map(|_| uniform(&mut rng, 0.1, 0.5) * duration).collect();
    let mut occupied = vec![false; lanes.len()];
    let mut ego_lane_taken = false;

    let mut occluders: Vec<usize> = Vec::new();
    for e in &cfg.noise.occlusions {
        if !occluders.contains(&e.occluder) {
            occluders.push(e.occluder);
        }
    }
    let mut occluder_lane: Vec<(usize, f64)> = Vec::new();
    for (slot, &o) in occluders.iter().enumerate() {
        let y = if slot == 0 {
            ego_lane_taken = true;
            0.0
        } else {
            let lane = (slot - 1) % lanes.len();
            occupied[lane] = true;
            lanes[lane]
        };
        let x = uniform(&mut rng, 9.0, 12.0);
        let speed = uniform(&mut rng, -0.1, 0.1);
        scripts[o] = Some(Script::Lane { x_at_zero: x, speed, y });
        occluder_lane.push((o, y));
    }
    for (i, slot) in scripts.iter_mut().enumerate() {
        let episodes: Vec<(u32, u32)> = cfg
            .noise
            .occlusions
            .iter()
            .filter(|e| e.vehicle == i)
            .map(|e| (e.start, e.length))
            .collect();
        let Some(first) = cfg.noise.occlusions.iter().find(|e| e.vehicle == i) else {
            continue;
        };
        if slot.is_some() {
            continue;
        }
        let y = occluder_lane.iter().find(|(o, _)| *o == first.occluder).map_or(0.0, |(_, y)| *y);
        // Side-lane followers step inward; the ego-lane follower steps to the
        // side no other occluder uses.
        let side = if y != 0.0 {
            -y.signum()
        } else if let Some(&(_, other)) = occluder_lane.iter().find(|(_, y)| *y != 0.0) {
            -other.signum()
        } else if rng.random::<bool>() {
            1.0
        } else {
            -1.0
        };
        if y == 0.0 {
            if let Some(l) = lanes.iter().position(|&l| l == side * t.lane_width) {
                occupied[l] = true;
            }
        }
        *slot = Some(Script::Follow {
            leader: first.occluder,
            depth: uniform(&mut rng, 6.0, 8.0),
            shift: side * FOLLOW_SHIFT,
            ramp: cfg.noise.occlusion_ramp as f64,
            episodes,
        });
    }

    let free_lanes: Vec<usize> = (0..lanes.len()).filter(|&l| !occupied[l]).collect();
    let lane_pool: Vec<usize> = if free_lanes.is_empty() { (0..lanes.len()).collect() } else { free_lanes };
    let place = |lane: usize, rng: &mut ChaCha8Rng, next_cross: &mut Vec<f64>| {
        let speed = speeds[lane];
        let cross = next_cross[lane];
        let gap = cfg.vehicle.length + uniform(rng, t.gap_min, t.gap_max);
        next_cross[lane] += gap / speed.abs() * cfg.fps;
        Script::Lane { x_at_zero: -speed * cross / cfg.fps, speed, y: lanes[lane] }
    };

    if t.pair_lookalikes && t.lanes_per_side >= 2 {
        for (k, p) in cfg.embedding.lookalike_pairs.iter().enumerate() {
            if scripts[p.a].is_some() || scripts[p.b].is_some() {
                continue;
            }
            // Inner and outer lane of one side.
            let side = k % 2;
            let (inner, outer) = (side, side + 2);
            let cross = next_cross[inner].max(next_cross[outer]);
            next_cross[inner] = cross;
            next_cross[outer] = cross + uniform(&mut rng, -0.5, 0.5) / speeds[outer].abs() * cfg.fps;
            scripts[p.a] = Some(place(inner, &mut rng, &mut next_cross));
            scripts[p.b] = Some(place(outer, &mut rng, &mut next_cross));
        }
    }

    for slot in scripts.iter_mut() {
        if slot.is_some() {
            continue;
        }
        if !ego_lane_taken && rng.random::<f64>() < t.ahead_probability {
            ego_lane_taken = true;
            let x = uniform(&mut rng, 10.0, 22.0);
            let speed = uniform(&mut rng, -0.3, 0.3);
            *slot = Some(Script::Lane { x_at_zero: x, speed, y: 0.0 });
            continue;
        }
        // Fill the lane whose next slot comes first.
        let lane = *lane_pool
            .iter()
            .min_by(|a, b| next_cross[**a].total_cmp(&next_cross[**b]))
            .expect("at least one lane");
        *slot = Some(place(lane, &mut rng, &mut next_cross));
    }
    scripts.into_iter().map(|s| s.expect("every vehicle scripted")).collect()
}

fn lane_position(s: &Script, frame: f64, fps: f64) -> (f64, f64) {
    match s {
        Script::Lane { x_at_zero, speed, y } => (x_at_zero + speed * frame / fps, *y),
        Script::Follow { .. } => unreachable!("followers resolve through their leader"),
    }
}

fn position(scripts: &[Script], i: usize, frame: f64, fps: f64, eye: &GroundPoint) -> (f64, f64) {
    match &scripts[i] {
        Script::Follow { leader, depth, shift, ramp, episodes } => {
            let (lx, ly) = position(scripts, *leader, frame, fps, eye);
            let (dx, dy) = (lx - eye.x, ly - eye.y);
            let norm = dx.hypot(dy).max(1e-9);
            let (ux, uy) = (dx / norm, dy / norm);
            let across = shift * (1.0 - hide_profile(frame, episodes, *ramp));
            (lx + depth * ux - across * uy, ly + depth * uy + across * ux)
        }
        s => lane_position(s, frame, fps),
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vec<f64> {
    (0..dim).map(|_| sigma * gauss(rng)).collect()
}

/// Builds the ground truth for `cfg`; deterministic per seed.
pub fn generate_world(cfg: &ScenarioConfig, rig: &[CameraModel; 3]) -> Result<ScenarioWorld> {
    cfg.validate()?;
    for cam in rig {
        cam.validate()?;
    }
    let scripts = lane_scripts(cfg);
    let eye = rig[CameraId::Front.index()].position;
    let dim = cfg.embedding.dim;

    let mut anchors: Vec<Vec<f64>> = (0..cfg.n_vehicles)
        .map(|i| gaussian_vec(&mut stream(cfg.seed, TAG_ANCHOR, i as u64, 0), dim, 1.0))
        .collect();
    for p in &cfg.embedding.lookalike_pairs {
        let mut rng = stream(cfg.seed, TAG_ANCHOR, p.b as u64, 1);
        let dir = gaussian_vec(&mut rng, dim, 1.0);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        anchors[p.b] = anchors[p.a].iter().zip(&dir).map(|(a, d)| a + p.delta * d / norm).collect();
    }

    let vehicles = (0..cfg.n_vehicles)
        .map(|i| {
            let poses = (0..cfg.duration_frames)
                .map(|f| {
                    let f = f as f64;
                    let (x, y) = position(&scripts, i, f, cfg.fps, &eye);
                    let (_, y_next) = position(&scripts, i, f + 1.0, cfg.fps, &eye);
                    let heading = ((y_next - y) * cfg.fps).atan2(EGO_SPEED);
                    Pose { x, y, heading }
                })
                .collect();
            let mut rng = stream(cfg.seed, TAG_ANCHOR, i as u64, 2);
            let views = [0, 1, 2].map(|_| gaussian_vec(&mut rng, dim, cfg.embedding.camera_view_sigma));
            Vehicle { gt_id: GtId(i as u32 + 1), poses, anchor: anchors[i].clone(), views }
        })
        .collect();

    let calib_offsets = CameraId::ALL.map(|c| {
        let sigma = rig[c.index()].calib_noise_sigma;
        let mut rng = stream(cfg.seed, TAG_CALIB, c.index() as u64, 0);
        GroundPoint::new(sigma * gauss(&mut rng), sigma * gauss(&mut rng))
    });

    Ok(ScenarioWorld { cfg: cfg.clone(), rig: rig.clone(), vehicles, calib_offsets })
}

impl ScenarioWorld {
    fn occluded(&self, vehicle: usize, frame: u32) -> bool {
        self.cfg
            .noise
            .occlusions
            .iter()
            .any(|e| e.vehicle == vehicle && (e.start..e.start + e.length).contains(&frame))
    }

    /// Clipped image box of vehicle `i` in `cam`, or `None` when not visible.
    pub fn truth_box(&self, i: usize, frame: u32, cam: &CameraModel) -> Option<BoundingBox> {
        let pose = self.vehicles[i].poses[frame as usize];
        let center = GroundPoint::new(pose.x, pose.y);
        let range = center.distance(&cam.position);
        let t = &self.cfg.traffic;
        if range < t.min_range || range > t.max_range {
            return None;
        }
        if cam.relative_azimuth(&center).abs() > cam.hfov / 2.0 {
            return None;
        }
        let d = &self.cfg.vehicle;
        let (c, s) = (pose.heading.cos(), pose.heading.sin());
        let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for (lx, ly) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let gx = pose.x + lx * d.length / 2.0 * c - ly * d.width / 2.0 * s;
            let gy = pose.y + lx * d.length / 2.0 * s + ly * d.width / 2.0 * c;
            let g = GroundPoint::new(gx, gy);
            if cam.relative_azimuth(&g).abs() > 0.95 * PI {
                return None;
            }
            for z in [0.0, d.height] {
                let p = cam.project(&g, z);
                u0 = u0.min(p.x);
                u1 = u1.max(p.x);
                v0 = v0.min(p.y);
                v1 = v1.max(p.y);
            }
        }
        let (u0, u1) = (u0.max(0.0), u1.min(cam.image_width));
        let (v0, v1) = (v0.max(0.0), v1.min(cam.image_height));
        if u1 - u0 < 4.0 || v1 - v0 < 4.0 {
            return None;
        }
        BoundingBox::from_corners(u0, v0, u1, v1).ok()
    }

    /// Ground contact points of the wheels on the side facing `cam`.
    pub fn wheel_points(&self, i: usize, frame: u32, cam: &CameraModel) -> (GroundPoint, GroundPoint) {
        let pose = self.vehicles[i].poses[frame as usize];
        let d = &self.cfg.vehicle;
        let (c, s) = (pose.heading.cos(), pose.heading.sin());
        let (nx, ny) = (-s, c);
        let toward = (cam.position.x - pose.x) * nx + (cam.position.y - pose.y) * ny;
        let side = if toward >= 0.0 { 1.0 } else { -1.0 };
        let wheel = |along: f64| {
            GroundPoint::new(
                pose.x + along * c + side * d.track / 2.0 * nx,
                pose.y + along * s + side * d.track / 2.0 * ny,
            )
        };
        (wheel(d.wheelbase / 2.0), wheel(-d.wheelbase / 2.0))
    }

    /// Number of `(camera, frame)` pairs in which at least one vehicle is visible.
    pub fn visibility_count(&self) -> usize {
        (0..self.cfg.duration_frames)
            .map(|f| {
                CameraId::ALL
                    .iter()
                    .filter(|c| {
                        let cam = &self.rig[c.index()];
                        (0..self.vehicles.len()).any(|i| self.truth_box(i, f, cam).is_some())
                    })
                    .count()
            })
            .sum()
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        let scale = (v.len() as f64).sqrt() / norm;
        v.iter_mut().for_each(|x| *x *= scale);
    }
    v
}

/// Annotations and detector output of every camera for one frame.
pub fn render_frame(world: &ScenarioWorld, frame: u32) -> Result<[FrameInput; 3]> {
    if frame >= world.cfg.duration_frames {
        return Err(Error::Domain { what: "frame index", value: frame as f64 });
    }
    let noise = &world.cfg.noise;
    let mut out = CameraId::ALL.map(|c| FrameInput::empty(c, frame));
    for camera in CameraId::ALL {
        let cam = &world.rig[camera.index()];
        let input = &mut out[camera.index()];
        for (i, vehicle) in world.vehicles.iter().enumerate() {
            let Some(gt) = world.truth_box(i, frame, cam) else {
                continue;
            };
            let occluded = world.occluded(i, frame);
            input.truth.push(TruthBox { gt_id: vehicle.gt_id, bbox: gt, occluded });
            if occluded {
                continue;
            }
            let tag = (camera.index() as u64) << 32 | i as u64;
            let mut rng = stream(world.cfg.seed, TAG_RENDER, frame as u64, tag);
            let sigma = noise.drift_sigma * (1.0 + noise.edge_noise_gain * cam.edge_proximity(gt.cx));
            let (dx, dy) = (sigma * gauss(&mut rng), sigma * gauss(&mut rng));
            let w = (gt.w + sigma * gauss(&mut rng)).max(2.0);
            let h = (gt.h + sigma * gauss(&mut rng)).max(2.0);
            let bbox = BoundingBox::new(gt.cx + dx, gt.cy + dy, w, h)?;
            let conf = (-(dx.hypot(dy)) / (0.5 * gt.w.min(gt.h))).exp();

            let (front, rear) = world.wheel_points(i, frame, cam);
            let offset = world.calib_offsets[camera.index()];
            let mut observe = |p: GroundPoint| -> Option<PixelPoint> {
                let jitter = noise.keypoint_jitter * p.distance(&cam.position);
                let noisy = GroundPoint::new(
                    p.x + offset.x + jitter * gauss(&mut rng),
                    p.y + offset.y + jitter * gauss(&mut rng),
                );
                let px = cam.project(&noisy, 0.0);
                (cam.contains_pixel(px) && px.y > cam.horizon_row()).then_some(px)
            };
            let keypoints = WheelKeypoints::new(observe(front), observe(rear));

            let id_sigma = world.cfg.embedding.identity_sigma;
            let raw: Vec<f64> = vehicle
                .anchor
                .iter()
                .zip(&vehicle.views[camera.index()])
                .map(|(a, v)| a + v + id_sigma * gauss(&mut rng))
                .collect();
            let mut det = Detection::new(camera, frame, bbox, conf.clamp(0.0, 1.0))?;
            det.keypoints = keypoints;
            det.embedding = Some(Embedding::new(normalized(raw))?);
            det.gt_id = Some(vehicle.gt_id);
            input.detections.push(det);
        }
    }
    Ok(out)
}
