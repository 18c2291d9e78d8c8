//! Camera model, ground-plane projection of wheel keypoints, and the
//! distance-dependent uncertainty disks used as a spatial gate.
//!
//! The camera maps pixel columns linearly to azimuth and pixel rows linearly
//! to depression angle below the horizontal. Ground points are the
//! intersection of that ray with the plane `z = 0` in the ego frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PixelPoint, WheelKeypoints};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &GroundPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for GroundPoint {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<GroundPoint> for [f64; 2] {
    fn from(p: GroundPoint) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    /// Mount point on the ego ground plane, meters.
    pub position: GroundPoint,
    /// Mount height above the ground, meters.
    pub height: f64,
    /// Heading of the optical axis, radians counter-clockwise from +x.
    pub yaw: f64,
    /// Depression of the image center row below the horizontal, radians.
    pub pitch: f64,
    pub hfov: f64,
    pub vfov: f64,
    pub image_width: f64,
    pub image_height: f64,
    /// Standard deviation of the per-axis ground-plane calibration offset, meters.
    #[serde(default)]
    pub calib_noise_sigma: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.hfov > 0.0
            && self.hfov < PI
            && self.vfov > 0.0
            && self.vfov < PI
            && self.image_width > 0.0
            && self.image_height > 0.0
            && self.height > 0.0
            && self.calib_noise_sigma >= 0.0
            && self.pitch + self.vfov / 2.0 < PI / 2.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid camera model {self:?}")))
        }
    }

    /// Image row at which rays run parallel to the ground.
    pub fn horizon_row(&self) -> f64 {
        self.image_height * (0.5 - self.pitch / self.vfov)
    }

    /// 0 at the image center column, 1 at either side edge.
    pub fn edge_proximity(&self, u: f64) -> f64 {
        let half = self.image_width / 2.0;
        ((u - half).abs() / half).clamp(0.0, 1.0)
    }

    pub fn contains_pixel(&self, p: PixelPoint) -> bool {
        (0.0..=self.image_width).contains(&p.x) && (0.0..=self.image_height).contains(&p.y)
    }

    /// Azimuth of a world direction relative to the optical axis, in (-π, π].
    pub fn relative_azimuth(&self, p: &GroundPoint) -> f64 {
        wrap_angle((p.y - self.position.y).atan2(p.x - self.position.x) - self.yaw)
    }

    /// Forward projection of a world point at height `z` into pixel coordinates.
    ///
    /// The result may lie outside the image; callers decide visibility.
    pub fn project(&self, p: &GroundPoint, z: f64) -> PixelPoint {
        let az = self.relative_azimuth(p);
        let range = self.position.distance(p);
        let depression = (self.height - z).atan2(range);
        PixelPoint::new(
            self.image_width * (0.5 - az / self.hfov),
            self.image_height * (0.5 + (depression - self.pitch) / self.vfov),
        )
    }
}

/// Intersects the ray through pixel `kp` with the ground plane.
pub fn project_to_ground(kp: PixelPoint, cam: &CameraModel) -> Result<GroundPoint> {
    if !cam.contains_pixel(kp) {
        return Err(Error::Domain { what: "keypoint outside image", value: kp.x });
    }
    let depression = cam.pitch + cam.vfov * (kp.y / cam.image_height - 0.5);
    if depression <= 0.0 || depression >= PI / 2.0 {
        return Err(Error::NoGroundIntersection { u: kp.x, v: kp.y });
    }
    let range = cam.height / depression.tan();
    let heading = cam.yaw + cam.hfov * (0.5 - kp.x / cam.image_width);
    Ok(GroundPoint::new(
        cam.position.x + range * heading.cos(),
        cam.position.y + range * heading.sin(),
    ))
}

/// Uncertainty radius growing linearly with distance from the observing camera.
pub fn uncertainty_radius(p: &GroundPoint, cam: &CameraModel, r0: f64, k: f64) -> f64 {
    debug_assert!(r0 > 0.0 && k >= 0.0);
    r0 + k * p.distance(&cam.position)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyDisk {
    pub center: GroundPoint,
    pub radius: f64,
}

/// Boundary contact counts as overlap.
pub fn disks_overlap(a: &UncertaintyDisk, b: &UncertaintyDisk) -> bool {
    a.center.distance(&b.center) <= a.radius + b.radius
}

/// Wheel keypoints lifted onto the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProjectedKeypoints {
    pub front: Option<GroundPoint>,
    pub rear: Option<GroundPoint>,
}

impl ProjectedKeypoints {
    pub fn is_empty(&self) -> bool {
        self.front.is_none() && self.rear.is_none()
    }
}

/// Projects whichever wheels are present; wheels above the horizon are dropped.
pub fn project_keypoints(kp: &WheelKeypoints, cam: &CameraModel) -> ProjectedKeypoints {
    let lift = |p: Option<PixelPoint>| p.and_then(|p| project_to_ground(p, cam).ok());
    ProjectedKeypoints { front: lift(kp.front), rear: lift(kp.rear) }
}

/// Sum of front-pair and rear-pair ground distances.
pub fn keypoint_distance(a: &ProjectedKeypoints, b: &ProjectedKeypoints) -> Result<f64> {
    match (a.front, b.front, a.rear, b.rear) {
        (Some(af), Some(bf), Some(ar), Some(br)) => Ok(af.distance(&bf) + ar.distance(&br)),
        _ => Err(Error::MissingKeypointCategory),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Camera at the origin looking along +x whose bottom row meets the ground at `bottom_range`.
    fn camera(yaw: f64, height: f64, bottom_range: f64) -> CameraModel {
        let vfov = 80f64.to_radians();
        let bottom_depression = (height / bottom_range).atan();
        CameraModel {
            position: GroundPoint::new(0.0, 0.0),
            height,
            yaw,
            pitch: bottom_depression - vfov / 2.0,
            hfov: 150f64.to_radians(),
            vfov,
            image_width: 1280.0,
            image_height: 720.0,
            calib_noise_sigma: 0.0,
        }
    }

    #[test]
    fn bottom_center_pixel_hits_ground_at_two_meters() {
        let cam = camera(0.0, 1.2, 2.0);
        let g = project_to_ground(PixelPoint::new(640.0, 720.0), &cam).unwrap();
        assert!((g.x - 2.0).abs() < 1e-12 && g.y.abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn yawed_camera_rotates_ground_point() {
        let cam = camera(PI / 2.0, 1.2, 2.0);
        let g = project_to_ground(PixelPoint::new(640.0, 720.0), &cam).unwrap();
        assert!(g.x.abs() < 1e-12 && (g.y - 2.0).abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn horizon_and_sky_have_no_ground_point() {
        let cam = camera(0.0, 1.2, 2.0);
        let horizon = cam.horizon_row();
        assert!(matches!(
            project_to_ground(PixelPoint::new(640.0, horizon), &cam),
            Err(Error::NoGroundIntersection { .. })
        ));
        assert!(project_to_ground(PixelPoint::new(640.0, horizon - 10.0), &cam).is_err());
        assert!(project_to_ground(PixelPoint::new(640.0, horizon + 1.0), &cam).is_ok());
    }

    #[test]
    fn uncertainty_radius_examples() {
        let cam = camera(0.0, 1.2, 2.0);
        assert_eq!(uncertainty_radius(&GroundPoint::new(0.0, 0.0), &cam, 0.2, 0.05), 0.2);
        let r = uncertainty_radius(&GroundPoint::new(4.0, 0.0), &cam, 0.2, 0.05);
        assert!((r - 0.4).abs() < 1e-12);
        let r1 = uncertainty_radius(&GroundPoint::new(3.0, 0.0), &cam, 1e-12, 0.1);
        let r2 = uncertainty_radius(&GroundPoint::new(6.0, 0.0), &cam, 1e-12, 0.1);
        assert!((r2 - 2.0 * r1).abs() < 1e-9);
    }

    #[test]
    fn disk_overlap_examples() {
        let d = |x: f64, r: f64| UncertaintyDisk { center: GroundPoint::new(x, 0.0), radius: r };
        assert!(disks_overlap(&d(0.0, 0.1), &d(0.0, 0.1)));
        assert!(!disks_overlap(&d(0.0, 0.4), &d(1.0, 0.5)));
        assert!(disks_overlap(&d(0.0, 0.5), &d(1.0, 0.5)));
        // 0.9 apart with 0.4 + 0.5: boundary contact
        assert!(disks_overlap(
            &UncertaintyDisk { center: GroundPoint::new(0.0, 0.0), radius: 0.5 },
            &UncertaintyDisk { center: GroundPoint::new(0.0, 0.9), radius: 0.4 },
        ));
    }

    #[test]
    fn keypoint_distance_examples() {
        let a = ProjectedKeypoints {
            front: Some(GroundPoint::new(1.0, 1.0)),
            rear: Some(GroundPoint::new(-2.0, 1.0)),
        };
        assert_eq!(keypoint_distance(&a, &a).unwrap(), 0.0);
        let b = ProjectedKeypoints {
            front: Some(GroundPoint::new(1.3, 1.0)),
            rear: Some(GroundPoint::new(-2.0, 1.5)),
        };
        assert!((keypoint_distance(&a, &b).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(keypoint_distance(&a, &b).unwrap(), keypoint_distance(&b, &a).unwrap());
        let partial = ProjectedKeypoints { rear: None, ..a };
        assert!(matches!(keypoint_distance(&a, &partial), Err(Error::MissingKeypointCategory)));
    }

    proptest! {
        #[test]
        fn forward_then_inverse_round_trips(
            yaw in -PI..PI, range in 1.5..40.0f64, az in -1.2..1.2f64,
            px in -3.0..3.0f64, py in -3.0..3.0f64,
        ) {
            let mut cam = camera(yaw, 1.0, 0.6);
            cam.position = GroundPoint::new(px, py);
            let g = GroundPoint::new(px + range * (yaw + az).cos(), py + range * (yaw + az).sin());
            let pix = cam.project(&g, 0.0);
            prop_assume!(cam.contains_pixel(pix));
            let back = project_to_ground(pix, &cam).unwrap();
            prop_assert!(back.distance(&g) < 1e-9, "{:?} vs {:?}", back, g);
        }

        #[test]
        fn disk_overlap_symmetric_and_monotone(
            ax in -5.0..5.0f64, bx in -5.0..5.0f64, ra in 0.01..3.0f64, rb in 0.01..3.0f64, grow in 0.0..2.0f64,
        ) {
            let a = UncertaintyDisk { center: GroundPoint::new(ax, 0.0), radius: ra };
            let b = UncertaintyDisk { center: GroundPoint::new(bx, 1.0), radius: rb };
            prop_assert_eq!(disks_overlap(&a, &b), disks_overlap(&b, &a));
            if disks_overlap(&a, &b) {
                let bigger = UncertaintyDisk { radius: ra + grow, ..a };
                prop_assert!(disks_overlap(&bigger, &b));
            }
        }

        #[test]
        fn keypoint_distance_triangle(
            pts in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 6),
        ) {
            let kp = |i: usize| ProjectedKeypoints {
                front: Some(GroundPoint::new(pts[i].0, pts[i].1)),
                rear: Some(GroundPoint::new(pts[i + 3].0, pts[i + 3].1)),
            };
            let (a, b, c) = (kp(0), kp(1), kp(2));
            let ab = keypoint_distance(&a, &b).unwrap();
            let bc = keypoint_distance(&b, &c).unwrap();
            let ac = keypoint_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
