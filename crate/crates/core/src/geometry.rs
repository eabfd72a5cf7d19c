//! Coordinate frames, camera model and pinhole projection of the LED panel.
//!
//! The LED coordinate system (LCS) has its origin at the panel center, the
//! panel in the `z = 0` plane and `+z` pointing from the ceiling down toward
//! the floor, so every physical receiver has `position.z > 0`.
//!
//! Camera attitude is stored as roll/pitch/yaw in degrees and composed as
//! intrinsic Z-Y-X (`R = Rz(yaw) · Ry(pitch) · Rx(roll)`). At zero attitude the
//! camera looks straight up at the panel: a fixed flip `F = diag(1, -1, -1)`
//! maps LCS axes into the camera frame, so `p_cam = F · Rᵀ · (p - position)`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::PolarCurve;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point lies behind the camera (camera-frame z = {0})")]
    BehindCamera(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid LED panel: {0}")]
    InvalidPanel(String),
}

/// A point or direction in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3×3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix =
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn rot_x(rad: f64) -> Self {
        let (s, c) = rad.sin_cos();
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    pub fn rot_y(rad: f64) -> Self {
        let (s, c) = rad.sin_cos();
        RotationMatrix([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    pub fn rot_z(rad: f64) -> Self {
        let (s, c) = rad.sin_cos();
        RotationMatrix([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rodrigues rotation by `rad` about the unit vector `axis`.
    pub fn about_axis(axis: Vec3, rad: f64) -> Self {
        let a = axis * (1.0 / axis.norm());
        let (s, c) = rad.sin_cos();
        let t = 1.0 - c;
        RotationMatrix([
            [t * a.x * a.x + c, t * a.x * a.y - s * a.z, t * a.x * a.z + s * a.y],
            [t * a.x * a.y + s * a.z, t * a.y * a.y + c, t * a.y * a.z - s * a.x],
            [t * a.x * a.z - s * a.y, t * a.y * a.z + s * a.x, t * a.z * a.z + c],
        ])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        RotationMatrix([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, o: RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        RotationMatrix(out)
    }
}

/// Camera attitude in degrees, each angle normalized to `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

fn wrap_degrees(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

impl Attitude {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            roll: wrap_degrees(roll),
            pitch: wrap_degrees(pitch),
            yaw: wrap_degrees(yaw),
        }
    }

    /// Recovers Z-Y-X angles from a rotation matrix. At gimbal lock
    /// (pitch = ±90°) roll is set to zero and folded into yaw.
    pub fn from_matrix(r: &RotationMatrix) -> Self {
        let m = &r.0;
        let sp = (-m[2][0]).clamp(-1.0, 1.0);
        let pitch = sp.asin();
        if sp.abs() > 1.0 - 1e-12 {
            let yaw = (-m[0][1]).atan2(m[1][1]);
            return Self::new(0.0, pitch.to_degrees(), yaw.to_degrees());
        }
        let roll = m[2][1].atan2(m[2][2]);
        let yaw = m[1][0].atan2(m[0][0]);
        Self::new(roll.to_degrees(), pitch.to_degrees(), yaw.to_degrees())
    }
}

/// `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn attitude_to_matrix(att: Attitude) -> RotationMatrix {
    RotationMatrix::rot_z(att.yaw.to_radians())
        * RotationMatrix::rot_y(att.pitch.to_radians())
        * RotationMatrix::rot_x(att.roll.to_radians())
}

/// Receiver pose: position in the LCS and attitude.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub attitude: Attitude,
}

impl Pose {
    pub fn new(position: Vec3, attitude: Attitude) -> Self {
        Self { position, attitude }
    }

    /// Camera at `(x, y, z)` looking straight up at the panel.
    pub fn nadir(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vec3::new(x, y, z), Attitude::default())
    }

    /// Maps an LCS point into the camera frame.
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        let rt = attitude_to_matrix(self.attitude).transpose();
        let q = rt.mul_vec(p - self.position);
        Vec3::new(q.x, -q.y, -q.z)
    }

    /// Maps a camera-frame direction into the LCS.
    pub fn camera_dir_to_lcs(&self, d: Vec3) -> Vec3 {
        attitude_to_matrix(self.attitude).mul_vec(Vec3::new(d.x, -d.y, -d.z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub width_px: u32,
    pub height_px: u32,
    pub fx_px: f64,
    pub fy_px: f64,
    pub cx_px: f64,
    pub cy_px: f64,
    pub exposure_us: f64,
    /// Dimensionless sensor sensitivity scale (ISO).
    pub iso_gain: f64,
    pub row_readout_us: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            width_px: 1728,
            height_px: 2304,
            fx_px: 1600.0,
            fy_px: 1600.0,
            cx_px: 864.0,
            cy_px: 1152.0,
            exposure_us: 68.0,
            iso_gain: 100.0,
            row_readout_us: 3.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: &str| Err(GeometryError::InvalidIntrinsics(msg.to_string()));
        if self.width_px == 0 || self.height_px == 0 {
            return bad("sensor dimensions must be nonzero");
        }
        if !(self.fx_px > 0.0 && self.fy_px > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(0.0..self.width_px as f64).contains(&self.cx_px)
            || !(0.0..self.height_px as f64).contains(&self.cy_px)
        {
            return bad("principal point must lie on the sensor");
        }
        if !(self.exposure_us > 0.0) {
            return bad("exposure_us must be positive");
        }
        if !(self.row_readout_us > 0.0) {
            return bad("row_readout_us must be positive");
        }
        if !(self.iso_gain > 0.0) {
            return bad("iso_gain must be positive");
        }
        Ok(())
    }
}

/// Square LED panel centered at the LCS origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedPanel {
    pub side_m: f64,
    pub flux_lm: f64,
    /// Correlated color temperature; carried as metadata only.
    pub cct_k: f64,
    pub curve: PolarCurve,
}

impl Default for LedPanel {
    fn default() -> Self {
        let flux_lm = 3600.0;
        Self {
            side_m: 0.595,
            flux_lm,
            cct_k: 4000.0,
            curve: crate::render::lambertian_default(flux_lm),
        }
    }
}

impl LedPanel {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.side_m > 0.0) {
            return Err(GeometryError::InvalidPanel("side_m must be positive".into()));
        }
        if !(self.flux_lm > 0.0) {
            return Err(GeometryError::InvalidPanel("flux_lm must be positive".into()));
        }
        Ok(())
    }

    /// Physical corners in LCS, counter-clockwise about `+z` starting at
    /// `(+s/2, +s/2)`. Index `k` is the label carried by ray-cast features.
    pub fn corners(&self) -> [Vec3; 4] {
        let h = self.side_m / 2.0;
        [
            Vec3::new(h, h, 0.0),
            Vec3::new(-h, h, 0.0),
            Vec3::new(-h, -h, 0.0),
            Vec3::new(h, -h, 0.0),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn dist(self, o: PixelPoint) -> f64 {
        (self.u - o.u).hypot(self.v - o.v)
    }
}

/// Four panel corners in pixel coordinates. Pixel centers sit on integer
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerSet {
    pub points: [PixelPoint; 4],
}

impl CornerSet {
    pub fn new(points: [PixelPoint; 4]) -> Self {
        Self { points }
    }

    /// Shoelace area in square pixels (absolute value).
    pub fn area(&self) -> f64 {
        let p = &self.points;
        let mut acc = 0.0;
        for i in 0..4 {
            let a = p[i];
            let b = p[(i + 1) % 4];
            acc += a.u * b.v - b.u * a.v;
        }
        acc.abs() / 2.0
    }

    pub fn max_abs_diff(&self, other: &CornerSet) -> f64 {
        self.points
            .iter()
            .zip(other.points.iter())
            .map(|(a, b)| (a.u - b.u).abs().max((a.v - b.v).abs()))
            .fold(0.0, f64::max)
    }
}

/// Pinhole projection of an LCS point. The result may fall outside the
/// sensor.
pub fn project_point(
    intr: &CameraIntrinsics,
    pose: &Pose,
    p: Vec3,
) -> Result<PixelPoint, GeometryError> {
    let c = pose.to_camera(p);
    if c.z <= 0.0 {
        return Err(GeometryError::BehindCamera(c.z));
    }
    Ok(PixelPoint::new(
        intr.fx_px * c.x / c.z + intr.cx_px,
        intr.fy_px * c.y / c.z + intr.cy_px,
    ))
}

/// Ray-cast labels: corner `k` of the result is the projection of
/// `panel.corners()[k]`.
pub fn project_labeled_corners(
    intr: &CameraIntrinsics,
    pose: &Pose,
    panel: &LedPanel,
) -> Result<CornerSet, GeometryError> {
    let c = panel.corners();
    Ok(CornerSet::new([
        project_point(intr, pose, c[0])?,
        project_point(intr, pose, c[1])?,
        project_point(intr, pose, c[2])?,
        project_point(intr, pose, c[3])?,
    ]))
}

/// Projected panel corners in the canonical angular order of
/// [`crate::vision::order_corners`].
pub fn project_panel_corners(
    intr: &CameraIntrinsics,
    pose: &Pose,
    panel: &LedPanel,
) -> Result<CornerSet, GeometryError> {
    let labeled = project_labeled_corners(intr, pose, panel)?;
    // four projected corners of a visible square are never degenerate
    Ok(crate::vision::order_corners(labeled.points).unwrap_or(labeled))
}

/// True iff every corner lies inside `[0, width) × [0, height)`.
pub fn in_fov(c: &CornerSet, intr: &CameraIntrinsics) -> bool {
    let w = intr.width_px as f64;
    let h = intr.height_px as f64;
    c.points
        .iter()
        .all(|p| p.u >= 0.0 && p.u < w && p.v >= 0.0 && p.v < h)
}

/// Casts the ray through pixel `px` and intersects it with the panel plane
/// `z = 0`. Returns `None` if the ray is parallel to or points away from
/// the plane.
pub fn back_project(intr: &CameraIntrinsics, pose: &Pose, px: PixelPoint) -> Option<Vec3> {
    let dir_cam = Vec3::new(
        (px.u - intr.cx_px) / intr.fx_px,
        (px.v - intr.cy_px) / intr.fy_px,
        1.0,
    );
    let d = pose.camera_dir_to_lcs(dir_cam);
    if d.z.abs() < 1e-15 {
        return None;
    }
    let t = -pose.position.z / d.z;
    if t <= 0.0 {
        return None;
    }
    Some(pose.position + d * t)
}
