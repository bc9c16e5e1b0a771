//! Calibrated pinhole camera with Brown-Conrady lens distortion.
//!
//! World frame: meters, court floor is `Z = 0`, `Z` up.
//! Camera frame: `x_cam = R * X_world + t`, `+x` right, `+y` down, `+z` forward.
//! Image frame: pixels, origin top-left, `y` down, pixel centers on integers.

use nalgebra::{Matrix2, Matrix3, Point2, Point3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pixel position in image coordinates.
pub type ImagePoint = Point2<f64>;
/// Position in the court frame, meters.
pub type WorldPoint = Point3<f64>;

/// Camera-frame depth below which a point counts as behind the camera.
pub const DEPTH_EPS: f64 = 1e-9;
/// Minimum magnitude of a unit-direction component for a ray/plane intersection.
pub const PARALLEL_EPS: f64 = 1e-9;
/// Fixed-point iteration cap for [`CameraCalibration::undistort_point`].
pub const UNDISTORT_MAX_ITERS: usize = 50;
/// Largest residual (normalized units) accepted from undistortion.
pub const UNDISTORT_TOL: f64 = 1e-8;

// Iteration keeps going past UNDISTORT_TOL until it hits this.
const UNDISTORT_TARGET: f64 = 1e-14;
const NEWTON_MAX_ITERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CameraError {
    #[error("point is behind or on the camera plane (depth {depth})")]
    DepthNonPositive { depth: f64 },
    #[error("undistortion did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("ray is parallel to the plane")]
    RayParallelToPlane,
    #[error("plane intersection lies behind the camera (s = {s})")]
    IntersectionBehindCamera { s: f64 },
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("look-at direction is parallel to the up vector")]
    DegenerateLookAt,
}

/// Brown-Conrady coefficients on normalized image coordinates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub k3: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
}

impl Distortion {
    pub fn radial(k1: f64, k2: f64) -> Self {
        Self { k1, k2, ..Self::default() }
    }

    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.k3 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }

    fn radial_scale(&self, n: &Vector2<f64>) -> f64 {
        let r2 = n.norm_squared();
        1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
    }

    fn tangential(&self, n: &Vector2<f64>) -> Vector2<f64> {
        let (x, y) = (n.x, n.y);
        let r2 = x * x + y * y;
        Vector2::new(
            2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        )
    }

    /// Maps ideal normalized coordinates to distorted normalized coordinates.
    pub fn distort(&self, n: &Vector2<f64>) -> Vector2<f64> {
        n * self.radial_scale(n) + self.tangential(n)
    }

    fn jacobian(&self, n: &Vector2<f64>) -> Matrix2<f64> {
        let (x, y) = (n.x, n.y);
        let r2 = x * x + y * y;
        let radial = self.radial_scale(n);
        // d(radial)/d(r2)
        let dr = self.k1 + r2 * (2.0 * self.k2 + 3.0 * r2 * self.k3);
        let (p1, p2) = (self.p1, self.p2);
        Matrix2::new(
            radial + 2.0 * x * x * dr + 2.0 * p1 * y + 6.0 * p2 * x,
            2.0 * x * y * dr + 2.0 * p1 * x + 2.0 * p2 * y,
            2.0 * x * y * dr + 2.0 * p1 * x + 2.0 * p2 * y,
            radial + 2.0 * y * y * dr + 6.0 * p1 * y + 2.0 * p2 * x,
        )
    }

    /// Inverts [`Distortion::distort`].
    ///
    /// Runs the fixed-point scheme `n <- (target - tangential(n)) / radial(n)`.
    /// Strong pincushion near the frame edge makes that contraction slow, so
    /// any leftover residual is polished with Newton steps.
    pub fn undistort(&self, target: &Vector2<f64>) -> Result<Vector2<f64>, CameraError> {
        if self.is_zero() {
            return Ok(*target);
        }
        let residual = |n: &Vector2<f64>| (self.distort(n) - target).norm();

        let mut n = *target;
        let mut res = residual(&n);
        for _ in 0..UNDISTORT_MAX_ITERS {
            if res <= UNDISTORT_TARGET {
                break;
            }
            let next = (target - self.tangential(&n)) / self.radial_scale(&n);
            let next_res = residual(&next);
            if !next_res.is_finite() {
                break;
            }
            n = next;
            res = next_res;
        }

        let mut iters = 0;
        while res > UNDISTORT_TARGET && iters < NEWTON_MAX_ITERS {
            let Some(inv) = self.jacobian(&n).try_inverse() else {
                break;
            };
            let next = n - inv * (self.distort(&n) - target);
            let next_res = residual(&next);
            if !(next_res < res) {
                break;
            }
            n = next;
            res = next_res;
            iters += 1;
        }

        if res.is_finite() && res <= UNDISTORT_TOL {
            Ok(n)
        } else {
            Err(CameraError::NoConvergence { residual: res })
        }
    }
}

/// A ray in world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: WorldPoint,
    pub direction: Unit<Vector3<f64>>,
}

impl Ray {
    pub fn new(origin: WorldPoint, direction: Vector3<f64>) -> Self {
        Self { origin, direction: Unit::new_normalize(direction) }
    }

    pub fn point_at(&self, s: f64) -> WorldPoint {
        self.origin + self.direction.into_inner() * s
    }

    /// Distance from `p` to the closest point of the (half-infinite) ray.
    pub fn distance_to(&self, p: &WorldPoint) -> f64 {
        let s = (p - self.origin).dot(&self.direction).max(0.0);
        (p - self.point_at(s)).norm()
    }

    /// Intersects with an axis-aligned plane.
    ///
    /// The returned point's coordinate along the plane axis is exactly the
    /// plane value.
    pub fn intersect_plane(&self, plane: AxisPlane) -> Result<WorldPoint, CameraError> {
        let i = plane.axis.index();
        let dir = self.direction[i];
        if dir.abs() <= PARALLEL_EPS {
            return Err(CameraError::RayParallelToPlane);
        }
        let s = (plane.value - self.origin[i]) / dir;
        if s < 0.0 {
            return Err(CameraError::IntersectionBehindCamera { s });
        }
        let mut p = self.point_at(s);
        p[i] = plane.value;
        Ok(p)
    }
}

/// Free-function form of [`Ray::intersect_plane`].
pub fn intersect_ray_plane(ray: &Ray, plane: AxisPlane) -> Result<WorldPoint, CameraError> {
    ray.intersect_plane(plane)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// The plane `axis = value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisPlane {
    pub axis: Axis,
    pub value: f64,
}

impl AxisPlane {
    pub fn new(axis: Axis, value: f64) -> Self {
        Self { axis, value }
    }

    pub const GROUND: AxisPlane = AxisPlane { axis: Axis::Z, value: 0.0 };
}

/// A failed calibration invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Violation {
    NonFinite,
    FocalNonPositive,
    ImageSizeNonPositive,
    RotationNotOrthonormal,
    RotationNotProper,
    /// Soft check, reported by [`CameraCalibration::physical_warnings`].
    CameraNotAboveGround,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "CalibrationRecord", from = "CalibrationRecord")]
pub struct CameraCalibration {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub distortion: Distortion,
    pub image_width: f64,
    pub image_height: f64,
}

/// On-disk layout; `R` is row-major.
#[derive(Serialize, Deserialize)]
struct CalibrationRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(default)]
    skew: f64,
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
    #[serde(default)]
    dist: Distortion,
    width: f64,
    height: f64,
}

impl From<CameraCalibration> for CalibrationRecord {
    fn from(c: CameraCalibration) -> Self {
        let m = &c.rotation;
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            skew: c.skew,
            r: [
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 0)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 0)],
                m[(2, 1)],
                m[(2, 2)],
            ],
            t: [c.translation.x, c.translation.y, c.translation.z],
            dist: c.distortion,
            width: c.image_width,
            height: c.image_height,
        }
    }
}

impl From<CalibrationRecord> for CameraCalibration {
    fn from(r: CalibrationRecord) -> Self {
        Self {
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            skew: r.skew,
            rotation: Matrix3::from_row_slice(&r.r),
            translation: Vector3::from(r.t),
            distortion: r.dist,
            image_width: r.width,
            image_height: r.height,
        }
    }
}

impl CameraCalibration {
    /// Identity pose, no distortion, no skew.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            skew: 0.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            distortion: Distortion::default(),
            image_width: width,
            image_height: height,
        }
    }

    /// Places the camera at `center` with the given world-to-camera rotation.
    pub fn with_pose(mut self, rotation: Matrix3<f64>, center: WorldPoint) -> Self {
        self.rotation = rotation;
        self.translation = -(rotation * center.coords);
        self
    }

    /// Points the optical axis from `center` toward `target`, image `-y` along `up`.
    pub fn looking_at(
        self,
        center: WorldPoint,
        target: WorldPoint,
        up: Vector3<f64>,
    ) -> Result<Self, CameraError> {
        let forward = (target - center).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 || !forward.iter().all(|v| v.is_finite()) {
            return Err(CameraError::DegenerateLookAt);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation =
            Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Ok(self.with_pose(rotation, center))
    }

    pub fn with_distortion(mut self, distortion: Distortion) -> Self {
        self.distortion = distortion;
        self
    }

    /// Same camera with the lens distortion removed.
    pub fn undistorted(&self) -> Self {
        Self { distortion: Distortion::default(), ..*self }
    }

    /// Camera center `-R^T t`.
    pub fn camera_center(&self) -> WorldPoint {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    pub fn to_camera(&self, p: &WorldPoint) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    /// Depth of `p` along the optical axis.
    pub fn depth(&self, p: &WorldPoint) -> f64 {
        self.to_camera(p).z
    }

    fn normalized_of(&self, p: &WorldPoint) -> Result<Vector2<f64>, CameraError> {
        let pc = self.to_camera(p);
        if pc.z <= DEPTH_EPS {
            return Err(CameraError::DepthNonPositive { depth: pc.z });
        }
        Ok(Vector2::new(pc.x / pc.z, pc.y / pc.z))
    }

    /// Applies the intrinsics to a normalized coordinate.
    pub fn to_pixel(&self, n: &Vector2<f64>) -> ImagePoint {
        Point2::new(self.fx * n.x + self.skew * n.y + self.cx, self.fy * n.y + self.cy)
    }

    /// Inverse of [`CameraCalibration::to_pixel`].
    pub fn normalize(&self, p: &ImagePoint) -> Vector2<f64> {
        let y = (p.y - self.cy) / self.fy;
        let x = (p.x - self.cx - self.skew * y) / self.fx;
        Vector2::new(x, y)
    }

    /// Full projection, lens distortion included.
    pub fn project(&self, p: &WorldPoint) -> Result<ImagePoint, CameraError> {
        let n = self.normalized_of(p)?;
        Ok(self.to_pixel(&self.distortion.distort(&n)))
    }

    /// Projection into undistorted image coordinates.
    pub fn project_undistorted(&self, p: &WorldPoint) -> Result<ImagePoint, CameraError> {
        Ok(self.to_pixel(&self.normalized_of(p)?))
    }

    pub fn distort(&self, n: &Vector2<f64>) -> Vector2<f64> {
        self.distortion.distort(n)
    }

    /// Maps a raw (distorted) pixel to where an ideal pinhole camera would see it.
    pub fn undistort_point(&self, p: &ImagePoint) -> Result<ImagePoint, CameraError> {
        if self.distortion.is_zero() {
            return Ok(*p);
        }
        let n = self.distortion.undistort(&self.normalize(p))?;
        Ok(self.to_pixel(&n))
    }

    /// Ray through an undistorted pixel.
    pub fn back_project(&self, p: &ImagePoint) -> Ray {
        let n = self.normalize(p);
        let dir = self.rotation.transpose() * Vector3::new(n.x, n.y, 1.0);
        Ray::new(self.camera_center(), dir)
    }

    /// Resamples the image by `s`: intrinsics and image size scale, pose and
    /// distortion are unchanged.
    pub fn scaled(&self, s: f64) -> Result<Self, CameraError> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(CameraError::NonPositiveScale(s));
        }
        Ok(Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            skew: self.skew * s,
            image_width: self.image_width * s,
            image_height: self.image_height * s,
            ..*self
        })
    }

    pub fn contains(&self, p: &ImagePoint) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.image_width && p.y <= self.image_height
    }

    /// Hard invariant violations; empty when the calibration is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let scalars = [
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.skew,
            self.image_width,
            self.image_height,
            self.distortion.k1,
            self.distortion.k2,
            self.distortion.k3,
            self.distortion.p1,
            self.distortion.p2,
        ];
        let finite = scalars.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite());
        if !finite {
            out.push(Violation::NonFinite);
            return out;
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            out.push(Violation::FocalNonPositive);
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            out.push(Violation::ImageSizeNonPositive);
        }
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        if gram.amax() >= 1e-9 {
            out.push(Violation::RotationNotOrthonormal);
        }
        if self.rotation.determinant() <= 0.0 {
            out.push(Violation::RotationNotProper);
        }
        out
    }

    /// Physical plausibility checks that do not make the calibration unusable.
    pub fn physical_warnings(&self) -> Vec<Violation> {
        if self.camera_center().z > 0.0 {
            Vec::new()
        } else {
            vec![Violation::CameraNotAboveGround]
        }
    }
}

/// Free-function form of [`CameraCalibration::scaled`].
pub fn scale_calibration(
    cal: &CameraCalibration,
    s: f64,
) -> Result<CameraCalibration, CameraError> {
    cal.scaled(s)
}
