//! Ball position from its pixel and its pixel height above the ground.
//!
//! The pixel height `h` is the image distance between the ball and its
//! vertical projection on the floor. Walking `h` pixels from the ball along the
//! local image vertical gives the foot pixel; its ray hits the floor at
//! `(X, Y, 0)`. The ball ray is then cut by the vertical planes `X = X` and
//! `Y = Y` through that floor point and the two cuts are averaged.

use nalgebra::{Point2, Similarity2, Translation2, UnitComplex, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{
    Axis, AxisPlane, CameraCalibration, CameraError, ImagePoint, WorldPoint, PARALLEL_EPS,
};

/// World height of the probe used to read off the image vertical, meters.
pub const VERTICAL_PROBE_M: f64 = 0.1;
/// Below this probe displacement (pixels) the vertical is considered invisible.
pub const DEGENERATE_VERTICAL_PX: f64 = 1e-6;
/// Distance along the ray used as reference point when the ray misses the floor.
const SKY_REFERENCE_M: f64 = 10.0;
pub const FOOT_TOL_PX: f64 = 0.01;
pub const FOOT_MAX_ITERS: usize = 5;
/// Official basketball diameter, meters.
pub const BASKETBALL_DIAMETER_M: f64 = 0.24;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ReconstructError {
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("world vertical projects to a point here ({displacement_px:e} px per probe)")]
    DegenerateVertical { displacement_px: f64 },
    #[error("foot pixel ray does not reach the ground: {0}")]
    GroundIntersectionFailed(CameraError),
    #[error("ball ray is parallel to both vertical planes")]
    BothPlanesDegenerate,
    #[error("apparent diameter must be positive, got {0}")]
    NonPositiveDiameter(f64),
}

/// Unit image direction pointing toward the ground, plus its angle from `+y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalDirection {
    pub direction: Vector2<f64>,
    /// `atan2(dx, dy)`: zero when the world vertical runs down the image column.
    pub angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub ball_3d: WorldPoint,
    pub ground_projection: WorldPoint,
    /// Undistorted image coordinates.
    pub foot_pixel: ImagePoint,
    pub vertical_angle: f64,
    /// Distance between the two plane cuts before averaging.
    pub plane_gap: f64,
}

/// Image vertical at an undistorted pixel.
///
/// The probe sits on the ray through `ball_px`, at its floor intersection when
/// there is one and a fixed distance along the ray otherwise. Every point of
/// that ray has the same vertical image line (the line through the pixel and
/// the vertical vanishing point), so the choice only matters for conditioning.
pub fn vertical_direction(
    cal: &CameraCalibration,
    ball_px: &ImagePoint,
) -> Result<VerticalDirection, ReconstructError> {
    let ray = cal.back_project(ball_px);
    let reference =
        ray.intersect_plane(AxisPlane::GROUND).unwrap_or_else(|_| ray.point_at(SKY_REFERENCE_M));
    vertical_at(cal, &reference)
}

/// Image vertical at the projection of a world point.
pub fn vertical_at(
    cal: &CameraCalibration,
    point: &WorldPoint,
) -> Result<VerticalDirection, ReconstructError> {
    let low = cal.project_undistorted(point)?;
    let high = cal.project_undistorted(&(point + Vector3::new(0.0, 0.0, VERTICAL_PROBE_M)))?;
    let d = low - high;
    let len = d.norm();
    if !(len >= DEGENERATE_VERTICAL_PX) {
        return Err(ReconstructError::DegenerateVertical { displacement_px: len });
    }
    let direction = d / len;
    Ok(VerticalDirection { direction, angle: direction.x.atan2(direction.y) })
}

/// Foot pixel `h` pixels below an undistorted ball pixel.
pub fn foot_pixel(
    cal: &CameraCalibration,
    ball_px: &ImagePoint,
    h: f64,
) -> Result<ImagePoint, ReconstructError> {
    let v0 = vertical_direction(cal, ball_px)?;
    refine_foot(cal, ball_px, h, &v0)
}

fn refine_foot(
    cal: &CameraCalibration,
    ball_px: &ImagePoint,
    h: f64,
    v0: &VerticalDirection,
) -> Result<ImagePoint, ReconstructError> {
    let mut foot = ball_px + v0.direction * h;
    if h == 0.0 {
        return Ok(foot);
    }
    for _ in 0..FOOT_MAX_ITERS {
        let v = vertical_direction(cal, &foot)?;
        let next = ball_px + v.direction * h;
        let step = (next - foot).norm();
        foot = next;
        if step < FOOT_TOL_PX {
            break;
        }
    }
    Ok(foot)
}

/// Reconstructs the ball from its raw (distorted) pixel and pixel height.
///
/// Negative `h` is accepted and may put the ball below the floor; callers
/// see the outlier instead of a clamped value.
pub fn reconstruct_from_height(
    cal: &CameraCalibration,
    ball_px_raw: &ImagePoint,
    h: f64,
) -> Result<Reconstruction, ReconstructError> {
    let ball_px = cal.undistort_point(ball_px_raw)?;
    let vertical = vertical_direction(cal, &ball_px)?;
    let foot = refine_foot(cal, &ball_px, h, &vertical)?;
    let ground = cal
        .back_project(&foot)
        .intersect_plane(AxisPlane::GROUND)
        .map_err(ReconstructError::GroundIntersectionFailed)?;

    if h == 0.0 {
        return Ok(Reconstruction {
            ball_3d: ground,
            ground_projection: ground,
            foot_pixel: foot,
            vertical_angle: vertical.angle,
            plane_gap: 0.0,
        });
    }

    let ray = cal.back_project(&ball_px);
    let cut = |axis: Axis| {
        if ray.direction[axis.index()].abs() < PARALLEL_EPS {
            return None;
        }
        ray.intersect_plane(AxisPlane::new(axis, ground[axis.index()])).ok()
    };
    let (ball_3d, plane_gap) = match (cut(Axis::X), cut(Axis::Y)) {
        (Some(a), Some(b)) => (nalgebra::center(&a, &b), (a - b).norm()),
        (Some(p), None) | (None, Some(p)) => (p, 0.0),
        (None, None) => return Err(ReconstructError::BothPlanesDegenerate),
    };

    Ok(Reconstruction {
        ball_3d,
        ground_projection: ground,
        foot_pixel: foot,
        vertical_angle: vertical.angle,
        plane_gap,
    })
}

/// Pixel distance between a ball and its floor projection in undistorted image space.
pub fn true_pixel_height(
    cal: &CameraCalibration,
    ball_3d: &WorldPoint,
) -> Result<f64, CameraError> {
    let ball = cal.project_undistorted(ball_3d)?;
    let foot = cal.project_undistorted(&ground_of(ball_3d))?;
    Ok((ball - foot).norm())
}

pub fn ground_of(p: &WorldPoint) -> WorldPoint {
    WorldPoint::new(p.x, p.y, 0.0)
}

pub fn mean_focal(cal: &CameraCalibration) -> f64 {
    0.5 * (cal.fx + cal.fy)
}

/// Apparent diameter in pixels of a sphere of `ball_diameter_m` at `p`.
pub fn true_diameter_px(
    cal: &CameraCalibration,
    p: &WorldPoint,
    ball_diameter_m: f64,
) -> Result<f64, CameraError> {
    let depth = cal.depth(p);
    if depth <= crate::camera::DEPTH_EPS {
        return Err(CameraError::DepthNonPositive { depth });
    }
    Ok(mean_focal(cal) * ball_diameter_m / depth)
}

/// Size-based baseline: depth from the apparent diameter by similar triangles,
/// then the point at that depth on the ball ray.
pub fn reconstruct_from_diameter(
    cal: &CameraCalibration,
    ball_px_raw: &ImagePoint,
    diameter_px: f64,
    ball_diameter_m: f64,
) -> Result<Reconstruction, ReconstructError> {
    if !(diameter_px > 0.0) {
        return Err(ReconstructError::NonPositiveDiameter(diameter_px));
    }
    if !(ball_diameter_m > 0.0) {
        return Err(ReconstructError::NonPositiveDiameter(ball_diameter_m));
    }
    let ball_px = cal.undistort_point(ball_px_raw)?;
    let depth = mean_focal(cal) * ball_diameter_m / diameter_px;
    let ray = cal.back_project(&ball_px);
    let along_axis = (cal.rotation * ray.direction.into_inner()).z;
    let ball_3d = ray.point_at(depth / along_axis);
    let ground = ground_of(&ball_3d);
    // Diagnostics only: when the floor point cannot be imaged they fall back
    // to the ball pixel and a zero angle.
    let foot = cal.project_undistorted(&ground).unwrap_or(ball_px);
    let vertical_angle = vertical_at(cal, &ball_3d).map(|v| v.angle).unwrap_or(0.0);
    Ok(Reconstruction {
        ball_3d,
        ground_projection: ground,
        foot_pixel: foot,
        vertical_angle,
        plane_gap: 0.0,
    })
}

/// Similarity from raw image coordinates to a square crop centered on the
/// ball, rotated so the local world vertical runs along crop `+y`.
pub fn crop_transform(
    cal: &CameraCalibration,
    ball_px_raw: &ImagePoint,
    crop_size: f64,
    scale: f64,
) -> Result<Similarity2<f64>, ReconstructError> {
    if !(scale > 0.0) {
        return Err(CameraError::NonPositiveScale(scale).into());
    }
    let ball_px = cal.undistort_point(ball_px_raw)?;
    let vertical = vertical_direction(cal, &ball_px)?;
    let rotation = UnitComplex::new(vertical.angle);
    let center = Vector2::new(crop_size / 2.0, crop_size / 2.0);
    let offset = center - (rotation * ball_px_raw.coords) * scale;
    Ok(Similarity2::from_parts(Translation2::from(offset), rotation, scale))
}

/// Maps an image point through a crop transform.
pub fn to_crop(transform: &Similarity2<f64>, p: &ImagePoint) -> Point2<f64> {
    transform * p
}
