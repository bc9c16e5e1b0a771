//! Synthetic arenas: sideline cameras around a FIBA court and annotated balls.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

use crate::camera::{CameraCalibration, Distortion, ImagePoint, WorldPoint};
use crate::reconstruct::{ground_of, true_diameter_px, true_pixel_height, BASKETBALL_DIAMETER_M};
use crate::rng::{self, domain};

/// Heights are split into a low and a high component at this value, meters.
pub const HIGH_BALL_M: f64 = 3.0;
/// Mean of the (untruncated) exponential used for low balls, meters.
pub const LOW_BALL_MEAN_M: f64 = 1.2;
pub const MAX_BALL_RETRIES: usize = 100;
const MAX_CAMERA_RETRIES: usize = 100;
/// Largest undistortion round-trip error accepted for a generated ball pixel.
const ROUND_TRIP_PX: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("sample {index}: no visible ball after {retries} draws")]
    FrameCoverageFailure { index: u64, retries: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArenaSpec {
    pub court_half_length: f64,
    pub court_half_width: f64,
    pub camera_height_range: [f64; 2],
    /// Horizontal distance of the camera from the court center.
    pub camera_distance_range: [f64; 2],
    pub focal_range: [f64; 2],
    pub image_width: f64,
    pub image_height: f64,
    pub k1_range: [f64; 2],
    pub k2_range: [f64; 2],
    pub ball_diameter_m: f64,
}

impl Default for ArenaSpec {
    fn default() -> Self {
        Self {
            court_half_length: 14.0,
            court_half_width: 7.5,
            camera_height_range: [3.0, 8.0],
            camera_distance_range: [15.0, 30.0],
            focal_range: [1500.0, 3000.0],
            image_width: 4500.0,
            image_height: 1500.0,
            k1_range: [0.0, 0.0],
            k2_range: [0.0, 0.0],
            ball_diameter_m: BASKETBALL_DIAMETER_M,
        }
    }
}

impl ArenaSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ranges = [
            ("camera_height_range", self.camera_height_range),
            ("camera_distance_range", self.camera_distance_range),
            ("focal_range", self.focal_range),
            ("k1_range", self.k1_range),
            ("k2_range", self.k2_range),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(SynthError::InvalidSpec(format!("{name} [{lo}, {hi}] is empty")));
            }
        }
        let positive = [
            ("court_half_length", self.court_half_length),
            ("court_half_width", self.court_half_width),
            ("image_width", self.image_width),
            ("image_height", self.image_height),
            ("ball_diameter_m", self.ball_diameter_m),
            ("focal_range min", self.focal_range[0]),
            ("camera_height_range min", self.camera_height_range[0]),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(SynthError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightDistKind {
    DeepsportLike,
    BallisticLike,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightDistSpec {
    pub kind: HeightDistKind,
    /// Probability of drawing a ball at or above 3 m (ignored by `Uniform`).
    pub p_above_3m: f64,
    pub max_height: f64,
}

impl HeightDistSpec {
    /// 60 of 801 training balls reach 3 m.
    pub fn deepsport_like() -> Self {
        Self { kind: HeightDistKind::DeepsportLike, p_above_3m: 60.0 / 801.0, max_height: 6.0 }
    }

    /// 102 of 233 balls above 3 m.
    pub fn ballistic_like() -> Self {
        Self { kind: HeightDistKind::BallisticLike, p_above_3m: 102.0 / 233.0, max_height: 6.0 }
    }

    pub fn uniform(max_height: f64) -> Self {
        Self { kind: HeightDistKind::Uniform, p_above_3m: 0.0, max_height }
    }

    pub fn of_kind(kind: HeightDistKind) -> Self {
        match kind {
            HeightDistKind::DeepsportLike => Self::deepsport_like(),
            HeightDistKind::BallisticLike => Self::ballistic_like(),
            HeightDistKind::Uniform => Self::uniform(6.0),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.p_above_3m) {
            return Err(SynthError::InvalidSpec(format!(
                "p_above_3m must lie in [0, 1], got {}",
                self.p_above_3m
            )));
        }
        if !(self.max_height > HIGH_BALL_M) {
            return Err(SynthError::InvalidSpec(format!(
                "max_height must exceed {HIGH_BALL_M} m, got {}",
                self.max_height
            )));
        }
        Ok(())
    }
}

/// One annotated ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSample {
    #[serde(rename = "id")]
    pub sample_id: u64,
    #[serde(rename = "arena")]
    pub arena_id: u32,
    pub cal: CameraCalibration,
    pub ball_3d: WorldPoint,
    /// Raw (distorted) pixel of the ball center.
    pub ball_px: ImagePoint,
    /// Raw pixel of the ball's floor projection.
    pub foot_px: ImagePoint,
    /// Pixel height in undistorted image space.
    pub h_true: f64,
    #[serde(rename = "diam_px")]
    pub diameter_px_true: f64,
}

impl BallSample {
    /// Annotates a ball seen by `cal`; `None` when it would not be a usable
    /// annotation (outside the frame, behind the camera, or in a region where
    /// the lens model does not invert).
    pub fn annotate(
        sample_id: u64,
        arena_id: u32,
        cal: &CameraCalibration,
        ball_3d: WorldPoint,
        ball_diameter_m: f64,
    ) -> Option<Self> {
        let ball_px = cal.project(&ball_3d).ok()?;
        if !cal.contains(&ball_px) {
            return None;
        }
        let foot_px = cal.project(&ground_of(&ball_3d)).ok()?;
        let ideal = cal.project_undistorted(&ball_3d).ok()?;
        let recovered = cal.undistort_point(&ball_px).ok()?;
        if (recovered - ideal).norm() > ROUND_TRIP_PX {
            return None;
        }
        Some(Self {
            sample_id,
            arena_id,
            cal: *cal,
            ball_3d,
            ball_px,
            foot_px,
            h_true: true_pixel_height(cal, &ball_3d).ok()?,
            diameter_px_true: true_diameter_px(cal, &ball_3d, ball_diameter_m).ok()?,
        })
    }
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// A sideline camera on a ring around the court, aimed into the court.
pub fn sample_camera<R: Rng>(rng: &mut R, arena: &ArenaSpec) -> CameraCalibration {
    let build = |rng: &mut R, aim_at_center: bool| {
        let azimuth = rng.random_range(0.0..TAU);
        let distance = uniform(rng, arena.camera_distance_range);
        let height = uniform(rng, arena.camera_height_range);
        let center = Point3::new(distance * azimuth.cos(), distance * azimuth.sin(), height);
        let target = if aim_at_center {
            Point3::new(0.0, 0.0, 1.5)
        } else {
            Point3::new(
                uniform(rng, [-arena.court_half_length, arena.court_half_length]),
                uniform(rng, [-arena.court_half_width, arena.court_half_width]),
                uniform(rng, [1.0, 2.0]),
            )
        };
        let f = uniform(rng, arena.focal_range);
        let dist = Distortion::radial(uniform(rng, arena.k1_range), uniform(rng, arena.k2_range));
        CameraCalibration::pinhole(
            f,
            f,
            arena.image_width / 2.0,
            arena.image_height / 2.0,
            arena.image_width,
            arena.image_height,
        )
        .with_distortion(dist)
        .looking_at(center, target, Vector3::z())
        .expect("camera above the aim height is never looking straight down")
    };
    let sees_center = |cal: &CameraCalibration| {
        cal.project(&Point3::origin()).map(|p| cal.contains(&p)).unwrap_or(false)
    };

    for _ in 0..MAX_CAMERA_RETRIES {
        let cal = build(rng, false);
        if sees_center(&cal) {
            return cal;
        }
    }
    build(rng, true)
}

/// Ball position: uniform over the court, height from a low/high mixture.
pub fn sample_ball<R: Rng>(rng: &mut R, arena: &ArenaSpec, dist: &HeightDistSpec) -> WorldPoint {
    let x = uniform(rng, [-arena.court_half_length, arena.court_half_length]);
    let y = uniform(rng, [-arena.court_half_width, arena.court_half_width]);
    let z = match dist.kind {
        HeightDistKind::Uniform => uniform(rng, [0.0, dist.max_height]),
        _ => {
            if rng.random_bool(dist.p_above_3m) {
                uniform(rng, [HIGH_BALL_M, dist.max_height])
            } else {
                truncated_exponential(rng.random::<f64>(), LOW_BALL_MEAN_M, HIGH_BALL_M)
            }
        }
    };
    Point3::new(x, y, z)
}

/// Inverse CDF of an exponential with `mean`, truncated to `[0, upper)`.
fn truncated_exponential(u: f64, mean: f64, upper: f64) -> f64 {
    let mass = 1.0 - (-upper / mean).exp();
    let z = -mean * (-u * mass).ln_1p();
    z.min(upper.next_down())
}

/// Arena cameras for a dataset; arena `a` uses its own stream.
pub fn sample_arenas(seed: u64, arena: &ArenaSpec, n_arenas: u32) -> Vec<CameraCalibration> {
    (0..n_arenas)
        .map(|a| sample_camera(&mut rng::stream(seed, domain::CAMERA, a as u64), arena))
        .collect()
}

/// `n` annotated balls spread round-robin over `n_arenas` cameras.
pub fn generate_dataset(
    seed: u64,
    n: usize,
    arena: &ArenaSpec,
    dist: &HeightDistSpec,
    n_arenas: u32,
) -> Result<Vec<BallSample>, SynthError> {
    arena.validate()?;
    dist.validate()?;
    if n == 0 || n_arenas == 0 {
        return Err(SynthError::InvalidSpec("need at least one sample and one arena".into()));
    }
    let cameras = sample_arenas(seed, arena, n_arenas);
    let results: Vec<Result<BallSample, SynthError>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let arena_id = (i % n_arenas as u64) as u32;
            let cal = &cameras[arena_id as usize];
            let mut rng = rng::stream(seed, domain::BALL, i);
            (0..MAX_BALL_RETRIES)
                .find_map(|_| {
                    let ball = sample_ball(&mut rng, arena, dist);
                    BallSample::annotate(i, arena_id, cal, ball, arena.ball_diameter_m)
                })
                .ok_or(SynthError::FrameCoverageFailure { index: i, retries: MAX_BALL_RETRIES })
        })
        .collect();
    results.into_iter().collect()
}
