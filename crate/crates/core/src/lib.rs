//! Monocular 3D ball localization.
//!
//! Given a calibrated camera, the pixel of a ball and its predicted pixel
//! height above the floor, recover the ball's court coordinates. The crate
//! also carries what is needed to study the method without a trained model:
//! a synthetic arena generator, noise-model predictors, a diameter-based
//! baseline and the usual error metrics.
//!
//! ```
//! use courtlift::camera::{CameraCalibration, WorldPoint};
//! use courtlift::reconstruct::{reconstruct_from_height, true_pixel_height};
//! use nalgebra::Vector3;
//!
//! let cal = CameraCalibration::pinhole(2000.0, 2000.0, 2250.0, 750.0, 4500.0, 1500.0)
//!     .looking_at(WorldPoint::new(0.0, -20.0, 3.0), WorldPoint::origin(), Vector3::z())
//!     .unwrap();
//! let ball = WorldPoint::new(1.0, 2.0, 1.5);
//! let px = cal.project(&ball).unwrap();
//! let h = true_pixel_height(&cal, &ball).unwrap();
//! let rec = reconstruct_from_height(&cal, &px, h).unwrap();
//! assert!((rec.ball_3d - ball).norm() < 1e-6);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod dataio;
pub mod experiment;
pub mod metrics;
pub mod predictors;
pub mod reconstruct;
pub mod rng;
pub mod synth;

pub use camera::{
    Axis, AxisPlane, CameraCalibration, CameraError, Distortion, ImagePoint, Ray, WorldPoint,
};
pub use dataio::{DataError, Dataset};
pub use experiment::{ExperimentConfig, Method};
pub use metrics::{AggregateReport, EvalReport};
pub use predictors::{PredictorKind, PredictorSpec};
pub use reconstruct::{ReconstructError, Reconstruction};
pub use synth::{ArenaSpec, BallSample, HeightDistSpec};
