//! Stand-ins for a learned height regressor: the exact answer, or the exact
//! answer corrupted by seeded Gaussian or Student-t noise.

use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;
use thiserror::Error;

use crate::rng::{self, domain};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictorError {
    #[error("sample {index} has no ground truth")]
    MissingGroundTruth { index: u64 },
    #[error("invalid predictor spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Oracle,
    Gaussian,
    HeavyTailed,
}

/// Noise model configuration.
///
/// For heights `sigma` and `target_mae` are in pixels. For diameters they are
/// relative to the true diameter (0.05 means 5 %).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_mae: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_nu() -> f64 {
    3.0
}

impl Default for PredictorSpec {
    fn default() -> Self {
        Self::oracle()
    }
}

impl PredictorSpec {
    pub fn oracle() -> Self {
        Self {
            kind: PredictorKind::Oracle,
            sigma: 0.0,
            nu: default_nu(),
            target_mae: None,
            seed: 0,
        }
    }

    pub fn gaussian_mae(target_mae: f64, seed: u64) -> Self {
        Self { kind: PredictorKind::Gaussian, target_mae: Some(target_mae), seed, ..Self::oracle() }
    }

    pub fn heavy_tailed_mae(target_mae: f64, nu: f64, seed: u64) -> Self {
        Self {
            kind: PredictorKind::HeavyTailed,
            nu,
            target_mae: Some(target_mae),
            seed,
            ..Self::oracle()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(PredictorError::InvalidSpec(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.kind == PredictorKind::HeavyTailed && !(self.nu > 1.0) {
            return Err(PredictorError::InvalidSpec(format!("nu must be > 1, got {}", self.nu)));
        }
        if let Some(t) = self.target_mae {
            if !(t > 0.0) || !t.is_finite() {
                return Err(PredictorError::InvalidSpec(format!(
                    "target_mae must be > 0, got {t}"
                )));
            }
        }
        Ok(())
    }

    /// Multiplier applied to a unit draw, chosen so that `E|noise|` equals
    /// `target_mae` when one is set.
    pub fn noise_scale(&self) -> f64 {
        match (self.kind, self.target_mae) {
            (PredictorKind::Oracle, _) => 0.0,
            (PredictorKind::Gaussian, Some(t)) => t / gaussian_abs_mean(),
            (PredictorKind::HeavyTailed, Some(t)) => t / student_t_abs_mean(self.nu),
            (_, None) => self.sigma,
        }
    }

    /// Additive noise for stream `index`; zero for the oracle.
    pub fn noise(&self, noise_domain: u64, index: u64) -> f64 {
        let mut rng = rng::stream(self.seed, noise_domain, index);
        let unit: f64 = match self.kind {
            PredictorKind::Oracle => return 0.0,
            PredictorKind::Gaussian => StandardNormal.sample(&mut rng),
            PredictorKind::HeavyTailed => {
                StudentT::new(self.nu).expect("nu validated > 1").sample(&mut rng)
            }
        };
        self.noise_scale() * unit
    }
}

/// `E|Z|` for a standard normal.
pub fn gaussian_abs_mean() -> f64 {
    (2.0 / PI).sqrt()
}

/// `E|T|` for Student-t with `nu > 1` degrees of freedom.
pub fn student_t_abs_mean(nu: f64) -> f64 {
    let log_ratio = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0);
    2.0 * nu.sqrt() * log_ratio.exp() / (PI.sqrt() * (nu - 1.0))
}

/// Predicted pixel height for sample `index`.
pub fn predict_height(
    spec: &PredictorSpec,
    index: u64,
    h_true: f64,
) -> Result<f64, PredictorError> {
    if !h_true.is_finite() {
        return Err(PredictorError::MissingGroundTruth { index });
    }
    Ok(h_true + spec.noise(domain::HEIGHT_NOISE, index))
}

/// Predicted apparent diameter for sample `index`; noise is relative.
pub fn predict_diameter(
    spec: &PredictorSpec,
    index: u64,
    diameter_true: f64,
) -> Result<f64, PredictorError> {
    if !diameter_true.is_finite() {
        return Err(PredictorError::MissingGroundTruth { index });
    }
    Ok(diameter_true * (1.0 + spec.noise(domain::DIAMETER_NOISE, index)))
}
