//! Predict, reconstruct and score a set of samples, repeated with fresh seeds.
//!
//! Per-sample work runs on the current rayon pool. Results are collected in
//! sample order and every random draw is keyed by `(seed, repeat, sample_id)`,
//! so reports do not depend on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    aggregate_repeats, summarize, AggregateReport, EvalReport, MetricsError, SampleError,
};
use crate::predictors::{
    predict_diameter, predict_height, PredictorError, PredictorKind, PredictorSpec,
};
use crate::reconstruct::{
    reconstruct_from_diameter, reconstruct_from_height, BASKETBALL_DIAMETER_M,
};
use crate::rng::derive_seed;
use crate::synth::BallSample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("repeats must be at least 1")]
    NoRepeats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Pixel height, ground projection, vertical-plane cuts.
    Height,
    /// Apparent diameter baseline.
    Diameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub predictor: PredictorSpec,
    pub repeats: u32,
    pub ball_diameter_m: f64,
}

impl ExperimentConfig {
    pub fn new(method: Method, predictor: PredictorSpec, repeats: u32) -> Self {
        Self { method, predictor, repeats, ball_diameter_m: BASKETBALL_DIAMETER_M }
    }
}

fn score(
    sample: &BallSample,
    spec: &PredictorSpec,
    method: Method,
    ball_diameter_m: f64,
) -> Result<Option<SampleError>, PredictorError> {
    let idx = sample.sample_id;
    Ok(match method {
        Method::Height => {
            let h = predict_height(spec, idx, sample.h_true)?;
            reconstruct_from_height(&sample.cal, &sample.ball_px, h)
                .ok()
                .map(|r| SampleError::new(&sample.ball_3d, &r, Some((h, sample.h_true))))
        }
        Method::Diameter => {
            let d = predict_diameter(spec, idx, sample.diameter_px_true)?;
            reconstruct_from_diameter(&sample.cal, &sample.ball_px, d, ball_diameter_m)
                .ok()
                .map(|r| SampleError::new(&sample.ball_3d, &r, None))
        }
    })
}

/// One evaluation pass with the predictor reseeded for `repeat`.
///
/// Samples whose reconstruction fails are counted in `n_failed` and left out
/// of the metrics.
pub fn run_repeat(
    samples: &[BallSample],
    cfg: &ExperimentConfig,
    repeat: u32,
) -> Result<EvalReport, ExperimentError> {
    cfg.predictor.validate()?;
    let spec = cfg.predictor.with_seed(derive_seed(cfg.predictor.seed, repeat as u64));
    let scored: Vec<Option<SampleError>> = samples
        .par_iter()
        .map(|s| score(s, &spec, cfg.method, cfg.ball_diameter_m))
        .collect::<Result<_, _>>()?;
    let n_failed = scored.iter().filter(|s| s.is_none()).count();
    Ok(summarize(scored.into_iter().flatten().collect(), n_failed)?)
}

pub fn run_experiment(
    samples: &[BallSample],
    cfg: &ExperimentConfig,
) -> Result<(Vec<EvalReport>, AggregateReport), ExperimentError> {
    if cfg.repeats == 0 {
        return Err(ExperimentError::NoRepeats);
    }
    let reports =
        (0..cfg.repeats).map(|r| run_repeat(samples, cfg, r)).collect::<Result<Vec<_>, _>>()?;
    let agg = aggregate_repeats(&reports)?;
    Ok((reports, agg))
}

/// Predictor for one level of a noise sweep: oracle at zero, otherwise `kind`
/// calibrated to `level` mean absolute error.
pub fn sweep_predictor(kind: PredictorKind, level: f64, nu: f64, seed: u64) -> PredictorSpec {
    if level == 0.0 || kind == PredictorKind::Oracle {
        return PredictorSpec::oracle().with_seed(seed);
    }
    PredictorSpec { kind, sigma: 0.0, nu, target_mae: Some(level), seed }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: f64,
    pub report: AggregateReport,
}

/// Runs one experiment per noise level, reusing the seed so every level sees
/// the same underlying draws.
pub fn noise_sweep(
    samples: &[BallSample],
    method: Method,
    kind: PredictorKind,
    nu: f64,
    grid: &[f64],
    repeats: u32,
    seed: u64,
) -> Result<Vec<SweepRow>, ExperimentError> {
    grid.iter()
        .map(|&level| {
            let cfg =
                ExperimentConfig::new(method, sweep_predictor(kind, level, nu, seed), repeats);
            let (_, report) = run_experiment(samples, &cfg)?;
            Ok(SweepRow { level, report })
        })
        .collect()
}
