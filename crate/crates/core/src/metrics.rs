//! Localization error metrics and aggregation over repeated runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::WorldPoint;
use crate::reconstruct::Reconstruction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("bin edges must be finite and strictly increasing with at least two edges")]
    BadBins,
}

/// Per-sample errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    /// `|h_pred - h_true|`, pixels. Absent for methods that do not predict a height.
    pub h_err_px: Option<f64>,
    /// Floor-plane distance between predicted and true ground projections.
    pub proj_err_m: f64,
    pub err3d_m: f64,
}

impl SampleError {
    pub fn new(truth: &WorldPoint, rec: &Reconstruction, height: Option<(f64, f64)>) -> Self {
        let dx = rec.ground_projection.x - truth.x;
        let dy = rec.ground_projection.y - truth.y;
        Self {
            h_err_px: height.map(|(pred, t)| (pred - t).abs()),
            proj_err_m: dx.hypot(dy),
            err3d_m: (rec.ball_3d - truth).norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` for the diameter baseline.
    pub mae_px: Option<f64>,
    pub mape_m: f64,
    pub mdnape_m: f64,
    pub ma3de_m: f64,
    pub mdna3de_m: f64,
    /// Samples that produced a reconstruction.
    pub n_samples: usize,
    /// Samples whose reconstruction failed; excluded from the metrics.
    #[serde(default)]
    pub n_failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sample_errors: Option<Vec<SampleError>>,
}

/// Sum with a fixed pairwise reduction tree.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Median; the midpoint of the central pair for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample standard deviation (`n - 1` denominator, zero for a single value).
///
/// Works on values shifted by the first one, so identical inputs give
/// exactly zero.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let d: Vec<f64> = xs.iter().map(|x| x - xs[0]).collect();
    let m = mean(&d);
    let sq: Vec<f64> = d.iter().map(|x| (x - m) * (x - m)).collect();
    (pairwise_sum(&sq) / (xs.len() - 1) as f64).sqrt()
}

/// Reduces per-sample errors to the five metrics.
pub fn summarize(errors: Vec<SampleError>, n_failed: usize) -> Result<EvalReport, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let proj: Vec<f64> = errors.iter().map(|e| e.proj_err_m).collect();
    let err3d: Vec<f64> = errors.iter().map(|e| e.err3d_m).collect();
    let h: Option<Vec<f64>> = errors.iter().map(|e| e.h_err_px).collect();
    Ok(EvalReport {
        mae_px: h.as_deref().map(mean),
        mape_m: mean(&proj),
        mdnape_m: median(&proj),
        ma3de_m: mean(&err3d),
        mdna3de_m: median(&err3d),
        n_samples: errors.len(),
        n_failed,
        per_sample_errors: Some(errors),
    })
}

/// Scores reconstructions against the true ball positions.
///
/// `heights` pairs each predicted pixel height with its ground truth; pass
/// `None` for methods that do not predict one.
pub fn evaluate(
    truths: &[WorldPoint],
    reconstructions: &[Reconstruction],
    heights: Option<&[(f64, f64)]>,
) -> Result<EvalReport, MetricsError> {
    if truths.len() != reconstructions.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "{} samples vs {} reconstructions",
            truths.len(),
            reconstructions.len()
        )));
    }
    if let Some(h) = heights {
        if h.len() != truths.len() {
            return Err(MetricsError::LengthMismatch(format!(
                "{} samples vs {} predictions",
                truths.len(),
                h.len()
            )));
        }
    }
    let errors = truths
        .iter()
        .zip(reconstructions)
        .enumerate()
        .map(|(i, (t, r))| SampleError::new(t, r, heights.map(|h| h[i])))
        .collect();
    summarize(errors, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        Self { mean: mean(xs), std: sample_std(xs) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub k: usize,
    pub n_samples: usize,
    pub n_failed: MeanStd,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae_px: Option<MeanStd>,
    pub mape_m: MeanStd,
    pub mdnape_m: MeanStd,
    pub ma3de_m: MeanStd,
    pub mdna3de_m: MeanStd,
}

impl AggregateReport {
    /// Metric rows in report order.
    pub fn rows(&self) -> Vec<(&'static str, MeanStd)> {
        let mut rows = Vec::new();
        if let Some(m) = self.mae_px {
            rows.push(("mae_px", m));
        }
        rows.extend([
            ("mape_m", self.mape_m),
            ("mdnape_m", self.mdnape_m),
            ("ma3de_m", self.ma3de_m),
            ("mdna3de_m", self.mdna3de_m),
        ]);
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,std\n");
        for (name, m) in self.rows() {
            out.push_str(&format!("{name},{},{}\n", m.mean, m.std));
        }
        out
    }
}

/// Mean and sample std of each metric over `k` repeats.
///
/// Repeats must cover the same samples, counting failures.
pub fn aggregate_repeats(reports: &[EvalReport]) -> Result<AggregateReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::EmptyInput)?;
    let total = first.n_samples + first.n_failed;
    if let Some(r) = reports.iter().find(|r| r.n_samples + r.n_failed != total) {
        return Err(MetricsError::LengthMismatch(format!(
            "repeat covers {} samples, expected {total}",
            r.n_samples + r.n_failed
        )));
    }
    let col = |f: fn(&EvalReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    let mae: Option<Vec<f64>> = reports.iter().map(|r| r.mae_px).collect();
    Ok(AggregateReport {
        k: reports.len(),
        n_samples: total,
        n_failed: col(|r| r.n_failed as f64),
        mae_px: mae.as_deref().map(MeanStd::of),
        mape_m: col(|r| r.mape_m),
        mdnape_m: col(|r| r.mdnape_m),
        ma3de_m: col(|r| r.ma3de_m),
        mdna3de_m: col(|r| r.mdna3de_m),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightHistogram {
    pub edges: Vec<f64>,
    /// `counts[i]` covers `[edges[i], edges[i + 1])`.
    pub counts: Vec<usize>,
    pub underflow: usize,
    /// Heights at or above the last edge.
    pub overflow: usize,
}

impl HeightHistogram {
    pub fn total(&self) -> usize {
        self.underflow + self.overflow + self.counts.iter().sum::<usize>()
    }
}

/// Histogram of ball heights (world `Z`).
pub fn height_histogram(heights: &[f64], edges: &[f64]) -> Result<HeightHistogram, MetricsError> {
    if edges.len() < 2
        || edges.iter().any(|e| !e.is_finite())
        || edges.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(MetricsError::BadBins);
    }
    let mut hist = HeightHistogram {
        edges: edges.to_vec(),
        counts: vec![0; edges.len() - 1],
        underflow: 0,
        overflow: 0,
    };
    for &z in heights {
        if z < edges[0] {
            hist.underflow += 1;
        } else if z >= edges[edges.len() - 1] {
            hist.overflow += 1;
        } else {
            // last edge <= z is bin index
            let i = edges.partition_point(|&e| e <= z) - 1;
            hist.counts[i] += 1;
        }
    }
    Ok(hist)
}
