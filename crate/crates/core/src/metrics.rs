//! Angular-error evaluation of predicted normal fields.
//!
//! Errors are orientation-aware: the angle between prediction and ground
//! truth ranges over [0, 180] degrees and a flipped normal scores 180, not 0.
//! Zero-norm predictions cannot be normalized; they score 90 degrees (chance
//! level) and are flagged, so an estimator cannot improve its numbers by
//! abstaining.

use thiserror::Error;

use crate::frame::NormalField;

/// Accuracy thresholds (degrees) reported by default.
pub const DEFAULT_THRESHOLDS_DEG: [f64; 5] = [5.0, 7.5, 11.25, 22.5, 30.0];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction has {pred} entries but ground truth has {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("cannot summarize an empty error list")]
    EmptyInput,
    #[error("ground-truth normal {index} is not unit length (norm {norm})")]
    GroundTruthNotUnit { index: usize, norm: f64 },
}

/// Per-point angular errors in degrees plus the indices of zero-norm
/// predictions that were scored at 90 degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularErrors {
    pub degrees: Vec<f64>,
    pub degenerate: Vec<usize>,
}

/// `arccos(clamp(<p/||p||, g>, -1, 1))` in degrees per point. Ground truth
/// must be unit length within 1e-6.
pub fn angular_errors(pred: &NormalField, gt: &NormalField) -> Result<AngularErrors, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    for (i, g) in gt.normals.iter().enumerate() {
        let norm = g.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(MetricsError::GroundTruthNotUnit { index: i, norm });
        }
    }

    let mut degenerate = Vec::new();
    let degrees = pred
        .normals
        .iter()
        .zip(&gt.normals)
        .enumerate()
        .map(|(i, (p, g))| {
            let norm = p.norm();
            if norm <= 1e-12 {
                degenerate.push(i);
                return 90.0;
            }
            let cos = (p.dot(g) / norm).clamp(-1.0, 1.0);
            cos.acos().to_degrees()
        })
        .collect();
    Ok(AngularErrors {
        degrees,
        degenerate,
    })
}

/// Aggregate report over a list of angular errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mean_deg: f64,
    /// Lower of the two middle values for an even count.
    pub median_deg: f64,
    pub rmse_deg: f64,
    /// (threshold degrees, fraction strictly below), ascending by threshold.
    pub threshold_acc: Vec<(f64, f64)>,
    pub runtime_s: f64,
    pub n_points: usize,
}

/// Mean / median / RMSE and strictly-below threshold accuracies.
pub fn summarize(
    errors: &[f64],
    thresholds: &[f64],
    runtime_s: f64,
) -> Result<MetricsReport, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();

    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[(sorted.len() - 1) / 2];

    let mut threshold_acc: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let below = errors.iter().filter(|&&e| e < t).count();
            (t, below as f64 / n)
        })
        .collect();
    threshold_acc.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    Ok(MetricsReport {
        mean_deg: mean,
        median_deg: median,
        rmse_deg: rmse,
        threshold_acc,
        runtime_s,
        n_points: errors.len(),
    })
}

impl MetricsReport {
    /// Canonical textual form: fixed key order, fixed precision. Used for
    /// golden-file comparisons, so any change here is format-breaking.
    pub fn canonical_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "n_points = {}", self.n_points).unwrap();
        writeln!(out, "mean_deg = {:.6}", self.mean_deg).unwrap();
        writeln!(out, "median_deg = {:.6}", self.median_deg).unwrap();
        writeln!(out, "rmse_deg = {:.6}", self.rmse_deg).unwrap();
        for (t, acc) in &self.threshold_acc {
            writeln!(out, "acc_{t:.2}_deg = {acc:.6}").unwrap();
        }
        writeln!(out, "runtime_s = {:.6}", self.runtime_s).unwrap();
        out
    }
}
