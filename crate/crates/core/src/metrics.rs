//! Average precision and FROC from match results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{MatchResult, PredictionStatus};

/// Matching IoU for mAP.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.1;
/// False positives per image at which FROC sensitivity is read off.
pub const DEFAULT_FPPI_THRESHOLDS: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    /// Exact area under the monotone precision envelope.
    AllPoints,
    /// Mean enveloped precision at recall 0.00, 0.01, ..., 1.00.
    Points101,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub fppi_thresholds: Vec<f64>,
    pub ap_interpolation: ApInterpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            fppi_thresholds: DEFAULT_FPPI_THRESHOLDS.to_vec(),
            ap_interpolation: ApInterpolation::AllPoints,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!("iou_threshold {} must lie in (0, 1]", self.iou_threshold)));
        }
        validate_fppi(&self.fppi_thresholds)
    }
}

fn validate_fppi(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::Config("fppi_thresholds must not be empty".into()));
    }
    if thresholds.iter().any(|&t| !(t > 0.0 && t.is_finite())) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "fppi_thresholds {thresholds:?} must be positive and strictly increasing"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    /// Score of the last prediction included at this point.
    pub score: f64,
}

/// One operating point per distinct score of the non-ignored predictions,
/// in descending score order. Tied predictions enter together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub n_gt: usize,
}

/// Non-ignored predictions pooled over images as `(score, is_tp)`, sorted by
/// descending score; ties keep image order then prediction order.
pub fn pooled_predictions<'a>(matches: impl IntoIterator<Item = &'a MatchResult>) -> (Vec<(f64, bool)>, usize) {
    let mut n_gt = 0;
    let mut pooled = Vec::new();
    for m in matches {
        n_gt += m.n_gt;
        pooled.extend(m.predictions.iter().filter_map(|o| match o.status {
            PredictionStatus::TruePositive(_) => Some((o.score, true)),
            PredictionStatus::FalsePositive => Some((o.score, false)),
            PredictionStatus::Ignored => None,
        }));
    }
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));
    (pooled, n_gt)
}

/// Precision/recall curve of one class pooled across images.
pub fn pr_curve<'a>(matches: impl IntoIterator<Item = &'a MatchResult>) -> Result<PrCurve> {
    let (pooled, n_gt) = pooled_predictions(matches);
    if n_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    Ok(pr_curve_from_pooled(&pooled, n_gt))
}

pub(crate) fn pr_curve_from_pooled(pooled: &[(f64, bool)], n_gt: usize) -> PrCurve {
    let mut tp = 0usize;
    let mut points = Vec::new();
    for (i, &(score, is_tp)) in pooled.iter().enumerate() {
        tp += is_tp as usize;
        if pooled.get(i + 1).map_or(true, |next| next.0 != score) {
            points.push(PrPoint {
                recall: tp as f64 / n_gt as f64,
                precision: tp as f64 / (i + 1) as f64,
                score,
            });
        }
    }
    PrCurve { points, n_gt }
}

pub fn average_precision(curve: &PrCurve, interpolation: ApInterpolation) -> f64 {
    if curve.points.is_empty() {
        return 0.0;
    }
    // Precision envelope: running max from the right.
    let mut envelope: Vec<f64> = curve.points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match interpolation {
        ApInterpolation::AllPoints => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (p, &env) in curve.points.iter().zip(&envelope) {
                if p.recall > prev_recall {
                    ap += (p.recall - prev_recall) * env;
                    prev_recall = p.recall;
                }
            }
            ap
        }
        ApInterpolation::Points101 => {
            let mut sum = 0.0;
            let mut idx = 0;
            for k in 0..=100 {
                let r = k as f64 / 100.0;
                while idx < curve.points.len() && curve.points[idx].recall < r {
                    idx += 1;
                }
                if idx < curve.points.len() {
                    sum += envelope[idx];
                }
            }
            sum / 101.0
        }
    }
}

/// Unweighted mean over classes that have ground truth.
pub fn mean_average_precision(per_class: &[f64]) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocResult {
    pub sensitivities: Vec<f64>,
    pub score: f64,
}

/// FROC over score cutoffs at every distinct score.
///
/// The sensitivity at threshold `t` is the best sensitivity among operating
/// points (including the empty cutoff) whose FPPI does not exceed `t`.
pub fn froc<'a>(matches: impl IntoIterator<Item = &'a MatchResult>, n_images: usize, thresholds: &[f64]) -> Result<FrocResult> {
    validate_fppi(thresholds)?;
    if n_images == 0 {
        return Err(Error::NoImages);
    }
    let (pooled, n_gt) = pooled_predictions(matches);
    if n_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    Ok(froc_from_pooled(&pooled, n_gt, n_images, thresholds))
}

pub(crate) fn froc_from_pooled(pooled: &[(f64, bool)], n_gt: usize, n_images: usize, thresholds: &[f64]) -> FrocResult {
    // (fppi, sensitivity) at each distinct cutoff, FPPI non-decreasing.
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(score, is_tp)) in pooled.iter().enumerate() {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = pooled.get(i + 1).map_or(true, |next| next.0 != score);
        if last_of_group {
            points.push((fp as f64 / n_images as f64, tp as f64 / n_gt as f64));
        }
    }
    let sensitivities: Vec<f64> = thresholds
        .iter()
        .map(|&t| points.iter().filter(|p| p.0 <= t).map(|p| p.1).fold(0.0, f64::max))
        .collect();
    let score = sensitivities.iter().sum::<f64>() / sensitivities.len() as f64;
    FrocResult { sensitivities, score }
}
