use serde::{Deserialize, Serialize};

use super::{MatchResult, Outcome};

/// Number of recall sample points for interpolated AP.
pub const RECALL_SAMPLES: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub recall: f64,
    pub precision: f64,
}

/// Cumulative precision/recall along a confidence-ranked sweep.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrecisionRecallCurve {
    pub points: Vec<CurvePoint>,
}

impl PrecisionRecallCurve {
    /// Builds the curve from ranked hit flags (`true` = TP). With no ground
    /// truth, recall is reported as 0.
    pub fn from_hits(hits: impl IntoIterator<Item = bool>, num_gt: usize) -> Self {
        let (mut tp, mut n) = (0usize, 0usize);
        let points = hits
            .into_iter()
            .map(|hit| {
                n += 1;
                tp += usize::from(hit);
                CurvePoint {
                    recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
                    precision: tp as f64 / n as f64,
                }
            })
            .collect();
        PrecisionRecallCurve { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Recall at the end of the sweep.
    pub fn final_recall(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.recall)
    }
}

/// Sweeps the non-ignored detections of `m` in rank order.
pub fn pr_curve(m: &MatchResult, num_gt: usize) -> PrecisionRecallCurve {
    let hits = m.detections.iter().filter_map(|d| match d.outcome {
        Outcome::TruePositive { .. } => Some(true),
        Outcome::FalsePositive => Some(false),
        Outcome::Ignored => None,
    });
    PrecisionRecallCurve::from_hits(hits, num_gt)
}

/// 101-point interpolated AP.
///
/// Precision is replaced by its running maximum from the right, then sampled
/// at recall 0, 0.01, ..., 1 (the first point whose recall reaches each
/// sample; 0 past the end of the curve) and averaged.
pub fn average_precision(curve: &PrecisionRecallCurve) -> f64 {
    let pts = &curve.points;
    if pts.is_empty() {
        return 0.0;
    }
    let mut envelope: Vec<f64> = pts.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len() - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let total: f64 = (0..RECALL_SAMPLES)
        .map(|k| {
            let r = k as f64 / (RECALL_SAMPLES - 1) as f64;
            let at = pts.partition_point(|p| p.recall < r);
            envelope.get(at).copied().unwrap_or(0.0)
        })
        .sum();
    total / RECALL_SAMPLES as f64
}
