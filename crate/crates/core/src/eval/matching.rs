use std::cmp::Ordering;

use super::{AreaRange, EvalSet};
use crate::geometry::iou;

/// One evaluation cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchQuery {
    pub class_id: usize,
    pub iou_threshold: f64,
    pub area: AreaRange,
    pub max_dets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Matched the ground truth at this index of the image's ground-truth list.
    TruePositive { gt: usize },
    FalsePositive,
    /// Matched an out-of-range ground truth, or unmatched and itself out of range.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMatch {
    /// Position in [`EvalSet::images`].
    pub image: usize,
    /// Position in that image's detection list.
    pub index: usize,
    pub confidence: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruthMatch {
    pub image: usize,
    pub index: usize,
    /// Outside the area range; never counted as TP or FN.
    pub ignored: bool,
    pub matched: bool,
}

/// Assignment of one evaluation cell.
///
/// `detections` is sorted by confidence descending, ties by image order then
/// detection order. Only the top `max_dets` detections of the class per image
/// appear.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub detections: Vec<DetectionMatch>,
    pub ground_truth: Vec<GroundTruthMatch>,
}

impl MatchResult {
    /// In-range ground truths.
    pub fn num_gt(&self) -> usize {
        self.ground_truth.iter().filter(|g| !g.ignored).count()
    }

    pub fn true_positives(&self) -> usize {
        self.detections
            .iter()
            .filter(|d| matches!(d.outcome, Outcome::TruePositive { .. }))
            .count()
    }

    pub fn false_positives(&self) -> usize {
        self.detections
            .iter()
            .filter(|d| d.outcome == Outcome::FalsePositive)
            .count()
    }

    pub fn false_negatives(&self) -> usize {
        self.ground_truth
            .iter()
            .filter(|g| !g.ignored && !g.matched)
            .count()
    }
}

fn desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

/// Greedy confidence-ordered matching for one cell.
///
/// Per image, the class's detections are ranked by confidence (ties by input
/// order) and cut to `max_dets`. Each detection in turn takes the unmatched
/// ground truth with the highest IOU at or above the threshold, preferring
/// in-range ground truth over out-of-range ground truth. A detection matched
/// to out-of-range ground truth, or unmatched with its own area out of range,
/// is ignored.
pub fn match_detections(set: &EvalSet, query: &MatchQuery) -> MatchResult {
    let mut result = MatchResult::default();
    for (image_idx, image) in set.images().iter().enumerate() {
        let area = |b: &crate::BBox| b.pixel_area(image.width, image.height);

        let mut gts: Vec<(usize, bool)> = image
            .ground_truth
            .iter()
            .enumerate()
            .filter(|(_, g)| g.class_id == query.class_id)
            .map(|(i, g)| (i, !query.area.contains(area(&g.bbox))))
            .collect();
        // In-range first, stable.
        gts.sort_by_key(|&(_, ignored)| ignored);

        let mut dets: Vec<usize> = image
            .detections
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class_id == query.class_id)
            .map(|(i, _)| i)
            .collect();
        dets.sort_by(|&a, &b| {
            desc(image.detections[a].confidence, image.detections[b].confidence).then(a.cmp(&b))
        });
        dets.truncate(query.max_dets);

        let gt_boxes: Vec<_> = gts
            .iter()
            .map(|&(i, _)| image.ground_truth[i].bbox.to_corner())
            .collect();
        let mut taken = vec![false; gts.len()];
        let floor = query.iou_threshold.min(1.0 - 1e-10);

        for &d in &dets {
            let det = &image.detections[d];
            let dbox = det.bbox.to_corner();
            let mut best: Option<usize> = None;
            let mut best_iou = floor;
            for (g, &(_, ignored)) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                if let Some(b) = best {
                    if !gts[b].1 && ignored {
                        break;
                    }
                }
                let v = iou(&dbox, &gt_boxes[g]);
                if v < best_iou {
                    continue;
                }
                best_iou = v;
                best = Some(g);
            }
            let outcome = match best {
                Some(g) => {
                    taken[g] = true;
                    if gts[g].1 {
                        Outcome::Ignored
                    } else {
                        Outcome::TruePositive { gt: gts[g].0 }
                    }
                }
                None if !query.area.contains(area(&det.bbox)) => Outcome::Ignored,
                None => Outcome::FalsePositive,
            };
            result.detections.push(DetectionMatch {
                image: image_idx,
                index: d,
                confidence: det.confidence,
                outcome,
            });
        }
        let mut per_image: Vec<GroundTruthMatch> = gts
            .iter()
            .zip(&taken)
            .map(|(&(index, ignored), &matched)| GroundTruthMatch {
                image: image_idx,
                index,
                ignored,
                matched,
            })
            .collect();
        per_image.sort_by_key(|g| g.index);
        result.ground_truth.extend(per_image);
    }
    // Stable: equal confidences keep image order, then rank within the image.
    result
        .detections
        .sort_by(|a, b| desc(a.confidence, b.confidence));
    result
}
