//! Class-wise hard non-maximum suppression.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::geometry::{iou, CornerBox};
use crate::{par, Detection};

/// Descending confidence, ascending index on ties.
fn by_confidence(dets: &[Detection], a: usize, b: usize) -> Ordering {
    dets[b]
        .confidence
        .total_cmp(&dets[a].confidence)
        .then(a.cmp(&b))
}

/// Greedy suppression of one class. Returns the surviving input indices.
fn suppress(dets: &[Detection], mut members: Vec<usize>, iou_threshold: f64) -> Vec<usize> {
    members.sort_by(|&a, &b| by_confidence(dets, a, b));
    let mut kept: Vec<(usize, CornerBox)> = Vec::new();
    for i in members {
        let c = dets[i].bbox.to_corner();
        if kept.iter().all(|(_, k)| iou(k, &c) < iou_threshold) {
            kept.push((i, c));
        }
    }
    kept.into_iter().map(|(i, _)| i).collect()
}

/// Per class, keeps a detection iff its IOU with every higher-ranked kept
/// detection of that class is below `iou_threshold`.
///
/// Output is ordered by confidence descending, then class id, then input
/// index. Boxes are returned unmodified.
pub fn nms_classwise(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        classes.entry(d.class_id).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = classes.into_values().collect();
    let mut kept: Vec<usize> = par::map_slice(&groups, |g| suppress(dets, g.clone(), iou_threshold))
        .into_iter()
        .flatten()
        .collect();
    kept.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then(dets[a].class_id.cmp(&dets[b].class_id))
            .then(a.cmp(&b))
    });
    kept.into_iter().map(|i| dets[i]).collect()
}
