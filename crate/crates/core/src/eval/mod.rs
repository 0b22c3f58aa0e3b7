//! COCO-style detector evaluation.
//!
//! Evaluation runs over an [`EvalSet`]: a list of images, each with pixel
//! dimensions, ground truth and detections. [`match_detections`] performs the
//! greedy confidence-ordered assignment for one `(class, IOU threshold, area
//! range, maxDets)` cell, [`pr_curve`] and [`average_precision`] turn a match
//! into a 101-point AP, and [`full_report`] assembles the twelve-row
//! mAP/mAR table.

mod curve;
mod matching;
mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Detection, Error, GroundTruthBox, Result};

pub use curve::{average_precision, pr_curve, PrecisionRecallCurve, RECALL_SAMPLES};
pub use matching::{match_detections, DetectionMatch, GroundTruthMatch, MatchQuery, MatchResult, Outcome};
pub use report::{full_report, ClassSummary, EvalReport, Metric, ReportRow};

/// Half-open pixel-area interval `[min, max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl AreaRange {
    pub fn new(name: impl Into<String>, min: f64, max: f64) -> Self {
        AreaRange {
            name: name.into(),
            min,
            max,
        }
    }

    pub fn contains(&self, area: f64) -> bool {
        area >= self.min && area < self.max
    }
}

/// The four area buckets of the report. `small`, `medium` and `large` must
/// partition `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRanges {
    pub all: AreaRange,
    pub small: AreaRange,
    pub medium: AreaRange,
    pub large: AreaRange,
}

impl Default for AreaRanges {
    fn default() -> Self {
        let (s, m) = (32.0 * 32.0, 96.0 * 96.0);
        AreaRanges {
            all: AreaRange::new("all", 0.0, f64::INFINITY),
            small: AreaRange::new("small", 0.0, s),
            medium: AreaRange::new("medium", s, m),
            large: AreaRange::new("large", m, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Strictly increasing thresholds in `(0, 1]`.
    pub iou_thresholds: Vec<f64>,
    pub area_ranges: AreaRanges,
    /// Strictly increasing per-image detection caps.
    pub max_dets: Vec<usize>,
    pub num_classes: usize,
}

impl EvalConfig {
    /// Thresholds 0.50, 0.55, ..., 0.95; COCO area buckets; caps 1, 10, 100.
    pub fn coco(num_classes: usize) -> Self {
        EvalConfig {
            iou_thresholds: (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect(),
            area_ranges: AreaRanges::default(),
            max_dets: vec![1, 10, 100],
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.iou_thresholds;
        if t.is_empty() || !t.iter().all(|&v| v > 0.0 && v <= 1.0) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "eval config",
                "IOU thresholds must be strictly increasing within (0, 1]",
            ));
        }
        let m = &self.max_dets;
        if m.is_empty() || m[0] == 0 || m.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("eval config", "maxDets must be positive and strictly increasing"));
        }
        if self.num_classes == 0 {
            return Err(Error::invalid("eval config", "at least one class is required"));
        }
        let a = &self.area_ranges;
        let ok = a.all.min <= 0.0
            && a.all.max == f64::INFINITY
            && a.small.min <= 0.0
            && a.small.max == a.medium.min
            && a.medium.max == a.large.min
            && a.small.min < a.small.max
            && a.medium.min < a.medium.max
            && a.large.min < a.large.max
            && a.large.max == f64::INFINITY;
        if !ok {
            return Err(Error::invalid(
                "eval config",
                "area ranges must be ordered, adjacent and cover [0, inf)",
            ));
        }
        Ok(())
    }

    /// Index of the threshold equal to `t` (within 1e-9).
    pub fn threshold_index(&self, t: f64) -> Option<usize> {
        self.iou_thresholds.iter().position(|&v| (v - t).abs() < 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub ground_truth: Vec<GroundTruthBox>,
    pub detections: Vec<Detection>,
}

/// Images under evaluation, in a fixed order.
///
/// The image list is fixed at construction; attaching ground truth or
/// detections to an id outside it is an error.
#[derive(Debug, Clone, Default)]
pub struct EvalSet {
    images: Vec<ImageEntry>,
    index: HashMap<String, usize>,
}

impl EvalSet {
    pub fn new<I, S>(dims: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u32, u32)>,
        S: Into<String>,
    {
        let mut set = EvalSet::default();
        for (id, width, height) in dims {
            let id = id.into();
            if set.index.contains_key(&id) {
                return Err(Error::invalid("image index", format!("duplicate image id `{id}`")));
            }
            set.index.insert(id.clone(), set.images.len());
            set.images.push(ImageEntry {
                id,
                width,
                height,
                ground_truth: Vec::new(),
                detections: Vec::new(),
            });
        }
        Ok(set)
    }

    fn slot(&mut self, image_id: &str) -> Result<&mut ImageEntry> {
        let i = *self
            .index
            .get(image_id)
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))?;
        Ok(&mut self.images[i])
    }

    pub fn add_ground_truth(&mut self, gt: GroundTruthBox) -> Result<()> {
        let entry = self.slot(&gt.image_id)?;
        entry.ground_truth.push(gt);
        Ok(())
    }

    pub fn add_detections(&mut self, image_id: &str, dets: impl IntoIterator<Item = Detection>) -> Result<()> {
        self.slot(image_id)?.detections.extend(dets);
        Ok(())
    }

    pub fn images(&self) -> &[ImageEntry] {
        &self.images
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageEntry> {
        self.index.get(image_id).map(|&i| &self.images[i])
    }
}
