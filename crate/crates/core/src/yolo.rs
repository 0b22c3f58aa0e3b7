//! YOLO grid-head decoding.
//!
//! A head for an `S x S` grid with `B` anchors per cell and `C` classes is a
//! `[S, S, B * (4 + 1 + C)]` tensor (rows, columns, channels). Each anchor
//! slot holds `t_x, t_y, t_w, t_h, t_obj` followed by `C` class logits.

use serde::{Deserialize, Serialize};

use crate::tensor::{sigmoid, Tensor};
use crate::{par, BBox, Detection, Error, Result};

/// Box regression attributes per anchor.
pub const BOX_ATTRS: usize = 4;
/// Objectness attributes per anchor.
pub const OBJECTNESS_ATTRS: usize = 1;

/// Width/height prior in normalized image units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YoloHeadSpec {
    pub grid_size: usize,
    pub num_classes: usize,
    pub anchors: Vec<Anchor>,
}

/// Raw outputs for one anchor slot of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCellPrediction {
    pub t_x: f32,
    pub t_y: f32,
    pub t_w: f32,
    pub t_h: f32,
    pub t_obj: f32,
    pub class_logits: Vec<f32>,
}

impl YoloHeadSpec {
    pub fn new(grid_size: usize, num_classes: usize, anchors: Vec<Anchor>) -> Result<Self> {
        let spec = YoloHeadSpec {
            grid_size,
            num_classes,
            anchors,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || self.num_classes == 0 || self.anchors.is_empty() {
            return Err(Error::invalid(
                "yolo head spec",
                "grid size, class count and anchor count must all be positive",
            ));
        }
        if let Some(a) = self
            .anchors
            .iter()
            .find(|a| !(a.width.is_finite() && a.height.is_finite() && a.width > 0.0 && a.height > 0.0))
        {
            return Err(Error::invalid(
                "yolo head spec",
                format!("anchor {}x{} must have positive finite extent", a.width, a.height),
            ));
        }
        Ok(())
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    /// Values per anchor slot: `4 + 1 + C`.
    pub fn slot_len(&self) -> usize {
        BOX_ATTRS + OBJECTNESS_ATTRS + self.num_classes
    }
}

/// Channel depth of the head: `B * (C + 4 + 1)`.
pub fn head_depth(spec: &YoloHeadSpec) -> usize {
    spec.num_anchors() * spec.slot_len()
}

fn check_dims(head: &Tensor, spec: &YoloHeadSpec) -> Result<()> {
    let dims = head.dims();
    if dims.len() != 3 {
        return Err(Error::ShapeMismatch {
            what: "yolo head rank",
            expected: 3,
            actual: dims.len(),
        });
    }
    for (what, axis) in [("yolo head rows", 0), ("yolo head columns", 1)] {
        if dims[axis] != spec.grid_size {
            return Err(Error::ShapeMismatch {
                what,
                expected: spec.grid_size,
                actual: dims[axis],
            });
        }
    }
    let depth = head_depth(spec);
    if dims[2] != depth {
        return Err(Error::ShapeMismatch {
            what: "yolo head depth",
            expected: depth,
            actual: dims[2],
        });
    }
    Ok(())
}

/// Reads the raw slot for `anchor` in cell `(row, col)`.
pub fn raw_prediction(head: &Tensor, spec: &YoloHeadSpec, row: usize, col: usize, anchor: usize) -> RawCellPrediction {
    let depth = head_depth(spec);
    let base = (row * spec.grid_size + col) * depth + anchor * spec.slot_len();
    let s = &head.data()[base..base + spec.slot_len()];
    RawCellPrediction {
        t_x: s[0],
        t_y: s[1],
        t_w: s[2],
        t_h: s[3],
        t_obj: s[4],
        class_logits: s[5..].to_vec(),
    }
}

fn decode_slot(
    slot: &[f32],
    row: usize,
    col: usize,
    grid: f64,
    anchor: &Anchor,
    conf_threshold: f64,
) -> Option<Detection> {
    let (class_id, best) = slot[5..]
        .iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let confidence = sigmoid(f64::from(slot[4])) * sigmoid(f64::from(best));
    if confidence < conf_threshold {
        return None;
    }
    let bbox = BBox::clamped(
        (col as f64 + sigmoid(f64::from(slot[0]))) / grid,
        (row as f64 + sigmoid(f64::from(slot[1]))) / grid,
        anchor.width * f64::from(slot[2]).exp(),
        anchor.height * f64::from(slot[3]).exp(),
    );
    Some(Detection {
        class_id,
        confidence,
        bbox,
    })
}

/// Decodes every cell and anchor, keeping detections whose
/// `sigmoid(t_obj) * sigmoid(best class logit)` reaches `conf_threshold`.
///
/// Output is ordered row-major by cell, then by anchor index.
pub fn decode_yolo(head: &Tensor, spec: &YoloHeadSpec, conf_threshold: f64) -> Result<Vec<Detection>> {
    spec.validate()?;
    check_dims(head, spec)?;
    head.ensure_finite()?;
    let grid = spec.grid_size as f64;
    let depth = head_depth(spec);
    let slot_len = spec.slot_len();
    let data = head.data();
    let cells = spec.grid_size * spec.grid_size;
    let per_cell = par::map_range(cells, |cell| {
        let (row, col) = (cell / spec.grid_size, cell % spec.grid_size);
        let base = cell * depth;
        spec.anchors
            .iter()
            .enumerate()
            .filter_map(|(a, anchor)| {
                let start = base + a * slot_len;
                decode_slot(&data[start..start + slot_len], row, col, grid, anchor, conf_threshold)
            })
            .collect::<Vec<_>>()
    });
    Ok(per_cell.into_iter().flatten().collect())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Analytic inverse of [`decode_yolo`] for one box: the raw slot values that
/// decode to `bbox` with objectness/class probabilities `obj` and `cls`.
///
/// Returns the owning cell `(row, col)` along with the slot. The box center
/// must not lie exactly on a cell boundary.
pub fn encode_box(bbox: &BBox, anchor: &Anchor, grid_size: usize, obj: f64, cls: f64) -> ((usize, usize), [f32; 5], f32) {
    let g = grid_size as f64;
    let col = ((bbox.x_center * g).floor() as usize).min(grid_size - 1);
    let row = ((bbox.y_center * g).floor() as usize).min(grid_size - 1);
    let slot = [
        logit(bbox.x_center * g - col as f64) as f32,
        logit(bbox.y_center * g - row as f64) as f32,
        (bbox.width / anchor.width).ln() as f32,
        (bbox.height / anchor.height).ln() as f32,
        logit(obj) as f32,
    ];
    ((row, col), slot, logit(cls) as f32)
}
