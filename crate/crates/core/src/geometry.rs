//! Box representations and intersection-over-union.
//!
//! Boxes live in normalized image coordinates: every field of a [`BBox`] is a
//! fraction of the image width or height. Pixel units only appear where file
//! formats or area buckets need them.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Center-form box in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_center: f64,
    pub y_center: f64,
    pub width: f64,
    pub height: f64,
}

/// Corner-form box. Units are whatever the caller uses; [`iou`] is
/// unit-agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// A scored, classified box produced by a decoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    pub confidence: f64,
    pub bbox: BBox,
}

/// A hand-labelled reference box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BBox,
}

fn unit(v: f64) -> bool {
    v.is_finite() && (0.0..=1.0).contains(&v)
}

impl BBox {
    /// Validating constructor: every field must be finite and in `[0, 1]`.
    pub fn new(x_center: f64, y_center: f64, width: f64, height: f64) -> Result<Self> {
        let b = BBox {
            x_center,
            y_center,
            width,
            height,
        };
        b.validate()?;
        Ok(b)
    }

    /// Builds a box with each field clamped into `[0, 1]`.
    ///
    /// Decoders use this so that extreme regression outputs still produce a
    /// valid box. NaN inputs map to 0.
    pub fn clamped(x_center: f64, y_center: f64, width: f64, height: f64) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        BBox {
            x_center: c(x_center),
            y_center: c(y_center),
            width: c(width),
            height: c(height),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.x_center, self.y_center, self.width, self.height];
        if fields.iter().all(|&v| unit(v)) {
            Ok(())
        } else {
            Err(Error::invalid(
                "box",
                format!(
                    "fields must be finite and within [0, 1], got ({}, {}, {}, {})",
                    self.x_center, self.y_center, self.width, self.height
                ),
            ))
        }
    }

    pub fn to_corner(&self) -> CornerBox {
        center_to_corner(self)
    }

    /// Area in pixels for an image of the given size.
    pub fn pixel_area(&self, image_width: u32, image_height: u32) -> f64 {
        self.width * f64::from(image_width) * self.height * f64::from(image_height)
    }
}

impl CornerBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let ok = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite())
            && x_min <= x_max
            && y_min <= y_max;
        if !ok {
            return Err(Error::invalid(
                "corner box",
                format!("({x_min}, {y_min}, {x_max}, {y_max}) is not ordered"),
            ));
        }
        Ok(CornerBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_center(&self) -> BBox {
        corner_to_center(self)
    }
}

impl Detection {
    pub fn new(class_id: usize, confidence: f64, bbox: BBox) -> Result<Self> {
        if !(confidence.is_finite() && (0.0..=1.0).contains(&confidence)) {
            return Err(Error::invalid(
                "detection",
                format!("confidence {confidence} outside [0, 1]"),
            ));
        }
        bbox.validate()?;
        Ok(Detection {
            class_id,
            confidence,
            bbox,
        })
    }
}

impl GroundTruthBox {
    pub fn new(image_id: impl Into<String>, class_id: usize, bbox: BBox) -> Result<Self> {
        bbox.validate()?;
        Ok(GroundTruthBox {
            image_id: image_id.into(),
            class_id,
            bbox,
        })
    }
}

pub fn center_to_corner(b: &BBox) -> CornerBox {
    let hw = b.width / 2.0;
    let hh = b.height / 2.0;
    CornerBox {
        x_min: b.x_center - hw,
        y_min: b.y_center - hh,
        x_max: b.x_center + hw,
        y_max: b.y_center + hh,
    }
}

pub fn corner_to_center(c: &CornerBox) -> BBox {
    BBox {
        x_center: (c.x_min + c.x_max) / 2.0,
        y_center: (c.y_min + c.y_max) / 2.0,
        width: c.x_max - c.x_min,
        height: c.y_max - c.y_min,
    }
}

/// Intersection area over union area. Two zero-area boxes score 0.
pub fn iou(a: &CornerBox, b: &CornerBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// [`iou`] for two center-form boxes.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    iou(&a.to_corner(), &b.to_corner())
}
