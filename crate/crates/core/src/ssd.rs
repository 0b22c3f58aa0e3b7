//! SSD default boxes and head decoding.
//!
//! Default boxes are laid out per source layer, row-major per cell, then per
//! aspect ratio; the optional extra box of each cell comes last, at scale
//! `sqrt(s_k * s_{k+1})`.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{par, BBox, Detection, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultBoxSpec {
    /// Grid extent of each source feature map (square maps).
    pub feature_map_sizes: Vec<usize>,
    /// One box scale per layer, in `(0, 1]`.
    pub scales: Vec<f64>,
    /// Scale following the last layer; the last layer gets an extra box only
    /// when this is set.
    #[serde(default)]
    pub trailing_scale: Option<f64>,
    /// Aspect ratios per layer, applied in order.
    pub aspect_ratios: Vec<Vec<f64>>,
    /// Decode divisors for `(cx, cy, w, h)`.
    pub variances: [f64; 4],
    /// Emit the geometric-mean-scale box per cell.
    #[serde(default = "yes")]
    pub extra_box: bool,
}

fn yes() -> bool {
    true
}

impl DefaultBoxSpec {
    /// The SSD300 configuration: six layers, 8732 default boxes.
    pub fn ssd300() -> Self {
        let r2 = vec![1.0, 2.0, 0.5];
        let r3 = vec![1.0, 2.0, 0.5, 3.0, 1.0 / 3.0];
        DefaultBoxSpec {
            feature_map_sizes: vec![38, 19, 10, 5, 3, 1],
            scales: [30.0, 60.0, 111.0, 162.0, 213.0, 264.0]
                .iter()
                .map(|s| s / 300.0)
                .collect(),
            trailing_scale: Some(315.0 / 300.0),
            aspect_ratios: vec![r2.clone(), r3.clone(), r3.clone(), r3, r2.clone(), r2],
            variances: [0.1, 0.1, 0.2, 0.2],
            extra_box: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let layers = self.feature_map_sizes.len();
        if layers == 0 {
            return Err(Error::invalid("default box spec", "no feature maps"));
        }
        if self.scales.len() != layers || self.aspect_ratios.len() != layers {
            return Err(Error::invalid(
                "default box spec",
                format!(
                    "{layers} feature maps but {} scales and {} aspect-ratio lists",
                    self.scales.len(),
                    self.aspect_ratios.len()
                ),
            ));
        }
        if self.feature_map_sizes.contains(&0) {
            return Err(Error::invalid("default box spec", "feature map extent must be positive"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.scales.iter().chain(&self.trailing_scale).all(|&s| positive(s)) {
            return Err(Error::invalid("default box spec", "scales must be positive"));
        }
        if !self.aspect_ratios.iter().flatten().all(|&r| positive(r)) {
            return Err(Error::invalid("default box spec", "aspect ratios must be positive"));
        }
        if !self.variances.iter().all(|&v| positive(v)) {
            return Err(Error::invalid("default box spec", "variances must be positive"));
        }
        Ok(())
    }

    fn next_scale(&self, layer: usize) -> Option<f64> {
        self.scales.get(layer + 1).copied().or(self.trailing_scale)
    }

    /// Boxes emitted per cell of `layer`.
    pub fn boxes_per_cell(&self, layer: usize) -> usize {
        let extra = self.extra_box && self.next_scale(layer).is_some();
        self.aspect_ratios[layer].len() + usize::from(extra)
    }

    /// Closed-form total: sum over layers of cells times boxes per cell.
    pub fn num_boxes(&self) -> usize {
        self.feature_map_sizes
            .iter()
            .enumerate()
            .map(|(l, &f)| f * f * self.boxes_per_cell(l))
            .sum()
    }
}

impl Default for DefaultBoxSpec {
    fn default() -> Self {
        DefaultBoxSpec::ssd300()
    }
}

pub fn generate_default_boxes(spec: &DefaultBoxSpec) -> Result<Vec<BBox>> {
    spec.validate()?;
    let mut boxes = Vec::with_capacity(spec.num_boxes());
    for (layer, &fmap) in spec.feature_map_sizes.iter().enumerate() {
        let scale = spec.scales[layer];
        let extra = spec
            .next_scale(layer)
            .filter(|_| spec.extra_box)
            .map(|next| (scale * next).sqrt());
        let f = fmap as f64;
        let per_layer = par::map_range(fmap * fmap, |cell| {
            let cy = ((cell / fmap) as f64 + 0.5) / f;
            let cx = ((cell % fmap) as f64 + 0.5) / f;
            let mut cell_boxes: Vec<BBox> = spec.aspect_ratios[layer]
                .iter()
                .map(|&a| BBox::clamped(cx, cy, scale * a.sqrt(), scale / a.sqrt()))
                .collect();
            if let Some(s) = extra {
                cell_boxes.push(BBox::clamped(cx, cy, s, s));
            }
            cell_boxes
        });
        boxes.extend(per_layer.into_iter().flatten());
    }
    Ok(boxes)
}

/// Raw SSD outputs: `loc` is `[N, 4]`, `scores` is `[N, C + 1]` with the
/// background logit at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SsdRawOutput {
    loc: Tensor,
    scores: Tensor,
}

impl SsdRawOutput {
    pub fn new(loc: Tensor, scores: Tensor) -> Result<Self> {
        let ld = loc.dims();
        if ld.len() != 2 || ld[1] != 4 {
            return Err(Error::invalid(
                "ssd loc tensor",
                format!("expected shape [N, 4], got {ld:?}"),
            ));
        }
        let sd = scores.dims();
        if sd.len() != 2 || sd[1] < 2 {
            return Err(Error::invalid(
                "ssd score tensor",
                format!("expected shape [N, C + 1] with C >= 1, got {sd:?}"),
            ));
        }
        if ld[0] != sd[0] {
            return Err(Error::ShapeMismatch {
                what: "ssd score rows vs loc rows",
                expected: ld[0],
                actual: sd[0],
            });
        }
        Ok(SsdRawOutput { loc, scores })
    }

    pub fn num_boxes(&self) -> usize {
        self.loc.dims()[0]
    }

    /// Foreground classes, excluding background.
    pub fn num_classes(&self) -> usize {
        self.scores.dims()[1] - 1
    }

    pub fn loc(&self) -> &Tensor {
        &self.loc
    }

    pub fn scores(&self) -> &Tensor {
        &self.scores
    }
}

/// Numerically stable softmax in `f64`.
pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (f64::from(v) - f64::from(max)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Applies regression offsets to one default box.
pub fn decode_box(delta: [f64; 4], default: &BBox, variances: &[f64; 4]) -> BBox {
    BBox::clamped(
        default.x_center + delta[0] * variances[0] * default.width,
        default.y_center + delta[1] * variances[1] * default.height,
        default.width * (delta[2] * variances[2]).exp(),
        default.height * (delta[3] * variances[3]).exp(),
    )
}

/// Inverse of [`decode_box`]. Requires positive default extents and a
/// target with positive extent.
pub fn encode_box(target: &BBox, default: &BBox, variances: &[f64; 4]) -> [f64; 4] {
    [
        (target.x_center - default.x_center) / (variances[0] * default.width),
        (target.y_center - default.y_center) / (variances[1] * default.height),
        (target.width / default.width).ln() / variances[2],
        (target.height / default.height).ln() / variances[3],
    ]
}

/// Decodes every default box and emits one detection per foreground class
/// whose softmax probability reaches `conf_threshold`.
///
/// Output is ordered by default-box index, then class id.
pub fn decode_ssd(
    raw: &SsdRawOutput,
    defaults: &[BBox],
    spec: &DefaultBoxSpec,
    conf_threshold: f64,
) -> Result<Vec<Detection>> {
    if raw.num_boxes() != defaults.len() {
        return Err(Error::ShapeMismatch {
            what: "ssd default box count",
            expected: defaults.len(),
            actual: raw.num_boxes(),
        });
    }
    raw.loc.ensure_finite()?;
    raw.scores.ensure_finite()?;
    let width = raw.num_classes() + 1;
    let loc = raw.loc.data();
    let scores = raw.scores.data();
    let per_box = par::map_range(defaults.len(), |i| {
        let probs = softmax(&scores[i * width..(i + 1) * width]);
        let mut out = Vec::new();
        let mut bbox = None;
        for (k, &p) in probs.iter().enumerate().skip(1) {
            if p < conf_threshold {
                continue;
            }
            let b = *bbox.get_or_insert_with(|| {
                let d = &loc[i * 4..i * 4 + 4];
                let delta = [d[0], d[1], d[2], d[3]].map(f64::from);
                decode_box(delta, &defaults[i], &spec.variances)
            });
            out.push(Detection {
                class_id: k - 1,
                confidence: p,
                bbox: b,
            });
        }
        out
    });
    Ok(per_box.into_iter().flatten().collect())
}
