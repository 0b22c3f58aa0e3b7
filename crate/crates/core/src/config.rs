//! Pipeline configuration file.
//!
//! A TOML document with optional `[classes]`, `[yolo]`, `[ssd]` and `[eval]`
//! sections; anything omitted falls back to the defaults below.
//!
//! ```toml
//! [classes]
//! names = ["Mask", "Improper", "No-mask", "Glove", "No-glove"]
//!
//! [[yolo.scales]]
//! grid_size = 13
//! anchors = [[0.2788, 0.2163], [0.375, 0.476], [0.8966, 0.7837]]
//!
//! [eval]
//! nms_iou = 0.45
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassTable;
use crate::eval::{AreaRanges, EvalConfig};
use crate::ssd::DefaultBoxSpec;
use crate::yolo::{Anchor, YoloHeadSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YoloScale {
    pub grid_size: usize,
    /// `[width, height]` priors in normalized units.
    pub anchors: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YoloSection {
    pub scales: Vec<YoloScale>,
}

impl Default for YoloSection {
    /// 13/26/52 grids for a 416x416 input with the stock YOLOv3 anchors.
    fn default() -> Self {
        let px = |pairs: [[f64; 2]; 3]| pairs.map(|[w, h]| [w / 416.0, h / 416.0]).to_vec();
        YoloSection {
            scales: vec![
                YoloScale {
                    grid_size: 13,
                    anchors: px([[116.0, 90.0], [156.0, 198.0], [373.0, 326.0]]),
                },
                YoloScale {
                    grid_size: 26,
                    anchors: px([[30.0, 61.0], [62.0, 45.0], [59.0, 119.0]]),
                },
                YoloScale {
                    grid_size: 52,
                    anchors: px([[10.0, 13.0], [16.0, 30.0], [33.0, 23.0]]),
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub iou_thresholds: Vec<f64>,
    pub area_ranges: AreaRanges,
    pub max_dets: Vec<usize>,
    /// IOU threshold for the suppression step.
    pub nms_iou: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let coco = EvalConfig::coco(1);
        EvalSection {
            iou_thresholds: coco.iou_thresholds,
            area_ranges: coco.area_ranges,
            max_dets: coco.max_dets,
            nms_iou: 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassSection {
    pub names: ClassTable,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub classes: ClassSection,
    pub yolo: YoloSection,
    pub ssd: DefaultBoxSpec,
    pub eval: EvalSection,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::parse(path, line, e.message().to_string())
        })?;
        cfg.validate().map_err(|e| Error::parse(path, 0, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.yolo.scales {
            self.yolo_spec(s).validate()?;
        }
        self.ssd.validate()?;
        self.eval_config().validate()?;
        if !(0.0..=1.0).contains(&self.eval.nms_iou) {
            return Err(Error::invalid("eval config", "nms_iou must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn class_table(&self) -> &ClassTable {
        &self.classes.names
    }

    fn yolo_spec(&self, scale: &YoloScale) -> YoloHeadSpec {
        YoloHeadSpec {
            grid_size: scale.grid_size,
            num_classes: self.classes.names.len(),
            anchors: scale
                .anchors
                .iter()
                .map(|&[width, height]| Anchor { width, height })
                .collect(),
        }
    }

    /// The head spec for the scale with this grid size.
    pub fn yolo_spec_for_grid(&self, grid_size: usize) -> Result<YoloHeadSpec> {
        let scale = self
            .yolo
            .scales
            .iter()
            .find(|s| s.grid_size == grid_size)
            .ok_or_else(|| {
                let known: Vec<_> = self.yolo.scales.iter().map(|s| s.grid_size).collect();
                Error::invalid(
                    "yolo config",
                    format!("no scale with grid size {grid_size} (configured: {known:?})"),
                )
            })?;
        let spec = self.yolo_spec(scale);
        spec.validate()?;
        Ok(spec)
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            iou_thresholds: self.eval.iou_thresholds.clone(),
            area_ranges: self.eval.area_ranges.clone(),
            max_dets: self.eval.max_dets.clone(),
            num_classes: self.classes.names.len(),
        }
    }
}
