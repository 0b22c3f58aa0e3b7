//! Post-processing and evaluation toolkit for single-shot object detectors.
//!
//! The crate covers the path from a raw detector head to a COCO-style
//! metric table:
//!
//! * [`tensor`]: a small dense tensor with convolution, activation and pooling,
//!   plus the `TNSR` binary file format used for head tensors.
//! * [`yolo`] and [`ssd`]: decoders for YOLO grid heads and SSD default-box heads.
//! * [`nms`]: class-wise hard non-maximum suppression.
//! * [`eval`]: greedy matching, precision/recall curves, 101-point AP and the
//!   twelve-row mAP/mAR report.
//! * [`dataset`] and [`augment`]: annotation corpora, class statistics,
//!   up-sampling, splitting, and box-aware image augmentation.
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature is
//! enabled (the default). Every parallel path produces output identical to
//! the sequential one.

pub mod augment;
pub mod config;
pub mod dataset;
pub mod detfile;
mod error;
pub mod eval;
pub mod geometry;
pub mod nms;
mod par;
pub mod ssd;
pub mod tensor;
pub mod yolo;

pub use error::{Error, Result};
pub use geometry::{iou, BBox, CornerBox, Detection, GroundTruthBox};
