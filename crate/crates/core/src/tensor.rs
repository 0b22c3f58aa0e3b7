//! Dense row-major `f32` tensors and a toy layer set: convolution,
//! elementwise activation and windowed pooling.
//!
//! Layouts are channel-first (`[C, H, W]`). Convolution is cross-correlation
//! with valid padding; output extents are `floor((in - k) / stride) + 1`.
//! Reductions accumulate in `f64` in a fixed order, so results are identical
//! with and without the `parallel` feature.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{par, Error, Result};

const MAGIC: &[u8; 4] = b"TNSR";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid("tensor", format!("zero extent in {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                what: "tensor data length",
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n = dims.iter().product();
        Tensor::new(dims, vec![0.0; n])
    }

    pub fn from_fn(dims: Vec<usize>, f: impl FnMut(usize) -> f32) -> Result<Self> {
        let n = dims.iter().product();
        Tensor::new(dims, (0..n).map(f).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat offset of a multi-index. Panics on rank or bounds violations.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len(), "index rank");
        index.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {i} out of bounds for extent {d}");
            acc * d + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f32 {
        self.data[self.offset(index)]
    }

    /// Errors on the first NaN or infinity.
    pub fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                index,
                value: self.data[index],
            }),
            None => Ok(()),
        }
    }

    fn chw(&self, what: &'static str) -> Result<(usize, usize, usize)> {
        match *self.dims.as_slice() {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::ShapeMismatch {
                what,
                expected: 3,
                actual: self.dims.len(),
            }),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * (self.dims.len() + self.data.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::invalid("TNSR stream", reason.to_string());
        let mut words = bytes
            .get(4..)
            .filter(|_| &bytes[..4] == MAGIC)
            .ok_or_else(|| bad("missing TNSR magic"))?
            .chunks(4);
        let mut next = |what: &str| -> Result<[u8; 4]> {
            words
                .next()
                .and_then(|w| <[u8; 4]>::try_from(w).ok())
                .ok_or_else(|| bad(&format!("truncated {what}")))
        };
        let ndim = u32::from_le_bytes(next("rank")?) as usize;
        let dims = (0..ndim)
            .map(|_| next("extent").map(|w| u32::from_le_bytes(w) as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|_| next("payload").map(f32::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        if next("trailer").is_ok() {
            return Err(bad("trailing bytes after payload"));
        }
        Tensor::new(dims, data)
    }

    pub fn read_from(mut reader: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        reader
            .read_to_end(&mut buf)
            .map_err(|e| Error::io("<reader>", e))?;
        Tensor::from_bytes(&buf)
    }

    pub fn write_to(&self, mut writer: impl Write) -> std::io::Result<()> {
        writer.write_all(&self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Tensor::from_bytes(&bytes).map_err(|e| match e {
            Error::Invalid { reason, .. } => Error::parse(path, 0, reason),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Convolution weights. `kernels` has shape `[out, in, kh, kw]`; `biases`
/// holds one value per *input* channel, added inside the sum over inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    kernels: Tensor,
    biases: Vec<f32>,
    stride: usize,
}

impl ConvLayer {
    pub fn new(kernels: Tensor, biases: Vec<f32>, stride: usize) -> Result<Self> {
        if kernels.dims().len() != 4 {
            return Err(Error::ShapeMismatch {
                what: "kernel rank",
                expected: 4,
                actual: kernels.dims().len(),
            });
        }
        let inputs = kernels.dims()[1];
        if biases.len() != inputs {
            return Err(Error::ShapeMismatch {
                what: "bias count (one per input channel)",
                expected: inputs,
                actual: biases.len(),
            });
        }
        if stride == 0 {
            return Err(Error::invalid("conv layer", "stride must be positive"));
        }
        Ok(ConvLayer {
            kernels,
            biases,
            stride,
        })
    }

    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    pub fn biases(&self) -> &[f32] {
        &self.biases
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn output_channels(&self) -> usize {
        self.kernels.dims()[0]
    }

    pub fn input_channels(&self) -> usize {
        self.kernels.dims()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl ActivationKind {
    pub fn apply(self, v: f32) -> f32 {
        match self {
            ActivationKind::Tanh => v.tanh(),
            ActivationKind::Relu => v.max(0.0),
            ActivationKind::Sigmoid => sigmoid(f64::from(v)) as f32,
            ActivationKind::Identity => v,
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Min,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
    pub mode: PoolMode,
}

impl PoolSpec {
    pub fn new(window: usize, stride: usize, mode: PoolMode) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::invalid("pool spec", "window and stride must be positive"));
        }
        Ok(PoolSpec {
            window,
            stride,
            mode,
        })
    }
}

fn out_extent(input: usize, window: usize, stride: usize) -> usize {
    (input - window) / stride + 1
}

/// Valid-padding cross-correlation of a `[in, H, W]` tensor.
///
/// Output channel `i` at `(y, x)` is `sum_j (K_ij (*) input_j + bias_j)`,
/// accumulated in `f64`: per input channel the window products in row-major
/// kernel order, then that channel's bias.
pub fn convolve2d(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    let (cin, h, w) = input.chw("convolution input rank")?;
    let kd = layer.kernels.dims();
    let (cout, kh, kw) = (kd[0], kd[2], kd[3]);
    if cin != layer.input_channels() {
        return Err(Error::ShapeMismatch {
            what: "input channels",
            expected: layer.input_channels(),
            actual: cin,
        });
    }
    if kh > h {
        return Err(Error::ShapeMismatch {
            what: "kernel height (must not exceed input height)",
            expected: h,
            actual: kh,
        });
    }
    if kw > w {
        return Err(Error::ShapeMismatch {
            what: "kernel width (must not exceed input width)",
            expected: w,
            actual: kw,
        });
    }
    let s = layer.stride;
    let (oh, ow) = (out_extent(h, kh, s), out_extent(w, kw, s));
    let x = input.data();
    let k = layer.kernels.data();
    let plane = oh * ow;

    let mut out = vec![0.0f32; cout * plane];
    par::for_each_chunk_mut(&mut out, plane, |i, dst| {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f64;
                for j in 0..cin {
                    let kbase = (i * cin + j) * kh * kw;
                    let xbase = j * h * w;
                    for ky in 0..kh {
                        let xrow = xbase + (oy * s + ky) * w + ox * s;
                        let krow = kbase + ky * kw;
                        for kx in 0..kw {
                            acc += f64::from(k[krow + kx]) * f64::from(x[xrow + kx]);
                        }
                    }
                    acc += f64::from(layer.biases[j]);
                }
                dst[oy * ow + ox] = acc as f32;
            }
        }
    });
    Tensor::new(vec![cout, oh, ow], out)
}

pub fn activate(t: &Tensor, kind: ActivationKind) -> Tensor {
    Tensor {
        dims: t.dims.clone(),
        data: t.data.iter().map(|&v| kind.apply(v)).collect(),
    }
}

/// Per-channel windowed reduction over a `[C, H, W]` tensor.
pub fn pool(t: &Tensor, spec: &PoolSpec) -> Result<Tensor> {
    let (c, h, w) = t.chw("pool input rank")?;
    let m = spec.window;
    if m > h || m > w {
        return Err(Error::WindowTooLarge {
            window: m,
            extent: h.min(w),
        });
    }
    let (oh, ow) = (out_extent(h, m, spec.stride), out_extent(w, m, spec.stride));
    let x = t.data();
    let plane = oh * ow;
    let mut out = vec![0.0f32; c * plane];
    par::for_each_chunk_mut(&mut out, plane, |ch, dst| {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let window = (0..m).flat_map(|dy| {
                    let row = base + (oy * spec.stride + dy) * w + ox * spec.stride;
                    x[row..row + m].iter().copied()
                });
                dst[oy * ow + ox] = match spec.mode {
                    PoolMode::Max => window.fold(f32::NEG_INFINITY, f32::max),
                    PoolMode::Min => window.fold(f32::INFINITY, f32::min),
                    PoolMode::Average => {
                        let sum: f64 = window.map(f64::from).sum();
                        (sum / (m * m) as f64) as f32
                    }
                };
            }
        }
    });
    Tensor::new(vec![c, oh, ow], out)
}
