//! Image augmentations with co-transformed annotations, plus binary PPM/PGM
//! I/O.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{par, BBox, Error, GroundTruthBox, Result};

/// 8-bit raster, row-major, channel-interleaved. One or three channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Channels(channels));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image", "dimensions must be positive"));
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "image pixel count",
                expected,
                actual: pixels.len(),
            });
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        ImageBuffer::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    fn row_len(&self) -> usize {
        self.width * self.channels
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    /// Replicates a single channel into three; three-channel input is cloned.
    pub fn expand_to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        ImageBuffer {
            channels: 3,
            pixels: self.pixels.iter().flat_map(|&v| [v, v, v]).collect(),
            ..*self
        }
    }

    /// Encodes as binary PGM (`P5`) or PPM (`P6`), maxval 255.
    pub fn to_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pnm(bytes: &[u8]) -> Result<Self> {
        let bad = |r: &str| Error::invalid("PNM stream", r.to_string());
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let channels = match token()?.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(bad(&format!("unsupported magic `{other}`"))),
        };
        let mut num = |what: &str| -> Result<usize> {
            token()?
                .parse()
                .map_err(|_| bad(&format!("bad {what}")))
        };
        let width = num("width")?;
        let height = num("height")?;
        let maxval = num("maxval")?;
        if maxval != 255 {
            return Err(bad(&format!("maxval {maxval} unsupported, expected 255")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
        if data.len() != width * height * channels {
            return Err(bad(&format!(
                "raster has {} bytes, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        ImageBuffer::new(width, height, channels, data.to_vec())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        ImageBuffer::from_pnm(&bytes).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pnm()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Rotation {
    #[default]
    Clockwise,
    CounterClockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AugmentOp {
    Grayscale,
    VerticalFlip,
    Rotate90(Rotation),
    /// Additive per-sample noise with standard deviation `sigma` in 8-bit
    /// intensity units.
    GaussianNoise { sigma: f64, seed: u64 },
}

fn luma(p: &[u8]) -> u8 {
    (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])).round() as u8
}

fn grayscale(img: &ImageBuffer) -> ImageBuffer {
    if img.channels == 1 {
        return img.clone();
    }
    ImageBuffer {
        channels: 1,
        pixels: img.pixels.chunks_exact(3).map(luma).collect(),
        ..*img
    }
}

fn vflip(img: &ImageBuffer) -> ImageBuffer {
    let row = img.row_len();
    let pixels = img.pixels.chunks_exact(row).rev().flatten().copied().collect();
    ImageBuffer { pixels, ..*img }
}

fn rotate(img: &ImageBuffer, dir: Rotation) -> ImageBuffer {
    let (w, h, c) = (img.width, img.height, img.channels);
    // Output is h wide and w tall.
    let mut pixels = vec![0u8; w * h * c];
    par::for_each_chunk_mut(&mut pixels, h * c, |ny, dst| {
        for nx in 0..h {
            let (sx, sy) = match dir {
                Rotation::Clockwise => (ny, h - 1 - nx),
                Rotation::CounterClockwise => (w - 1 - ny, nx),
            };
            let s = (sy * w + sx) * c;
            dst[nx * c..nx * c + c].copy_from_slice(&img.pixels[s..s + c]);
        }
    });
    ImageBuffer {
        width: h,
        height: w,
        channels: c,
        pixels,
    }
}

fn noise(img: &ImageBuffer, sigma: f64, seed: u64) -> Result<ImageBuffer> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid("gaussian noise", format!("sigma {sigma} must be >= 0")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("gaussian noise", e.to_string()))?;
    let mut out = img.clone();
    let row = img.row_len();
    par::for_each_chunk_mut(&mut out.pixels, row, |y, dst| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(y as u64);
        for v in dst.iter_mut() {
            let n: f64 = normal.sample(&mut rng);
            *v = (f64::from(*v) + n).round().clamp(0.0, 255.0) as u8;
        }
    });
    Ok(out)
}

/// Box transform for a geometric op; photometric ops leave boxes unchanged.
pub fn transform_box(b: &BBox, op: &AugmentOp) -> BBox {
    match op {
        AugmentOp::VerticalFlip => BBox {
            y_center: 1.0 - b.y_center,
            ..*b
        },
        AugmentOp::Rotate90(Rotation::Clockwise) => BBox {
            x_center: 1.0 - b.y_center,
            y_center: b.x_center,
            width: b.height,
            height: b.width,
        },
        AugmentOp::Rotate90(Rotation::CounterClockwise) => BBox {
            x_center: b.y_center,
            y_center: 1.0 - b.x_center,
            width: b.height,
            height: b.width,
        },
        AugmentOp::Grayscale | AugmentOp::GaussianNoise { .. } => *b,
    }
}

/// Applies `op` to the image and its boxes.
///
/// Rotation is clockwise unless [`Rotation::CounterClockwise`] is given.
/// Noise draws row `y` from ChaCha8 stream `y` of `seed`, so the output
/// depends only on the seed.
pub fn apply_augment(
    img: &ImageBuffer,
    boxes: &[GroundTruthBox],
    op: &AugmentOp,
) -> Result<(ImageBuffer, Vec<GroundTruthBox>)> {
    let out = match op {
        AugmentOp::Grayscale => grayscale(img),
        AugmentOp::VerticalFlip => vflip(img),
        AugmentOp::Rotate90(dir) => rotate(img, *dir),
        AugmentOp::GaussianNoise { sigma, seed } => noise(img, *sigma, *seed)?,
    };
    let boxes = boxes
        .iter()
        .map(|g| GroundTruthBox {
            bbox: transform_box(&g.bbox, op),
            ..g.clone()
        })
        .collect();
    Ok((out, boxes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, c: usize) -> ImageBuffer {
        ImageBuffer::new(w, h, c, (0..w * h * c).map(|i| (i * 7 % 251) as u8).collect()).unwrap()
    }

    #[test]
    fn rotate_moves_top_left_to_top_right() {
        let img = ramp(3, 2, 1);
        let (r, _) = apply_augment(&img, &[], &AugmentOp::Rotate90(Rotation::Clockwise)).unwrap();
        assert_eq!((r.width(), r.height()), (2, 3));
        assert_eq!(r.pixel(1, 0), img.pixel(0, 0));
        assert_eq!(r.pixel(0, 0), img.pixel(0, 1));
        let (back, _) = apply_augment(&r, &[], &AugmentOp::Rotate90(Rotation::CounterClockwise)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn flip_box_example() {
        let b = BBox::new(0.25, 0.10, 0.2, 0.1).unwrap();
        let f = transform_box(&b, &AugmentOp::VerticalFlip);
        assert_eq!((f.x_center, f.width, f.height), (0.25, 0.2, 0.1));
        assert!((f.y_center - 0.9).abs() < 1e-15);
    }

    #[test]
    fn grayscale_weights() {
        let img = ImageBuffer::new(2, 1, 3, vec![255, 0, 0, 10, 200, 30]).unwrap();
        let (g, _) = apply_augment(&img, &[], &AugmentOp::Grayscale).unwrap();
        assert_eq!(g.channels(), 1);
        // 0.299*255 = 76.245; 0.299*10 + 0.587*200 + 0.114*30 = 123.81
        assert_eq!(g.pixels(), &[76, 124]);
        let (again, _) = apply_augment(&g, &[], &AugmentOp::Grayscale).unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn noise_is_seeded_and_clamped() {
        let img = ImageBuffer::filled(8, 8, 3, 250).unwrap();
        let op = AugmentOp::GaussianNoise { sigma: 40.0, seed: 3 };
        let (a, _) = apply_augment(&img, &[], &op).unwrap();
        let (b, _) = apply_augment(&img, &[], &op).unwrap();
        assert_eq!(a, b);
        assert!(a.pixels().contains(&255));
        assert_ne!(a, img);
        let zero = AugmentOp::GaussianNoise { sigma: 0.0, seed: 3 };
        assert_eq!(apply_augment(&img, &[], &zero).unwrap().0, img);
        assert!(apply_augment(&img, &[], &AugmentOp::GaussianNoise { sigma: -1.0, seed: 0 }).is_err());
    }

    #[test]
    fn channel_count_validation() {
        assert!(matches!(ImageBuffer::new(1, 1, 2, vec![0, 0]), Err(Error::Channels(2))));
        assert!(ImageBuffer::new(2, 2, 3, vec![0; 11]).is_err());
    }

    #[test]
    fn pnm_round_trip_and_comments() {
        for c in [1, 3] {
            let img = ramp(5, 4, c);
            assert_eq!(ImageBuffer::from_pnm(&img.to_pnm()).unwrap(), img);
        }
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 10]);
        assert_eq!(ImageBuffer::from_pnm(&bytes).unwrap().pixels(), &[9, 10]);
        assert!(ImageBuffer::from_pnm(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(ImageBuffer::from_pnm(b"P5\n2 2\n255\n\x01").is_err());
    }
}
