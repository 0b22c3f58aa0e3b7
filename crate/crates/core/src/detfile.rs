//! Text formats for detections and the image-dimension index.
//!
//! A detection file holds one detection per line:
//! `class_id confidence x_center y_center width height`, normalized floats,
//! separated by spaces. A dimension index holds `image_id width height` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{BBox, Detection, Error, Result};

fn fields<'a>(line: &'a str, n: usize, path: &Path, lineno: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != n {
        return Err(Error::parse(
            path,
            lineno,
            format!("expected {n} fields, found {}", parts.len()),
        ));
    }
    Ok(parts)
}

fn number<T: std::str::FromStr>(s: &str, what: &str, path: &Path, lineno: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(path, lineno, format!("{what} `{s}` is not a valid number")))
}

/// Parses detection lines. Blank lines are skipped; `path` is only used in
/// diagnostics.
pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line, 6, path, lineno)?;
        let class_id: usize = number(f[0], "class id", path, lineno)?;
        let v: Vec<f64> = f[1..]
            .iter()
            .map(|s| number(s, "value", path, lineno))
            .collect::<Result<_>>()?;
        let det = BBox::new(v[1], v[2], v[3], v[4])
            .and_then(|b| Detection::new(class_id, v[0], b))
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        out.push(det);
    }
    Ok(out)
}

/// Serializes detections with shortest round-trip float formatting.
pub fn format_detections(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        let b = &d.bbox;
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            d.class_id, d.confidence, b.x_center, b.y_center, b.width, b.height
        );
    }
    out
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, path)
}

pub fn write_detections(path: impl AsRef<Path>, dets: &[Detection]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_detections(dets)).map_err(|e| Error::io(path, e))
}

/// Lists `<stem>.<ext>` files of a directory as `(stem, path)`, sorted by stem.
pub(crate) fn list_by_extension(dir: &Path, ext: &str) -> Result<Vec<(String, std::path::PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Reads every `<image_id>.txt` detection file of a directory, sorted by id.
pub fn read_prediction_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, Vec<Detection>)>> {
    list_by_extension(dir.as_ref(), "txt")?
        .into_iter()
        .map(|(id, path)| Ok((id, read_detections(&path)?)))
        .collect()
}

/// Reads `image_id width height` lines, preserving file order.
pub fn read_dims_index(path: impl AsRef<Path>) -> Result<Vec<(String, u32, u32)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(line, 3, path, i + 1)?;
        let w: u32 = number(f[1], "width", path, i + 1)?;
        let h: u32 = number(f[2], "height", path, i + 1)?;
        if w == 0 || h == 0 {
            return Err(Error::parse(path, i + 1, "image dimensions must be positive"));
        }
        out.push((f[0].to_string(), w, h));
    }
    Ok(out)
}
