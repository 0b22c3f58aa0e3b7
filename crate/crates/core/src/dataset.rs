//! Annotation corpora in the Darknet text convention.
//!
//! Each image has a `<image_id>.txt` file with one box per line:
//! `class_id x_center y_center width height`, normalized to the image size.
//! An empty file is a negative image.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detfile::list_by_extension;
use crate::{par, BBox, Error, GroundTruthBox, Result};

/// Ordered class names; a class id is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassTable {
    names: Vec<String>,
}

impl ClassTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("class table", "no classes"));
        }
        let mut seen = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() || n.split_whitespace().count() != 1 {
                return Err(Error::invalid("class table", format!("bad class name `{n}` at id {i}")));
            }
            if let Some(prev) = seen.insert(n.as_str(), i) {
                return Err(Error::invalid(
                    "class table",
                    format!("`{n}` appears at ids {prev} and {i}"),
                ));
            }
        }
        Ok(ClassTable { names })
    }

    /// Reads one name per line; line `n` is class id `n - 1`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let names: Vec<String> = text.trim_end().lines().map(|l| l.trim().to_string()).collect();
        ClassTable::new(names).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }
}

impl Default for ClassTable {
    fn default() -> Self {
        ClassTable {
            names: ["Mask", "Improper", "No-mask", "Glove", "No-glove"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl TryFrom<Vec<String>> for ClassTable {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        ClassTable::new(names)
    }
}

impl From<ClassTable> for Vec<String> {
    fn from(t: ClassTable) -> Self {
        t.names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub boxes: Vec<GroundTruthBox>,
}

impl AnnotationRecord {
    pub fn count_class(&self, class_id: usize) -> usize {
        self.boxes.iter().filter(|b| b.class_id == class_id).count()
    }

    /// Same boxes under a different image id.
    pub fn renamed(&self, image_id: &str) -> AnnotationRecord {
        AnnotationRecord {
            image_id: image_id.to_string(),
            boxes: self
                .boxes
                .iter()
                .map(|b| GroundTruthBox {
                    image_id: image_id.to_string(),
                    ..b.clone()
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for g in &self.boxes {
            let b = &g.bbox;
            let _ = writeln!(out, "{} {} {} {} {}", g.class_id, b.x_center, b.y_center, b.width, b.height);
        }
        out
    }
}

/// Parses one annotation file's contents.
pub fn parse_annotation(image_id: &str, text: &str, classes: &ClassTable, path: &Path) -> Result<AnnotationRecord> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(Error::parse(path, lineno, format!("expected 5 fields, found {}", f.len())));
        }
        let class_id: usize = f[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("class id `{}` is not a non-negative integer", f[0])))?;
        if class_id >= classes.len() {
            return Err(Error::parse(
                path,
                lineno,
                format!("class id {class_id} out of range for {} classes", classes.len()),
            ));
        }
        let mut v = [0.0f64; 4];
        for (slot, s) in v.iter_mut().zip(&f[1..]) {
            *slot = s
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("`{s}` is not a number")))?;
        }
        let bbox = BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        boxes.push(GroundTruthBox {
            image_id: image_id.to_string(),
            class_id,
            bbox,
        });
    }
    Ok(AnnotationRecord {
        image_id: image_id.to_string(),
        boxes,
    })
}

/// Parses every `<image_id>.txt` in `dir`, ordered by image id.
pub fn parse_annotations(dir: impl AsRef<Path>, classes: &ClassTable) -> Result<Vec<AnnotationRecord>> {
    let files = list_by_extension(dir.as_ref(), "txt")?;
    par::map_slice(&files, |(id, path)| {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_annotation(id, &text, classes, path)
    })
    .into_iter()
    .collect()
}

pub fn write_annotations(dir: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in records {
        let path = dir.join(format!("{}.txt", r.image_id));
        fs::write(&path, r.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassStats {
    pub counts: Vec<usize>,
    pub total: usize,
}

impl ClassStats {
    pub fn display<'a>(&'a self, classes: &'a ClassTable) -> StatsTable<'a> {
        StatsTable { stats: self, classes }
    }
}

/// Object counts per class id in `0..num_classes`.
pub fn class_stats(records: &[AnnotationRecord], num_classes: usize) -> ClassStats {
    let mut counts = vec![0usize; num_classes];
    for b in records.iter().flat_map(|r| &r.boxes) {
        if let Some(c) = counts.get_mut(b.class_id) {
            *c += 1;
        }
    }
    let total = counts.iter().sum();
    ClassStats { counts, total }
}

/// Class-count table with 1-based class numbers.
pub struct StatsTable<'a> {
    stats: &'a ClassStats,
    classes: &'a ClassTable,
}

impl fmt::Display for StatsTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14}{:<14}Number of Objects", "Class Number", "Class Type")?;
        for (i, n) in self.stats.counts.iter().enumerate() {
            let name = self.classes.name(i).unwrap_or("?");
            writeln!(f, "{:<14}{:<14}{}", i + 1, name, n)?;
        }
        writeln!(f, "{:<28}{}", "Total", self.stats.total)
    }
}

/// Duplicates whole images containing `target_class` until its object count
/// first reaches `target_count`.
///
/// Candidate images are shuffled once with `seed` and cycled round-robin.
/// The n-th copy of image `x` is named `x#dup<n>`; copies are appended after
/// the originals. A target at or below the current count is a no-op.
pub fn upsample_by_repetition(
    records: &[AnnotationRecord],
    target_class: usize,
    target_count: usize,
    seed: u64,
) -> Result<Vec<AnnotationRecord>> {
    let mut current: usize = records.iter().map(|r| r.count_class(target_class)).sum();
    let mut out = records.to_vec();
    if current >= target_count {
        return Ok(out);
    }
    let mut candidates: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].count_class(target_class) > 0)
        .collect();
    if candidates.is_empty() {
        return Err(Error::ClassAbsent(target_class));
    }
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut round = 0;
    'outer: loop {
        round += 1;
        for &i in &candidates {
            let src = &records[i];
            out.push(src.renamed(&format!("{}#dup{round}", src.image_id)));
            current += src.count_class(target_class);
            if current >= target_count {
                break 'outer;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 4250,
            val: 2000,
            test: 2000,
            seed: 0,
        }
    }
}

/// Seeded shuffle followed by a contiguous train/val/test partition.
pub fn split<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if spec.train + spec.val + spec.test != items.len() {
        return Err(Error::SplitCount {
            train: spec.train,
            val: spec.val,
            test: spec.test,
            total: items.len(),
        });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let take = |r: std::ops::Range<usize>| order[r].iter().map(|&i| items[i].clone()).collect();
    let a = spec.train;
    let b = a + spec.val;
    Ok((take(0..a), take(a..b), take(b..items.len())))
}

/// Training hyperparameters. Parsed and validated only; nothing here trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub optimizer: String,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epoch: u32,
    pub training_set: usize,
    pub validation_set: usize,
    pub test_set: usize,
    pub batch_size: u32,
    pub image_size: (u32, u32),
}

impl TrainingConfig {
    pub fn yolo_v3() -> Self {
        TrainingConfig {
            optimizer: "Stochastic gradient descent".into(),
            learning_rate: 0.001,
            momentum: 0.9,
            epoch: 76,
            training_set: 4250,
            validation_set: 2000,
            test_set: 2000,
            batch_size: 64,
            image_size: (416, 416),
        }
    }

    pub fn ssd_mobilenet() -> Self {
        TrainingConfig {
            learning_rate: 0.0002,
            epoch: 155,
            batch_size: 16,
            image_size: (300, 300),
            ..TrainingConfig::yolo_v3()
        }
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train: self.training_set,
            val: self.validation_set,
            test: self.test_set,
            seed,
        }
    }

    /// Parses `key = value` lines keyed like `learning-rate`, `batch-size`,
    /// `image-size` (`416x416`). `#` starts a comment. Every key is required.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut kv: HashMap<&str, (usize, &str)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `key = value`"))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::parse(path, i + 1, format!("unknown key `{k}`")));
            }
            kv.insert(k, (i + 1, v.trim()));
        }
        let get = |k: &str| -> Result<(usize, &str)> {
            kv.get(k)
                .copied()
                .ok_or_else(|| Error::parse(path, 0, format!("missing key `{k}`")))
        };
        fn num<T: std::str::FromStr + PartialOrd + Default>(
            path: &Path,
            k: &str,
            (line, v): (usize, &str),
        ) -> Result<T> {
            let x: T = v
                .parse()
                .map_err(|_| Error::parse(path, line, format!("`{k}` value `{v}` is not a number")))?;
            if x <= T::default() {
                return Err(Error::parse(path, line, format!("`{k}` must be positive")));
            }
            Ok(x)
        }
        let (size_line, size) = get("image-size")?;
        let image_size = size
            .split_once(['x', 'X', '×'])
            .and_then(|(w, h)| Some((w.trim().parse().ok()?, h.trim().parse().ok()?)))
            .filter(|&(w, h): &(u32, u32)| w > 0 && h > 0)
            .ok_or_else(|| Error::parse(path, size_line, format!("image-size `{size}` is not WxH")))?;
        let optimizer = get("optimizer")?.1.to_string();
        if optimizer.is_empty() {
            return Err(Error::parse(path, get("optimizer")?.0, "empty optimizer"));
        }
        Ok(TrainingConfig {
            optimizer,
            learning_rate: num(path, "learning-rate", get("learning-rate")?)?,
            momentum: num(path, "momentum", get("momentum")?)?,
            epoch: num(path, "epoch", get("epoch")?)?,
            training_set: num(path, "training-set", get("training-set")?)?,
            validation_set: num(path, "validation-set", get("validation-set")?)?,
            test_set: num(path, "test-set", get("test-set")?)?,
            batch_size: num(path, "batch-size", get("batch-size")?)?,
            image_size,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainingConfig::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        format!(
            "optimizer = {}\nlearning-rate = {}\nmomentum = {}\nepoch = {}\ntraining-set = {}\n\
             validation-set = {}\ntest-set = {}\nbatch-size = {}\nimage-size = {}x{}\n",
            self.optimizer,
            self.learning_rate,
            self.momentum,
            self.epoch,
            self.training_set,
            self.validation_set,
            self.test_set,
            self.batch_size,
            self.image_size.0,
            self.image_size.1
        )
    }
}

const KEYS: [&str; 9] = [
    "optimizer",
    "learning-rate",
    "momentum",
    "epoch",
    "training-set",
    "validation-set",
    "test-set",
    "batch-size",
    "image-size",
];
