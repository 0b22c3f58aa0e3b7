use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use detkit::augment::{apply_augment, AugmentOp, ImageBuffer, Rotation};
use detkit::config::Config;
use detkit::dataset::{self, AnnotationRecord, ClassTable, SplitSpec};
use detkit::detfile;
use detkit::eval::{full_report, EvalSet};
use detkit::ssd::{decode_ssd, generate_default_boxes, SsdRawOutput};
use detkit::tensor::Tensor;
use detkit::yolo::decode_yolo;
use detkit::Detection;

#[derive(Parser)]
#[command(name = "detkit", version, about = "Object detection decoding, suppression, evaluation and dataset tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn raw head tensors into a detection file.
    #[command(subcommand)]
    Decode(Decode),
    /// Class-wise greedy non-maximum suppression on a detection file.
    Nms {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        iou: f64,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against ground truth and print the metric table.
    Eval {
        /// Directory of `<image_id>.txt` annotation files.
        #[arg(long)]
        gt: PathBuf,
        /// Directory of `<image_id>.txt` detection files.
        #[arg(long)]
        pred: PathBuf,
        /// `image_id width height` index listing every evaluated image.
        #[arg(long)]
        dims: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report rows as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Append a per-class AP table.
        #[arg(long)]
        per_class: bool,
    },
    /// Count objects per class.
    Stats {
        #[arg(long)]
        annotations: PathBuf,
        /// One class name per line; defaults to the built-in five classes.
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Seeded train/validation/test partition written as three id lists.
    Split {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        train: usize,
        #[arg(long)]
        val: usize,
        #[arg(long)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Repeat images containing a class until its object count reaches a target.
    Upsample {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        class: String,
        #[arg(long)]
        target: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Apply one augmentation to every PPM/PGM image in a directory.
    Augment {
        #[arg(long, value_enum)]
        op: OpName,
        /// Noise standard deviation in intensity units.
        #[arg(long, default_value_t = 10.0)]
        sigma: f64,
        /// Base seed; image `i` in sorted order uses `seed + i`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        images: PathBuf,
        /// Matching annotation directory; transformed boxes go to `<out>/labels`.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Rotate counter-clockwise instead of clockwise.
        #[arg(long)]
        ccw: bool,
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Print the default configuration file.
    DefaultConfig,
}

#[derive(Subcommand)]
enum Decode {
    Yolo {
        #[arg(long)]
        head: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        conf: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Ssd {
        #[arg(long)]
        loc: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        conf: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OpName {
    Grayscale,
    Vflip,
    Rot90,
    Noise,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn load_classes(path: Option<&Path>) -> Result<ClassTable> {
    Ok(match path {
        Some(p) => ClassTable::load(p)?,
        None => ClassTable::default(),
    })
}

fn emit_detections(dets: &[Detection], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => detfile::write_detections(p, dets)?,
        None => print!("{}", detfile::format_detections(dets)),
    }
    Ok(())
}

fn check_threshold(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        bail!("--{name} {v} must lie in [0, 1]");
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn decode(cmd: Decode) -> Result<()> {
    match cmd {
        Decode::Yolo { head, spec, conf, out } => {
            check_threshold("conf", conf)?;
            let cfg = load_config(spec.as_deref())?;
            let tensor = Tensor::load(&head)?;
            let grid = *tensor.dims().first().context("head tensor has no dimensions")?;
            let head_spec = cfg.yolo_spec_for_grid(grid)?;
            let dets = decode_yolo(&tensor, &head_spec, conf).with_context(|| head.display().to_string())?;
            emit_detections(&dets, out.as_deref())
        }
        Decode::Ssd { loc, scores, spec, conf, out } => {
            check_threshold("conf", conf)?;
            let cfg = load_config(spec.as_deref())?;
            let defaults = generate_default_boxes(&cfg.ssd)?;
            let raw = SsdRawOutput::new(Tensor::load(&loc)?, Tensor::load(&scores)?)?;
            let dets = decode_ssd(&raw, &defaults, &cfg.ssd, conf)?;
            emit_detections(&dets, out.as_deref())
        }
    }
}

fn eval(gt: &Path, pred: &Path, dims: &Path, config: Option<&Path>, json: Option<&Path>, per_class: bool) -> Result<()> {
    let cfg = load_config(config)?;
    let classes = cfg.class_table();
    let mut set = EvalSet::new(detfile::read_dims_index(dims)?)?;
    for record in dataset::parse_annotations(gt, classes)? {
        for g in record.boxes {
            set.add_ground_truth(g).with_context(|| format!("ground truth in {}", gt.display()))?;
        }
    }
    for (id, dets) in detfile::read_prediction_dir(pred)? {
        if let Some(bad) = dets.iter().find(|d| d.class_id >= classes.len()) {
            bail!("{}: class id {} out of range for {} classes", pred.join(format!("{id}.txt")).display(), bad.class_id, classes.len());
        }
        set.add_detections(&id, dets).with_context(|| format!("predictions in {}", pred.display()))?;
    }
    let report = full_report(&set, &cfg.eval_config())?;
    print!("{}", report.to_table());
    if per_class {
        println!();
        print!("{}", report.per_class_table(classes.names()));
    }
    if let Some(path) = json {
        fs::write(path, report.to_json() + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn write_id_list(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let text: String = records.iter().map(|r| format!("{}\n", r.image_id)).collect();
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Applies `op_for(i)` to the i-th image of `images` in sorted file order.
fn augment(
    op_for: impl Fn(usize) -> AugmentOp,
    images: &Path,
    annotations: Option<&Path>,
    out: &Path,
    classes: &ClassTable,
) -> Result<()> {
    let mut files: Vec<PathBuf> = fs::read_dir(images)
        .with_context(|| format!("cannot read {}", images.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .with_context(|| format!("cannot read {}", images.display()))?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "ppm" || e == "pgm"));
    files.sort();
    if files.is_empty() {
        bail!("{}: no .ppm or .pgm images", images.display());
    }
    create_dir(out)?;
    let labels_out = out.join("labels");
    if annotations.is_some() {
        create_dir(&labels_out)?;
    }
    for (i, path) in files.iter().enumerate() {
        let stem = path.file_stem().and_then(|s| s.to_str()).context("image name is not UTF-8")?;
        let img = ImageBuffer::load(path)?;
        let record = match annotations {
            Some(dir) => {
                let ann = dir.join(format!("{stem}.txt"));
                let text = fs::read_to_string(&ann).with_context(|| format!("cannot read {}", ann.display()))?;
                dataset::parse_annotation(stem, &text, classes, &ann)?
            }
            None => AnnotationRecord { image_id: stem.to_string(), boxes: Vec::new() },
        };
        let (img, boxes) = apply_augment(&img, &record.boxes, &op_for(i))?;
        let ext = if img.channels() == 1 { "pgm" } else { "ppm" };
        img.save(out.join(format!("{stem}.{ext}")))?;
        if annotations.is_some() {
            dataset::write_annotations(&labels_out, &[AnnotationRecord { image_id: stem.to_string(), boxes }])?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Decode(cmd) => decode(cmd),
        Command::Nms { input, iou, out } => {
            check_threshold("iou", iou)?;
            let dets = detfile::read_detections(&input)?;
            emit_detections(&detkit::nms::nms_classwise(&dets, iou), out.as_deref())
        }
        Command::Eval { gt, pred, dims, config, json, per_class } => {
            eval(&gt, &pred, &dims, config.as_deref(), json.as_deref(), per_class)
        }
        Command::Stats { annotations, classes } => {
            let classes = load_classes(classes.as_deref())?;
            let records = dataset::parse_annotations(&annotations, &classes)?;
            print!("{}", dataset::class_stats(&records, classes.len()).display(&classes));
            Ok(())
        }
        Command::Split { annotations, train, val, test, seed, out, classes } => {
            let classes = load_classes(classes.as_deref())?;
            let records = dataset::parse_annotations(&annotations, &classes)?;
            let (tr, va, te) = dataset::split(&records, &SplitSpec { train, val, test, seed })?;
            create_dir(&out)?;
            write_id_list(&out.join("train.txt"), &tr)?;
            write_id_list(&out.join("val.txt"), &va)?;
            write_id_list(&out.join("test.txt"), &te)
        }
        Command::Upsample { annotations, class, target, seed, out, classes } => {
            let classes = load_classes(classes.as_deref())?;
            let id = classes.id_of(&class).with_context(|| format!("unknown class `{class}`"))?;
            let records = dataset::parse_annotations(&annotations, &classes)?;
            let grown = dataset::upsample_by_repetition(&records, id, target, seed)?;
            dataset::write_annotations(&out, &grown)?;
            print!("{}", dataset::class_stats(&grown, classes.len()).display(&classes));
            Ok(())
        }
        Command::Augment { op, sigma, seed, images, annotations, out, ccw, classes } => {
            let classes = load_classes(classes.as_deref())?;
            let op_for = |i: usize| match op {
                OpName::Grayscale => AugmentOp::Grayscale,
                OpName::Vflip => AugmentOp::VerticalFlip,
                OpName::Rot90 if ccw => AugmentOp::Rotate90(Rotation::CounterClockwise),
                OpName::Rot90 => AugmentOp::Rotate90(Rotation::Clockwise),
                OpName::Noise => AugmentOp::GaussianNoise { sigma, seed: seed.wrapping_add(i as u64) },
            };
            augment(op_for, &images, annotations.as_deref(), &out, &classes)
        }
        Command::DefaultConfig => {
            print!("{}", Config::default().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error");
            eprintln!("{} (see `detkit --help`)", first.trim());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
