use std::fs;

use detkit::augment::ImageBuffer;
use detkit::config::Config;
use detkit::dataset::{parse_annotations, write_annotations, AnnotationRecord, ClassTable, TrainingConfig};
use detkit::detfile::{read_detections, write_detections};
use detkit::tensor::Tensor;
use detkit::{BBox, Detection, GroundTruthBox};
use tempfile::TempDir;

#[test]
fn tensor_file_round_trip() {
    let tmp = TempDir::new().unwrap();
    let t = Tensor::from_fn(vec![2, 3, 4], |i| i as f32 * 0.25 - 1.0).unwrap();
    let p = tmp.path().join("t.tnsr");
    t.save(&p).unwrap();
    assert_eq!(Tensor::load(&p).unwrap(), t);
    let bytes = fs::read(&p).unwrap();
    assert_eq!(&bytes[..4], b"TNSR");
    assert_eq!(bytes.len(), 4 + 4 + 3 * 4 + 24 * 4);
    fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
    assert!(Tensor::load(&p).is_err());
}

#[test]
fn detection_file_round_trip() {
    let tmp = TempDir::new().unwrap();
    let dets = vec![
        Detection::new(2, 0.75, BBox::new(0.1, 0.2, 0.05, 0.125).unwrap()).unwrap(),
        Detection::new(0, 1.0 / 3.0, BBox::new(0.6, 0.6, 0.3, 0.1).unwrap()).unwrap(),
    ];
    let p = tmp.path().join("d.txt");
    write_detections(&p, &dets).unwrap();
    assert_eq!(read_detections(&p).unwrap(), dets);
}

#[test]
fn annotation_directory_round_trip() {
    let tmp = TempDir::new().unwrap();
    let classes = ClassTable::default();
    let records: Vec<AnnotationRecord> = (0..5)
        .map(|i| {
            let id = format!("im{i}");
            let boxes = (0..i)
                .map(|k| GroundTruthBox::new(id.clone(), k % 5, BBox::new(0.5, 0.1 * (k + 1) as f64, 0.2, 0.1).unwrap()).unwrap())
                .collect();
            AnnotationRecord { image_id: id, boxes }
        })
        .collect();
    write_annotations(tmp.path(), &records).unwrap();
    assert_eq!(parse_annotations(tmp.path(), &classes).unwrap(), records);
}

#[test]
fn annotation_errors_carry_file_and_line() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("x.txt"), "0 0.5 0.5 0.1 0.1\n7 0.5 0.5 0.1 0.1\n").unwrap();
    let err = parse_annotations(tmp.path(), &ClassTable::default()).unwrap_err().to_string();
    assert!(err.contains("x.txt:2:"), "{err}");
}

#[test]
fn image_round_trip_both_channel_counts() {
    let tmp = TempDir::new().unwrap();
    for c in [1, 3] {
        let img = ImageBuffer::new(5, 3, c, (0..15 * c).map(|i| (i * 13) as u8).collect()).unwrap();
        let p = tmp.path().join(format!("i{c}.pnm"));
        img.save(&p).unwrap();
        assert_eq!(ImageBuffer::load(&p).unwrap(), img);
    }
}

#[test]
fn config_and_training_config_round_trip() {
    let cfg = Config::default();
    let back = Config::parse(&cfg.to_toml(), "c.toml".as_ref()).unwrap();
    assert_eq!(back, cfg);
    let err = Config::parse("[eval]\nnms_iou = \"high\"\n", "c.toml".as_ref()).unwrap_err();
    assert!(err.to_string().starts_with("c.toml:2:"), "{err}");

    for t in [TrainingConfig::yolo_v3(), TrainingConfig::ssd_mobilenet()] {
        assert_eq!(TrainingConfig::parse(&t.to_text(), "t.cfg".as_ref()).unwrap(), t);
    }
}
