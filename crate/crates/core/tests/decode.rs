use detkit::ssd::{self, decode_ssd, generate_default_boxes, softmax, DefaultBoxSpec, SsdRawOutput};
use detkit::tensor::Tensor;
use detkit::yolo::{decode_yolo, encode_box, head_depth, Anchor, YoloHeadSpec};
use detkit::BBox;
use proptest::prelude::*;

fn spec(grid: usize, classes: usize) -> YoloHeadSpec {
    let anchors = vec![Anchor { width: 0.2, height: 0.3 }, Anchor { width: 0.5, height: 0.4 }];
    YoloHeadSpec::new(grid, classes, anchors).unwrap()
}

proptest! {
    #[test]
    fn encoded_center_lands_in_its_cell(x in 0.0f64..1.0, y in 0.0f64..1.0, grid in 1usize..20) {
        let b = BBox::new(x, y, 0.1, 0.1).unwrap();
        let ((row, col), _, _) = encode_box(&b, &Anchor { width: 0.1, height: 0.1 }, grid, 0.9, 0.9);
        let g = grid as f64;
        prop_assert!(col as f64 / g <= x && x <= (col + 1) as f64 / g);
        prop_assert!(row as f64 / g <= y && y <= (row + 1) as f64 / g);
    }

    #[test]
    fn raising_objectness_never_lowers_confidence(obj in -8.0f32..8.0, bump in 0.0f32..4.0, cls in -8.0f32..8.0) {
        let s = spec(1, 2);
        let depth = head_depth(&s);
        let make = |o: f32| {
            let mut t = Tensor::zeros(vec![1, 1, depth]).unwrap();
            t.data_mut()[4] = o;
            t.data_mut()[5] = cls;
            t.data_mut()[6] = -20.0;
            decode_yolo(&t, &s, 0.0).unwrap()[0].confidence
        };
        prop_assert!(make(obj + bump) >= make(obj));
    }

    #[test]
    fn softmax_is_a_distribution(v in proptest::collection::vec(-50.0f32..50.0, 1..12)) {
        let p = softmax(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn ssd_encode_decode_inverse(x in 0.1f64..0.9, y in 0.1f64..0.9, w in 0.05f64..0.8, h in 0.05f64..0.8,
                                 dx in 0.1f64..0.9, dy in 0.1f64..0.9, dw in 0.05f64..0.9, dh in 0.05f64..0.9) {
        let target = BBox::new(x, y, w, h).unwrap();
        let default = BBox::new(dx, dy, dw, dh).unwrap();
        let v = [0.1, 0.1, 0.2, 0.2];
        let back = ssd::decode_box(ssd::encode_box(&target, &default, &v), &default, &v);
        prop_assert!((back.x_center - x).abs() < 1e-12 && (back.width - w).abs() < 1e-12);
        prop_assert!((back.y_center - y).abs() < 1e-12 && (back.height - h).abs() < 1e-12);
    }
}

#[test]
fn decode_respects_threshold_and_count() {
    let s = spec(3, 4);
    let t = Tensor::from_fn(vec![3, 3, head_depth(&s)], |i| ((i * 7919) % 23) as f32 / 3.0 - 4.0).unwrap();
    let all = decode_yolo(&t, &s, 0.0).unwrap();
    assert_eq!(all.len(), 3 * 3 * 2);
    let some = decode_yolo(&t, &s, 0.6).unwrap();
    assert!(some.iter().all(|d| d.confidence >= 0.6));
    assert!(some.len() < all.len());
}

#[test]
fn decode_rejects_wrong_depth_and_non_finite() {
    let s = spec(2, 3);
    let err = decode_yolo(&Tensor::zeros(vec![2, 2, 15]).unwrap(), &s, 0.5).unwrap_err();
    assert!(err.to_string().contains("16"), "{err}");
    let mut t = Tensor::zeros(vec![2, 2, 16]).unwrap();
    t.data_mut()[3] = f32::NAN;
    assert!(decode_yolo(&t, &s, 0.5).is_err());
}

#[test]
fn default_boxes_are_deterministic_and_in_range() {
    let spec = DefaultBoxSpec::ssd300();
    let a = generate_default_boxes(&spec).unwrap();
    assert_eq!(a, generate_default_boxes(&spec).unwrap());
    assert!(a.iter().all(|b| b.validate().is_ok()));
    // First box of the first layer: unit-ratio box at the center of cell (0, 0).
    assert!((a[0].x_center - 0.5 / 38.0).abs() < 1e-12);
    assert!((a[0].width - 0.1).abs() < 1e-12);
}

#[test]
fn background_dominated_boxes_are_dropped() {
    let spec = DefaultBoxSpec::ssd300();
    let defaults = generate_default_boxes(&spec).unwrap();
    let n = defaults.len();
    let scores = Tensor::from_fn(vec![n, 3], |i| if i % 3 == 0 { 5.0 } else { 0.0 }).unwrap();
    let raw = SsdRawOutput::new(Tensor::zeros(vec![n, 4]).unwrap(), scores).unwrap();
    assert!(decode_ssd(&raw, &defaults, &spec, 0.1).unwrap().is_empty());
}
