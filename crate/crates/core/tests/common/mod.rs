//! Reference implementations used as test oracles. Nothing here calls into
//! the code paths it checks beyond plain data types.

#![allow(dead_code)]

use detkit::eval::{EvalConfig, EvalSet};
use detkit::{BBox, Detection, GroundTruthBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- geometry

/// Plain overlap ratio on `(x0, y0, x1, y1)` tuples.
pub fn overlap(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let w = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let h = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    let i = w * h;
    let u = (a.2 - a.0) * (a.3 - a.1) + (b.2 - b.0) * (b.3 - b.1) - i;
    if u > 0.0 {
        i / u
    } else {
        0.0
    }
}

pub fn corners(b: &BBox) -> (f64, f64, f64, f64) {
    (
        b.x_center - b.width / 2.0,
        b.y_center - b.height / 2.0,
        b.x_center + b.width / 2.0,
        b.y_center + b.height / 2.0,
    )
}

/// Pixel-counting IOU on an `n x n` raster stretched over the pair's joint
/// bounding box (IOU is invariant under per-axis scaling).
pub fn raster_iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64), n: usize) -> f64 {
    let (x0, y0) = (a.0.min(b.0), a.1.min(b.1));
    let (x1, y1) = (a.2.max(b.2), a.3.max(b.3));
    if x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let (sx, sy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let inside = |r: (f64, f64, f64, f64), x: f64, y: f64| x >= r.0 && x < r.2 && y >= r.1 && y < r.3;
    let (mut i, mut u) = (0u64, 0u64);
    for py in 0..n {
        let y = y0 + (py as f64 + 0.5) * sy;
        for px in 0..n {
            let x = x0 + (px as f64 + 0.5) * sx;
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            i += u64::from(ia && ib);
            u += u64::from(ia || ib);
        }
    }
    if u == 0 {
        0.0
    } else {
        i as f64 / u as f64
    }
}

pub fn random_corner_box(r: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    let (a, b): (f64, f64) = (r.random(), r.random());
    let (c, d): (f64, f64) = (r.random(), r.random());
    (a.min(b), c.min(d), a.max(b), c.max(d))
}

pub fn random_bbox(r: &mut ChaCha8Rng, min_size: f64, max_size: f64) -> BBox {
    let w = r.random_range(min_size..max_size);
    let h = r.random_range(min_size..max_size);
    let x = r.random_range(w / 2.0..=1.0 - w / 2.0);
    let y = r.random_range(h / 2.0..=1.0 - h / 2.0);
    BBox::new(x, y, w, h).unwrap()
}

// --------------------------------------------------------------------- nms

/// Quadratic greedy scan over the whole list: walk detections in rank order
/// and keep one unless an already-kept box of its class overlaps it at or
/// above the threshold.
pub fn nms_reference(dets: &[Detection], thr: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // Insertion sort by (confidence desc, index asc).
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && {
            let (p, q) = (&dets[order[j - 1]], &dets[order[j]]);
            p.confidence < q.confidence || (p.confidence == q.confidence && order[j - 1] > order[j])
        } {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let clash = kept.iter().any(|&k| {
            dets[k].class_id == dets[i].class_id
                && overlap(corners(&dets[k].bbox), corners(&dets[i].bbox)) >= thr
        });
        if !clash {
            kept.push(i);
        }
    }
    // Final order: confidence desc, class asc, index asc.
    kept.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .unwrap()
            .then(dets[a].class_id.cmp(&dets[b].class_id))
            .then(a.cmp(&b))
    });
    kept.into_iter().map(|i| dets[i]).collect()
}

/// Checks the greedy fixed point: a detection survives iff no higher-ranked
/// survivor of its class overlaps it at or above `thr`.
pub fn is_greedy_fixed_point(input: &[Detection], kept: &[Detection], thr: f64) -> bool {
    let mut ranked: Vec<usize> = (0..input.len()).collect();
    ranked.sort_by(|&a, &b| input[b].confidence.partial_cmp(&input[a].confidence).unwrap().then(a.cmp(&b)));
    let mut survivors = kept.to_vec();
    let mut accepted: Vec<Detection> = Vec::new();
    for i in ranked {
        let d = input[i];
        let blocked = accepted
            .iter()
            .any(|k| k.class_id == d.class_id && overlap(corners(&k.bbox), corners(&d.bbox)) >= thr);
        let pos = survivors.iter().position(|s| *s == d);
        match (blocked, pos) {
            (false, Some(p)) => {
                survivors.remove(p);
                accepted.push(d);
            }
            (true, None) => {}
            _ => return false,
        }
    }
    survivors.is_empty()
}

// -------------------------------------------------------------------- eval

#[derive(Clone, Debug)]
pub struct OracleImage {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub gts: Vec<(usize, BBox)>,
    pub dets: Vec<(usize, f64, BBox)>,
}

pub fn build_set(images: &[OracleImage]) -> EvalSet {
    let mut set = EvalSet::new(images.iter().map(|im| (im.id.clone(), im.width, im.height))).unwrap();
    for im in images {
        for &(c, b) in &im.gts {
            set.add_ground_truth(GroundTruthBox::new(im.id.clone(), c, b).unwrap()).unwrap();
        }
        set.add_detections(&im.id, im.dets.iter().map(|&(c, p, b)| Detection::new(c, p, b).unwrap()))
            .unwrap();
    }
    set
}

/// Random instance: up to `max_images` images, `classes` classes, at most
/// `max_boxes` ground-truth boxes and `max_boxes` detections per image.
/// Detections are mostly jittered copies of ground truth; a few confidences
/// are drawn from a coarse grid to create ties.
pub fn random_instance(r: &mut ChaCha8Rng, max_images: usize, classes: usize, max_boxes: usize) -> Vec<OracleImage> {
    let n = r.random_range(1..=max_images);
    (0..n)
        .map(|i| {
            let width = r.random_range(48..=640);
            let height = r.random_range(48..=640);
            let ng = r.random_range(0..=max_boxes);
            let gts: Vec<(usize, BBox)> = (0..ng)
                .map(|_| (r.random_range(0..classes), random_bbox(r, 0.02, 0.6)))
                .collect();
            let nd = r.random_range(0..=max_boxes);
            let dets = (0..nd)
                .map(|_| {
                    let conf = if r.random_bool(0.2) {
                        f64::from(r.random_range(1..=5u32)) / 5.0
                    } else {
                        r.random_range(0.01..1.0)
                    };
                    if !gts.is_empty() && r.random_bool(0.7) {
                        let (c, g) = gts[r.random_range(0..gts.len())];
                        let c = if r.random_bool(0.1) { r.random_range(0..classes) } else { c };
                        let j = |v: f64, s: f64, r: &mut ChaCha8Rng| v + r.random_range(-0.25..0.25) * s;
                        let w = (g.width * r.random_range(0.7..1.3)).min(1.0);
                        let h = (g.height * r.random_range(0.7..1.3)).min(1.0);
                        let x = j(g.x_center, g.width, r).clamp(0.0, 1.0);
                        let y = j(g.y_center, g.height, r).clamp(0.0, 1.0);
                        (c, conf, BBox::new(x, y, w, h).unwrap())
                    } else {
                        (r.random_range(0..classes), conf, random_bbox(r, 0.02, 0.6))
                    }
                })
                .collect();
            OracleImage {
                id: format!("img{i}"),
                width,
                height,
                gts,
                dets,
            }
        })
        .collect()
}

struct OracleCell {
    ap: f64,
    recall: f64,
}

/// Brute-force evaluation of one (class, threshold, area, cap) cell.
fn oracle_cell(images: &[OracleImage], class: usize, thr: f64, lo: f64, hi: f64, cap: usize) -> Option<OracleCell> {
    let in_range = |b: &BBox, im: &OracleImage| {
        let a = b.width * f64::from(im.width) * b.height * f64::from(im.height);
        lo <= a && a < hi
    };
    let floor = if thr < 1.0 - 1e-10 { thr } else { 1.0 - 1e-10 };
    // (confidence, image, rank, status) with status: Some(true)=TP, Some(false)=FP, None=ignored
    let mut records: Vec<(f64, usize, usize, Option<bool>)> = Vec::new();
    let mut num_gt = 0usize;
    for (ii, im) in images.iter().enumerate() {
        let gts: Vec<(BBox, bool)> = im
            .gts
            .iter()
            .filter(|g| g.0 == class)
            .map(|g| (g.1, !in_range(&g.1, im)))
            .collect();
        num_gt += gts.iter().filter(|g| !g.1).count();
        let mut dets: Vec<(usize, f64, BBox)> = im
            .dets
            .iter()
            .enumerate()
            .filter(|(_, d)| d.0 == class)
            .map(|(k, d)| (k, d.1, d.2))
            .collect();
        // Selection sort: highest confidence first, earliest index on ties.
        for a in 0..dets.len() {
            let mut best = a;
            for b in a + 1..dets.len() {
                if dets[b].1 > dets[best].1 || (dets[b].1 == dets[best].1 && dets[b].0 < dets[best].0) {
                    best = b;
                }
            }
            dets.swap(a, best);
        }
        dets.truncate(cap);
        let mut used = vec![false; gts.len()];
        for (rank, &(_, conf, db)) in dets.iter().enumerate() {
            // Best among in-range candidates; later index wins ties.
            let pick = |want_ignored: bool, used: &Vec<bool>| {
                let mut choice: Option<(usize, f64)> = None;
                for (g, &(gb, ig)) in gts.iter().enumerate() {
                    if used[g] || ig != want_ignored {
                        continue;
                    }
                    let v = overlap(corners(&db), corners(&gb));
                    if v >= floor && choice.is_none_or(|(_, best)| v >= best) {
                        choice = Some((g, v));
                    }
                }
                choice
            };
            let status = if let Some((g, _)) = pick(false, &used) {
                used[g] = true;
                Some(true)
            } else if let Some((g, _)) = pick(true, &used) {
                used[g] = true;
                None
            } else if in_range(&db, im) {
                Some(false)
            } else {
                None
            };
            records.push((conf, ii, rank, status));
        }
    }
    if num_gt == 0 {
        return None;
    }
    records.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    for rec in &records {
        if let Some(hit) = rec.3 {
            seen += 1;
            tp += usize::from(hit);
            pts.push((tp as f64 / num_gt as f64, tp as f64 / seen as f64));
        }
    }
    let mut ap = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let best = pts
            .iter()
            .filter(|p| p.0 >= r)
            .map(|p| p.1)
            .fold(0.0f64, f64::max);
        ap += best;
    }
    Some(OracleCell {
        ap: ap / 101.0,
        recall: pts.last().map_or(0.0, |p| p.0),
    })
}

fn mean_of(values: Vec<f64>) -> f64 {
    if values.is_empty() {
        -1.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Brute-force twelve-row report: same row order as the table layout.
pub fn oracle_report(images: &[OracleImage], cfg: &EvalConfig) -> Vec<f64> {
    let top = *cfg.max_dets.last().unwrap();
    let a = &cfg.area_ranges;
    let all = (a.all.min, a.all.max);
    let buckets = [(a.small.min, a.small.max), (a.medium.min, a.medium.max), (a.large.min, a.large.max)];
    let metric = |thrs: &[f64], area: (f64, f64), cap: usize, want_ap: bool| {
        let mut vals = Vec::new();
        for c in 0..cfg.num_classes {
            for &t in thrs {
                if let Some(cell) = oracle_cell(images, c, t, area.0, area.1, cap) {
                    vals.push(if want_ap { cell.ap } else { cell.recall });
                }
            }
        }
        mean_of(vals)
    };
    let ts = &cfg.iou_thresholds;
    let mut rows = vec![
        metric(ts, all, top, true),
        metric(&[0.5], all, top, true),
        metric(&[0.75], all, top, true),
    ];
    for b in buckets {
        rows.push(metric(ts, b, top, true));
    }
    for &m in &cfg.max_dets {
        rows.push(metric(ts, all, m, false));
    }
    for b in buckets {
        rows.push(metric(ts, b, top, false));
    }
    rows
}

// ------------------------------------------------------------------ tensor

/// Nested-loop cross-correlation with the same accumulation order as the
/// documented contract: per input channel, window products in row-major
/// order, then that channel's bias.
pub fn conv_oracle(
    x: &[f32],
    (cin, h, w): (usize, usize, usize),
    k: &[f32],
    (cout, kh, kw): (usize, usize, usize),
    bias: &[f32],
    stride: usize,
) -> (Vec<f32>, usize, usize) {
    let oh = (h - kh) / stride + 1;
    let ow = (w - kw) / stride + 1;
    let mut out = Vec::with_capacity(cout * oh * ow);
    for i in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f64;
                for j in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let kv = k[((i * cin + j) * kh + ky) * kw + kx];
                            let xv = x[(j * h + oy * stride + ky) * w + ox * stride + kx];
                            acc += f64::from(kv) * f64::from(xv);
                        }
                    }
                    acc += f64::from(bias[j]);
                }
                out.push(acc as f32);
            }
        }
    }
    (out, oh, ow)
}

/// 0 = max, 1 = min, 2 = average.
pub fn pool_oracle(x: &[f32], (c, h, w): (usize, usize, usize), m: usize, s: usize, mode: u8) -> Vec<f32> {
    let oh = (h - m) / s + 1;
    let ow = (w - m) / s + 1;
    let mut out = Vec::new();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_hi = f32::NEG_INFINITY;
                let mut best_lo = f32::INFINITY;
                let mut sum = 0.0f64;
                for dy in 0..m {
                    for dx in 0..m {
                        let v = x[(ch * h + oy * s + dy) * w + ox * s + dx];
                        if v > best_hi {
                            best_hi = v;
                        }
                        if v < best_lo {
                            best_lo = v;
                        }
                        sum += f64::from(v);
                    }
                }
                out.push(match mode {
                    0 => best_hi,
                    1 => best_lo,
                    _ => (sum / (m * m) as f64) as f32,
                });
            }
        }
    }
    out
}

// ----------------------------------------------------------------- augment

/// Marks pixels whose centers fall inside the box.
pub fn rasterize(b: &BBox, w: usize, h: usize) -> Vec<u8> {
    let (x0, y0, x1, y1) = corners(b);
    let mut m = vec![0u8; w * h];
    for py in 0..h {
        for px in 0..w {
            let (cx, cy) = ((px as f64 + 0.5) / w as f64, (py as f64 + 0.5) / h as f64);
            if cx >= x0 && cx < x1 && cy >= y0 && cy < y1 {
                m[py * w + px] = 255;
            }
        }
    }
    m
}

/// Bounding box of the set pixels, in normalized center form.
pub fn extract_box(mask: &[u8], w: usize, h: usize) -> Option<BBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for py in 0..h {
        for px in 0..w {
            if mask[py * w + px] != 0 {
                x0 = x0.min(px);
                y0 = y0.min(py);
                x1 = x1.max(px + 1);
                y1 = y1.max(py + 1);
            }
        }
    }
    (x0 != usize::MAX).then(|| {
        let (fw, fh) = (w as f64, h as f64);
        BBox {
            x_center: (x0 + x1) as f64 / 2.0 / fw,
            y_center: (y0 + y1) as f64 / 2.0 / fh,
            width: (x1 - x0) as f64 / fw,
            height: (y1 - y0) as f64 / fh,
        }
    })
}
