use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{average_precision, match_detections, pr_curve, AreaRange, EvalConfig, EvalSet, MatchQuery};
use crate::{par, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "mAP")]
    Precision,
    #[serde(rename = "mAR")]
    Recall,
}

/// One line of the report. `value` is -1 when the cell has no ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: Metric,
    pub iou: String,
    pub area: String,
    #[serde(rename = "maxDets")]
    pub max_dets: usize,
    pub value: f64,
}

/// Aggregates for a single class; -1 where the class has no ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class_id: usize,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub per_class: Vec<ClassSummary>,
}

#[derive(Clone, Copy)]
struct Cell {
    ap: f64,
    recall: f64,
}

/// AP/recall for every (class, threshold) of one (area, maxDets) pair.
struct Grid {
    thresholds: usize,
    cells: Vec<Option<Cell>>,
}

impl Grid {
    fn get(&self, class: usize, t: usize) -> Option<Cell> {
        self.cells[class * self.thresholds + t]
    }

    /// Mean of `pick` over every class with ground truth and every
    /// threshold in `ts`, summed class-major. -1 if nothing qualifies.
    fn mean(&self, classes: impl Iterator<Item = usize>, ts: &[usize], pick: fn(Cell) -> f64) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for c in classes {
            for &t in ts {
                if let Some(cell) = self.get(c, t) {
                    sum += pick(cell);
                    n += 1;
                }
            }
        }
        if n == 0 {
            -1.0
        } else {
            sum / n as f64
        }
    }
}

fn evaluate_grid(set: &EvalSet, config: &EvalConfig, area: &AreaRange, max_dets: usize) -> Grid {
    let nt = config.iou_thresholds.len();
    let cells = par::map_range(config.num_classes * nt, |job| {
        let query = MatchQuery {
            class_id: job / nt,
            iou_threshold: config.iou_thresholds[job % nt],
            area: area.clone(),
            max_dets,
        };
        let m = match_detections(set, &query);
        let num_gt = m.num_gt();
        (num_gt > 0).then(|| {
            let curve = pr_curve(&m, num_gt);
            Cell {
                ap: average_precision(&curve),
                recall: curve.final_recall(),
            }
        })
    });
    Grid { thresholds: nt, cells }
}

fn iou_label(config: &EvalConfig, ts: &[usize]) -> String {
    let t = &config.iou_thresholds;
    match ts {
        [single] => format!("{:.2}", t[*single]),
        _ => format!("{:.2}:{:.2}", t[ts[0]], t[ts[ts.len() - 1]]),
    }
}

/// Computes the mAP/mAR table.
///
/// Precision rows: all thresholds, 0.50 and 0.75 over `all`, then all
/// thresholds over `small`, `medium`, `large`, each at the largest maxDets.
/// Recall rows: all thresholds over `all` at each maxDets, then the three
/// size buckets at the largest maxDets. A row whose threshold is absent from
/// the config, or whose cells have no ground truth, reports -1.
pub fn full_report(set: &EvalSet, config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    let areas = &config.area_ranges;
    let top = *config.max_dets.last().expect("validated non-empty");
    let all_t: Vec<usize> = (0..config.iou_thresholds.len()).collect();
    let classes = || 0..config.num_classes;

    let main = evaluate_grid(set, config, &areas.all, top);
    let buckets = [&areas.small, &areas.medium, &areas.large]
        .map(|a| (a, evaluate_grid(set, config, a, top)));
    let capped: Vec<(usize, Grid)> = config.max_dets[..config.max_dets.len() - 1]
        .iter()
        .map(|&m| (m, evaluate_grid(set, config, &areas.all, m)))
        .collect();

    let ap = |c: Cell| c.ap;
    let rec = |c: Cell| c.recall;
    let row = |metric, ts: &[usize], area: &AreaRange, max_dets, value| ReportRow {
        metric,
        iou: iou_label(config, ts),
        area: area.name.clone(),
        max_dets,
        value,
    };

    let mut rows = vec![row(Metric::Precision, &all_t, &areas.all, top, main.mean(classes(), &all_t, ap))];
    for t in [0.5, 0.75] {
        let value = match config.threshold_index(t) {
            Some(i) => main.mean(classes(), &[i], ap),
            None => -1.0,
        };
        rows.push(ReportRow {
            iou: format!("{t:.2}"),
            ..row(Metric::Precision, &all_t, &areas.all, top, value)
        });
    }
    for (area, grid) in &buckets {
        rows.push(row(Metric::Precision, &all_t, area, top, grid.mean(classes(), &all_t, ap)));
    }
    for (m, grid) in &capped {
        rows.push(row(Metric::Recall, &all_t, &areas.all, *m, grid.mean(classes(), &all_t, rec)));
    }
    rows.push(row(Metric::Recall, &all_t, &areas.all, top, main.mean(classes(), &all_t, rec)));
    for (area, grid) in &buckets {
        rows.push(row(Metric::Recall, &all_t, area, top, grid.mean(classes(), &all_t, rec)));
    }

    let single = |t: f64, c: usize| match config.threshold_index(t) {
        Some(i) => main.mean(std::iter::once(c), &[i], ap),
        None => -1.0,
    };
    let per_class = classes()
        .map(|c| ClassSummary {
            class_id: c,
            ap: main.mean(std::iter::once(c), &all_t, ap),
            ap50: single(0.5, c),
            ap75: single(0.75, c),
            ar: main.mean(std::iter::once(c), &all_t, rec),
        })
        .collect();

    Ok(EvalReport { rows, per_class })
}

const HEADERS: [&str; 2] = ["Mean Average Precision", "Mean Average Recall"];

impl EvalReport {
    pub fn value(&self, metric: Metric, iou: &str, area: &str, max_dets: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.iou == iou && r.area == area && r.max_dets == max_dets)
            .map(|r| r.value)
    }

    /// Two blocks of `value IOU Area maxDets` lines, precision then recall.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (metric, header) in [Metric::Precision, Metric::Recall].into_iter().zip(HEADERS) {
            let _ = writeln!(out, "{header:<24}{:<11}{:<8}maxDets", "IOU", "Area");
            for r in self.rows.iter().filter(|r| r.metric == metric) {
                let _ = writeln!(out, "{:<24.3}{:<11}{:<8}{}", r.value, r.iou, r.area, r.max_dets);
            }
        }
        out
    }

    /// Per-class AP/AR table, using `names` where available.
    pub fn per_class_table(&self, names: &[String]) -> String {
        let mut out = format!("{:<16}{:<8}{:<8}{:<8}{}\n", "Class", "AP", "AP50", "AP75", "AR");
        for c in &self.per_class {
            let name = names.get(c.class_id).cloned().unwrap_or_else(|| c.class_id.to_string());
            let _ = writeln!(out, "{name:<16}{:<8.3}{:<8.3}{:<8.3}{:.3}", c.ap, c.ap50, c.ap75, c.ar);
        }
        out
    }

    /// JSON array with one object per row.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("rows serialize")
    }
}
