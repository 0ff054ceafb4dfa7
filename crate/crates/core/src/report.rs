//! Training-run logs, metric dashboards and precision/recall comparison tables.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::svg::{self, Panel, Series, PALETTE};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("missing mandatory column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    BadNumber { row: usize, column: String, value: String },
    #[error("row {row}: epoch {epoch} does not follow {previous}")]
    NonMonotone { row: usize, epoch: u32, previous: u32 },
    #[error("row {row}, column `{column}`: {value} is out of range")]
    OutOfRange { row: usize, column: String, value: f64 },
    #[error("run `{0}` has no epochs")]
    EmptyLog(String),
    #[error("no runs to render")]
    NoRuns,
    #[error("criterion needs column `{0}`, which the log lacks")]
    CriterionUnavailable(&'static str),
    #[error("comparison table is empty")]
    EmptyTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRow {
    pub epoch: u32,
    pub train_box_loss: Option<f64>,
    pub train_obj_loss: Option<f64>,
    pub train_cls_loss: Option<f64>,
    pub val_box_loss: Option<f64>,
    pub val_obj_loss: Option<f64>,
    pub val_cls_loss: Option<f64>,
    /// Rates are fractions in `[0,1]`.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub map50: f64,
    pub map50_95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub name: String,
    pub rows: Vec<EpochRow>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Col {
    Epoch,
    TrainBox,
    TrainObj,
    TrainCls,
    ValBox,
    ValObj,
    ValCls,
    Precision,
    Recall,
    F1,
    Map50,
    Map5095,
}

fn column_for(header: &str) -> Option<Col> {
    let h = header.trim().to_ascii_lowercase();
    let h = h.strip_prefix("metrics/").unwrap_or(&h);
    Some(match h {
        "epoch" => Col::Epoch,
        "train/box_loss" | "train_box_loss" => Col::TrainBox,
        "train/obj_loss" | "train_obj_loss" => Col::TrainObj,
        "train/cls_loss" | "train_cls_loss" => Col::TrainCls,
        "val/box_loss" | "val_box_loss" => Col::ValBox,
        "val/obj_loss" | "val_obj_loss" => Col::ValObj,
        "val/cls_loss" | "val_cls_loss" => Col::ValCls,
        "precision" => Col::Precision,
        "recall" => Col::Recall,
        "f1" | "f1_score" => Col::F1,
        "map_0.5" | "map50" | "map@0.5" => Col::Map50,
        "map_0.5:0.95" | "map50_95" | "map@0.5:0.95" => Col::Map5095,
        _ => return None,
    })
}

const RATE_COLS: [Col; 5] = [Col::Precision, Col::Recall, Col::F1, Col::Map50, Col::Map5095];

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Reads a `results.csv`-style log. Headers are matched after trimming; unknown
/// columns are ignored. A rate column with any value above 1 is read as percent.
/// F1 is derived from precision and recall when the log has no F1 column.
pub fn parse_run_log(name: &str, text: &str) -> Result<RunLog, ReportError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| ReportError::Csv(e.to_string()))?.clone();
    let mapping: Vec<Option<Col>> = headers.iter().map(column_for).collect();
    let index_of = |c: Col| mapping.iter().position(|m| *m == Some(c));
    for (col, name) in [
        (Col::Epoch, "epoch"),
        (Col::Precision, "metrics/precision"),
        (Col::Recall, "metrics/recall"),
        (Col::Map50, "metrics/mAP_0.5"),
    ] {
        if index_of(col).is_none() {
            return Err(ReportError::MissingColumn(name));
        }
    }

    let mut raw: Vec<Vec<Option<f64>>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ReportError::Csv(e.to_string()))?;
        let mut values = vec![None; mapping.len()];
        for (i, field) in record.iter().enumerate() {
            if mapping.get(i).copied().flatten().is_none() || field.is_empty() {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| ReportError::BadNumber {
                row: row + 1,
                column: headers[i].to_string(),
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(ReportError::BadNumber {
                    row: row + 1,
                    column: headers[i].to_string(),
                    value: field.to_string(),
                });
            }
            values[i] = Some(v);
        }
        raw.push(values);
    }

    let mut scale = vec![1.0; mapping.len()];
    for col in RATE_COLS {
        if let Some(i) = index_of(col) {
            if raw.iter().any(|r| r[i].is_some_and(|v| v > 1.0)) {
                scale[i] = 0.01;
            }
        }
    }

    let mut rows: Vec<EpochRow> = Vec::with_capacity(raw.len());
    for (n, values) in raw.iter().enumerate() {
        let row = n + 1;
        let get = |c: Col| -> Result<Option<f64>, ReportError> {
            let Some(i) = index_of(c) else { return Ok(None) };
            let Some(v) = values[i].map(|v| v * scale[i]) else {
                return Ok(None);
            };
            let ok = if RATE_COLS.contains(&c) {
                (0.0..=1.0).contains(&v)
            } else {
                v >= 0.0
            };
            if !ok {
                return Err(ReportError::OutOfRange {
                    row,
                    column: headers[i].to_string(),
                    value: v,
                });
            }
            Ok(Some(v))
        };
        let required = |c: Col, name: &'static str| -> Result<f64, ReportError> {
            get(c)?.ok_or(ReportError::BadNumber {
                row,
                column: name.to_string(),
                value: String::new(),
            })
        };
        let epoch_f = required(Col::Epoch, "epoch")?;
        if epoch_f.fract() != 0.0 || epoch_f > u32::MAX as f64 {
            return Err(ReportError::BadNumber {
                row,
                column: "epoch".into(),
                value: epoch_f.to_string(),
            });
        }
        let epoch = epoch_f as u32;
        if let Some(prev) = rows.last() {
            if epoch <= prev.epoch {
                return Err(ReportError::NonMonotone {
                    row,
                    epoch,
                    previous: prev.epoch,
                });
            }
        }
        let precision = required(Col::Precision, "metrics/precision")?;
        let recall = required(Col::Recall, "metrics/recall")?;
        rows.push(EpochRow {
            epoch,
            train_box_loss: get(Col::TrainBox)?,
            train_obj_loss: get(Col::TrainObj)?,
            train_cls_loss: get(Col::TrainCls)?,
            val_box_loss: get(Col::ValBox)?,
            val_obj_loss: get(Col::ValObj)?,
            val_cls_loss: get(Col::ValCls)?,
            precision,
            recall,
            f1: match get(Col::F1)? {
                Some(f) => f,
                None => f1_of(precision, recall),
            },
            map50: required(Col::Map50, "metrics/mAP_0.5")?,
            map50_95: get(Col::Map5095)?,
        });
    }
    Ok(RunLog {
        name: name.to_string(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Criterion {
    #[default]
    Map50,
    Map50To95,
    Precision,
    Recall,
    F1,
    /// Smallest summed validation loss.
    MinValLoss,
    MinTrainLoss,
}

impl Criterion {
    pub fn parse(s: &str) -> Option<Criterion> {
        Some(match s.to_ascii_lowercase().as_str() {
            "map50" | "map" | "map_0.5" => Criterion::Map50,
            "map50_95" | "map_0.5:0.95" => Criterion::Map50To95,
            "precision" => Criterion::Precision,
            "recall" => Criterion::Recall,
            "f1" => Criterion::F1,
            "val_loss" | "min_val_loss" => Criterion::MinValLoss,
            "train_loss" | "min_train_loss" => Criterion::MinTrainLoss,
            _ => return None,
        })
    }

    /// Score to maximize for one row.
    fn score(self, r: &EpochRow) -> Result<f64, ReportError> {
        let sum = |parts: [Option<f64>; 3], name| -> Result<f64, ReportError> {
            parts
                .iter()
                .try_fold(0.0, |acc, p| p.map(|v| acc + v))
                .map(|s| -s)
                .ok_or(ReportError::CriterionUnavailable(name))
        };
        Ok(match self {
            Criterion::Map50 => r.map50,
            Criterion::Map50To95 => r
                .map50_95
                .ok_or(ReportError::CriterionUnavailable("metrics/mAP_0.5:0.95"))?,
            Criterion::Precision => r.precision,
            Criterion::Recall => r.recall,
            Criterion::F1 => r.f1,
            Criterion::MinValLoss => sum([r.val_box_loss, r.val_obj_loss, r.val_cls_loss], "val/*_loss")?,
            Criterion::MinTrainLoss => sum([r.train_box_loss, r.train_obj_loss, r.train_cls_loss], "train/*_loss")?,
        })
    }
}

/// Epoch with the best criterion value; the earliest wins ties.
pub fn best_epoch(log: &RunLog, criterion: Criterion) -> Result<u32, ReportError> {
    let mut best: Option<(f64, u32)> = None;
    for r in &log.rows {
        let s = criterion.score(r)?;
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, r.epoch));
        }
    }
    best.map(|(_, e)| e)
        .ok_or_else(|| ReportError::EmptyLog(log.name.clone()))
}

type Getter = fn(&EpochRow) -> Option<f64>;

/// Dashboard panels in a 2×5 grid, losses then rates.
pub const PANELS: [(&str, Getter); 10] = [
    ("train/box_loss", |r| r.train_box_loss),
    ("train/obj_loss", |r| r.train_obj_loss),
    ("train/cls_loss", |r| r.train_cls_loss),
    ("metrics/precision", |r| Some(r.precision)),
    ("metrics/recall", |r| Some(r.recall)),
    ("val/box_loss", |r| r.val_box_loss),
    ("val/obj_loss", |r| r.val_obj_loss),
    ("val/cls_loss", |r| r.val_cls_loss),
    ("metrics/mAP_0.5", |r| Some(r.map50)),
    ("metrics/mAP_0.5:0.95", |r| r.map50_95),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Dashboard {
    pub svg: String,
    pub csv: String,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn render_dashboard(runs: &[RunLog]) -> Result<Dashboard, ReportError> {
    if runs.is_empty() {
        return Err(ReportError::NoRuns);
    }
    if let Some(r) = runs.iter().find(|r| r.rows.is_empty()) {
        return Err(ReportError::EmptyLog(r.name.clone()));
    }
    let (pw, ph) = (260.0, 200.0);
    let legend_h = 16.0 * runs.len() as f64 + 8.0;
    let mut out = String::new();
    svg::begin(&mut out, pw * 5.0, ph * 2.0 + legend_h);
    for (k, (title, get)) in PANELS.iter().enumerate() {
        let series = runs
            .iter()
            .enumerate()
            .map(|(i, run)| Series {
                label: &run.name,
                points: run
                    .rows
                    .iter()
                    .filter_map(|r| get(r).map(|v| (r.epoch as f64, v)))
                    .collect(),
                color: PALETTE[i % PALETTE.len()],
                width: 1.5,
            })
            .filter(|s| !s.points.is_empty())
            .collect();
        svg::panel(
            &mut out,
            &Panel {
                title,
                x: (k % 5) as f64 * pw,
                y: (k / 5) as f64 * ph,
                width: pw,
                height: ph,
                x_range: None,
                y_range: None,
                series,
            },
        );
    }
    let entries: Vec<(&str, &str)> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| (r.name.as_str(), PALETTE[i % PALETTE.len()]))
        .collect();
    svg::legend(&mut out, 20.0, ph * 2.0 + 14.0, &entries);
    svg::end(&mut out);

    let mut csv = String::from(
        "run,epoch,train_box_loss,train_obj_loss,train_cls_loss,val_box_loss,val_obj_loss,val_cls_loss,precision,recall,f1,map50,map50_95\n",
    );
    for run in runs {
        for r in &run.rows {
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&run.name),
                r.epoch,
                opt(r.train_box_loss),
                opt(r.train_obj_loss),
                opt(r.train_cls_loss),
                opt(r.val_box_loss),
                opt(r.val_obj_loss),
                opt(r.val_cls_loss),
                r.precision,
                r.recall,
                r.f1,
                r.map50,
                opt(r.map50_95)
            )
            .unwrap();
        }
    }
    Ok(Dashboard { svg: out, csv })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One printed results row. Rates are in percent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub model: String,
    pub epochs: u32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub map: f64,
}

impl ComparisonRow {
    pub fn derived_f1(&self) -> f64 {
        f1_of(self.precision, self.recall)
    }
}

/// Largest allowed gap, in percentage points, between the printed F1 and
/// `2PR/(P+R)`.
pub const F1_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Flag {
    pub row: usize,
    pub model: String,
    pub epochs: u32,
    pub printed: f64,
    pub derived: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub flags: Vec<F1Flag>,
}

impl Comparison {
    pub fn render_markdown(&self) -> String {
        let mut out = String::from(
            "| Model | Epochs | Precision (%) | Recall (%) | F1 (%) | Derived F1 (%) | mAP (%) | F1 check |\n\
             |---|---:|---:|---:|---:|---:|---:|---|\n",
        );
        for (i, r) in self.rows.iter().enumerate() {
            let flagged = self.flags.iter().any(|f| f.row == i);
            writeln!(
                out,
                "| {} | {} | {:.1} | {:.1} | {:.1} | {:.2} | {:.1} | {} |",
                r.model.replace('|', "\\|"),
                r.epochs,
                r.precision,
                r.recall,
                r.f1,
                r.derived_f1(),
                r.map,
                if flagged { "MISMATCH" } else { "ok" }
            )
            .unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,epochs,precision,recall,f1,derived_f1,map,f1_consistent\n");
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{:.4},{},{}",
                csv_field(&r.model),
                r.epochs,
                r.precision,
                r.recall,
                r.f1,
                r.derived_f1(),
                r.map,
                !self.flags.iter().any(|f| f.row == i)
            )
            .unwrap();
        }
        out
    }
}

pub fn comparison_table(rows: &[ComparisonRow]) -> Result<Comparison, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyTable);
    }
    let flags = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| (r.derived_f1() - r.f1).abs() > F1_TOLERANCE)
        .map(|(row, r)| F1Flag {
            row,
            model: r.model.clone(),
            epochs: r.epochs,
            printed: r.f1,
            derived: r.derived_f1(),
        })
        .collect();
    Ok(Comparison {
        rows: rows.to_vec(),
        flags,
    })
}

/// Reads `model,epochs,precision,recall,f1,map` rows (percent).
pub fn parse_comparison_csv(text: &str) -> Result<Vec<ComparisonRow>, ReportError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| ReportError::Csv(e.to_string()))?.clone();
    let find = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(ReportError::MissingColumn(name))
    };
    let cols = [
        find("model")?,
        find("epochs")?,
        find("precision")?,
        find("recall")?,
        find("f1")?,
        find("map")?,
    ];
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ReportError::Csv(e.to_string()))?;
        let num = |k: usize| -> Result<f64, ReportError> {
            let field = record.get(cols[k]).unwrap_or("");
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ReportError::BadNumber {
                    row: n + 1,
                    column: headers[cols[k]].to_string(),
                    value: field.to_string(),
                })
        };
        let epochs = num(1)?;
        if epochs < 0.0 || epochs.fract() != 0.0 {
            return Err(ReportError::BadNumber {
                row: n + 1,
                column: "epochs".into(),
                value: epochs.to_string(),
            });
        }
        rows.push(ComparisonRow {
            model: record.get(cols[0]).unwrap_or("").to_string(),
            epochs: epochs as u32,
            precision: num(2)?,
            recall: num(3)?,
            f1: num(4)?,
            map: num(5)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG: &str = "\
               epoch,      train/box_loss,      train/obj_loss,      train/cls_loss,   metrics/precision,      metrics/recall,     metrics/mAP_0.5,metrics/mAP_0.5:0.95,        val/box_loss,        val/obj_loss,        val/cls_loss,               x/lr0
                   0,             0.11,             0.03,             0.05,               0.2,               0.4,              0.1,              0.05,             0.09,            0.02,            0.04,  0.01
                   1,             0.08,             0.02,             0.03,               0.5,               0.5,              0.4,              0.20,             0.07,            0.02,            0.03,  0.01
                   2,             0.06,             0.02,             0.02,               0.6,               0.7,              0.4,              0.25,             0.08,            0.02,            0.03,  0.01
";

    #[test]
    fn parses_padded_headers() {
        let log = parse_run_log("a", LOG).unwrap();
        assert_eq!(log.rows.len(), 3);
        assert_eq!(log.rows[1].train_obj_loss, Some(0.02));
        // no F1 column: 2·0.2·0.4/0.6
        assert!((log.rows[0].f1 - 0.16 / 0.6).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_monotone_and_missing() {
        let text =
            "epoch,metrics/precision,metrics/recall,metrics/mAP_0.5\n1,0.1,0.1,0.1\n3,0.1,0.1,0.1\n2,0.1,0.1,0.1\n";
        assert_eq!(
            parse_run_log("x", text),
            Err(ReportError::NonMonotone {
                row: 3,
                epoch: 2,
                previous: 3
            })
        );
        assert_eq!(
            parse_run_log("x", "epoch,metrics/precision\n1,0.5\n"),
            Err(ReportError::MissingColumn("metrics/recall"))
        );
    }

    #[test]
    fn percent_columns_are_scaled() {
        let text = "epoch,precision,recall,mAP_0.5\n1,50,40,0.5\n2,60,45,30\n";
        let log = parse_run_log("p", text).unwrap();
        assert_eq!(log.rows[0].precision, 0.5);
        assert_eq!(log.rows[0].map50, 0.005);
        assert_eq!(log.rows[1].map50, 0.3);
    }

    #[test]
    fn best_epoch_rules() {
        let log = parse_run_log("a", LOG).unwrap();
        // mAP plateau at 0.4: the earlier epoch wins
        assert_eq!(best_epoch(&log, Criterion::Map50).unwrap(), 1);
        // summed val loss 0.15, 0.12, 0.13
        assert_eq!(best_epoch(&log, Criterion::MinValLoss).unwrap(), 1);
        assert_eq!(best_epoch(&log, Criterion::Recall).unwrap(), 2);
        let bare = parse_run_log("b", "epoch,precision,recall,map50\n1,0.1,0.1,0.1\n").unwrap();
        assert!(matches!(
            best_epoch(&bare, Criterion::MinValLoss),
            Err(ReportError::CriterionUnavailable(_))
        ));
    }

    #[test]
    fn dashboard_is_deterministic_and_overlays_runs() {
        let a = parse_run_log("a", LOG).unwrap();
        let mut b = a.clone();
        b.name = "b".into();
        let one = render_dashboard(std::slice::from_ref(&a)).unwrap();
        assert_eq!(one, render_dashboard(std::slice::from_ref(&a)).unwrap());
        assert_eq!(one.svg.matches("class=\"panel\"").count(), 10);
        let two = render_dashboard(&[a, b]).unwrap();
        assert_eq!(two.svg.matches("<polyline").count(), 20);
        assert_eq!(two.csv.lines().count(), 7);
        let empty = RunLog {
            name: "e".into(),
            rows: vec![],
        };
        assert_eq!(render_dashboard(&[empty]), Err(ReportError::EmptyLog("e".into())));
    }

    #[test]
    fn fabricated_row_is_flagged() {
        let row = |p, r, f| ComparisonRow {
            model: "m".into(),
            epochs: 100,
            precision: p,
            recall: r,
            f1: f,
            map: 50.0,
        };
        let c = comparison_table(&[row(90.0, 50.0, 80.0)]).unwrap();
        assert_eq!(c.flags.len(), 1);
        assert!((c.flags[0].derived - 900.0 / 14.0).abs() < 1e-12);
        assert!(c.render_markdown().contains("MISMATCH"));
        let ok = comparison_table(&[row(50.0, 50.0, 50.0)]).unwrap();
        assert!(ok.flags.is_empty());
        assert_eq!(ok.render_markdown().lines().count(), 3);
        assert_eq!(comparison_table(&[]), Err(ReportError::EmptyTable));
    }

    #[test]
    fn comparison_csv_round_trip() {
        let text = "model,epochs,precision,recall,f1,map\nyolov5s,100,74.2,74.8,74.5,83.5\n";
        let rows = parse_comparison_csv(text).unwrap();
        assert_eq!(rows[0].epochs, 100);
        assert_eq!(rows[0].recall, 74.8);
        assert!(parse_comparison_csv("model,epochs\n").is_err());
    }
}
