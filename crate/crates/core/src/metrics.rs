//! Detection matching and evaluation metrics.
//!
//! Matching is done per image and per class: detections are taken in
//! descending confidence (ties by input order) and each claims the unmatched
//! ground truth of its class with the highest IoU, provided that IoU reaches
//! the threshold. Because a detection's outcome depends only on detections
//! ranked above it, matching once and then filtering by confidence gives the
//! same counts as filtering first, which is what the threshold sweeps rely on.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::{box_iou, iou, to_corners};
use crate::labelfmt::{Annotation, ClassTable, Detection};

/// A rate plus whether its denominator was non-zero. Undefined rates are 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ratio {
    pub value: f64,
    pub defined: bool,
}

impl Ratio {
    fn of(num: f64, den: f64) -> Ratio {
        if den > 0.0 {
            Ratio {
                value: num / den,
                defined: true,
            }
        } else {
            Ratio {
                value: 0.0,
                defined: false,
            }
        }
    }
}

/// `TP / (TP + FP)`.
pub fn precision(tp: usize, fp: usize) -> Ratio {
    Ratio::of(tp as f64, (tp + fp) as f64)
}

/// `TP / (TP + FN)`.
pub fn recall(tp: usize, fn_: usize) -> Ratio {
    Ratio::of(tp as f64, (tp + fn_) as f64)
}

/// Harmonic mean `2PR / (P + R)`.
pub fn f1(precision: f64, recall: f64) -> Ratio {
    Ratio::of(2.0 * precision * recall, precision + recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DetOutcome {
    TruePositive { ground_truth: usize },
    FalsePositive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    /// Outcome per detection, in input order.
    pub detections: Vec<DetOutcome>,
    /// Matching detection per ground truth, in input order; `None` is a miss.
    pub ground_truths: Vec<Option<usize>>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));
    order
}

/// Matches one image's detections to its ground truths.
pub fn match_detections(dets: &[Detection], gts: &[Annotation], iou_threshold: f64) -> MatchResult {
    let mut det_out = vec![DetOutcome::FalsePositive; dets.len()];
    let mut gt_out: Vec<Option<usize>> = vec![None; gts.len()];
    let gt_corners: Vec<_> = gts.iter().map(|g| to_corners(&g.bbox)).collect();

    for di in confidence_order(dets) {
        let d = &dets[di];
        let dc = to_corners(&d.bbox);
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if g.class_id != d.class_id || gt_out[gi].is_some() {
                continue;
            }
            let v = iou(&dc, &gt_corners[gi]);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, _)) = best {
            gt_out[gi] = Some(di);
            det_out[di] = DetOutcome::TruePositive { ground_truth: gi };
        }
    }
    let tp = gt_out.iter().filter(|m| m.is_some()).count();
    MatchResult {
        detections: det_out,
        ground_truths: gt_out,
        tp,
        fp: dets.len() - tp,
        fn_: gts.len() - tp,
    }
}

/// Detections and ground truths of one image.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ImageEval {
    pub id: String,
    pub detections: Vec<Detection>,
    pub ground_truths: Vec<Annotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
}

/// Cumulative precision/recall down a confidence ranking. Detections with equal
/// confidence are merged into one point, since no threshold separates them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub class_id: usize,
    pub total_gt: usize,
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// TP and FP counts among detections with confidence ≥ `threshold`.
    pub fn counts_at(&self, threshold: f64) -> (usize, usize) {
        let kept = self.points.partition_point(|p| p.confidence >= threshold);
        match kept {
            0 => (0, 0),
            n => (self.points[n - 1].tp, self.points[n - 1].fp),
        }
    }
}

/// Every image matched once, plus per-class rankings of scored detections.
#[derive(Debug, Clone)]
pub struct MatchedDataset {
    pub iou_threshold: f64,
    /// (confidence, is_tp) per class, sorted by descending confidence with ties
    /// in (image, detection) order.
    ranked: Vec<Vec<(f64, bool)>>,
    gt_counts: Vec<usize>,
}

impl MatchedDataset {
    pub fn new(images: &[ImageEval], iou_threshold: f64) -> Self {
        let matches: Vec<MatchResult> = images
            .par_iter()
            .map(|img| match_detections(&img.detections, &img.ground_truths, iou_threshold))
            .collect();
        let classes = images
            .iter()
            .flat_map(|i| {
                i.detections
                    .iter()
                    .map(|d| d.class_id)
                    .chain(i.ground_truths.iter().map(|g| g.class_id))
            })
            .max()
            .map_or(0, |m| m + 1);
        let mut ranked: Vec<Vec<(f64, bool, usize, usize)>> = vec![Vec::new(); classes];
        let mut gt_counts = vec![0; classes];
        for (ii, (img, m)) in images.iter().zip(&matches).enumerate() {
            for g in &img.ground_truths {
                gt_counts[g.class_id] += 1;
            }
            for (di, (d, o)) in img.detections.iter().zip(&m.detections).enumerate() {
                let tp = matches!(o, DetOutcome::TruePositive { .. });
                ranked[d.class_id].push((d.confidence, tp, ii, di));
            }
        }
        let ranked = ranked
            .into_iter()
            .map(|mut r| {
                r.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.3).cmp(&(b.2, b.3))));
                r.into_iter().map(|(c, tp, _, _)| (c, tp)).collect()
            })
            .collect();
        MatchedDataset {
            iou_threshold,
            ranked,
            gt_counts,
        }
    }

    /// One past the largest class id seen in detections or ground truths.
    pub fn class_span(&self) -> usize {
        self.gt_counts.len()
    }

    pub fn ground_truths(&self, class_id: usize) -> usize {
        self.gt_counts.get(class_id).copied().unwrap_or(0)
    }

    pub fn detections(&self, class_id: usize) -> usize {
        self.ranked.get(class_id).map_or(0, Vec::len)
    }

    /// Classes with at least one ground truth, ascending.
    pub fn scored_classes(&self) -> Vec<usize> {
        (0..self.class_span()).filter(|&c| self.gt_counts[c] > 0).collect()
    }

    pub fn pr_curve(&self, class_id: usize) -> PrCurve {
        let total_gt = self.ground_truths(class_id);
        let ranked = self.ranked.get(class_id).map_or(&[][..], Vec::as_slice);
        let mut points: Vec<PrPoint> = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        for (i, &(conf, is_tp)) in ranked.iter().enumerate() {
            if is_tp {
                tp += 1;
            } else {
                fp += 1;
            }
            if ranked.get(i + 1).is_some_and(|next| next.0 == conf) {
                continue;
            }
            points.push(PrPoint {
                confidence: conf,
                precision: precision(tp, fp).value,
                recall: recall(tp, total_gt - tp).value,
                tp,
                fp,
            });
        }
        PrCurve {
            class_id,
            total_gt,
            points,
        }
    }
}

pub fn pr_curve(images: &[ImageEval], class_id: usize, iou_threshold: f64) -> PrCurve {
    MatchedDataset::new(images, iou_threshold).pr_curve(class_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Area under the monotone precision envelope over all recall levels.
    #[default]
    AllPoint,
    /// Mean envelope precision at recall 0, 0.1, …, 1.
    ElevenPoint,
}

/// All-point interpolated AP.
pub fn average_precision(curve: &PrCurve) -> f64 {
    average_precision_with(curve, Interpolation::AllPoint)
}

pub fn average_precision_with(curve: &PrCurve, method: Interpolation) -> f64 {
    if curve.total_gt == 0 || curve.points.is_empty() {
        return 0.0;
    }
    let mut envelope: Vec<f64> = curve.points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len() - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    match method {
        Interpolation::AllPoint => {
            let mut area = 0.0;
            let mut prev_recall = 0.0;
            for (p, env) in curve.points.iter().zip(&envelope) {
                area += (p.recall - prev_recall) * env;
                prev_recall = p.recall;
            }
            area
        }
        Interpolation::ElevenPoint => {
            let total: f64 = (0..=10)
                .map(|k| {
                    let r = k as f64 / 10.0;
                    curve
                        .points
                        .iter()
                        .position(|p| p.recall >= r - 1e-12)
                        .map_or(0.0, |i| envelope[i])
                })
                .sum();
            total / 11.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class_id: usize,
    pub ground_truths: usize,
    pub detections: usize,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport {
    pub iou_threshold: f64,
    /// Classes with at least one ground truth.
    pub per_class: Vec<ClassAp>,
    /// Mean of `per_class` APs; 0 when no class has ground truth.
    pub map: f64,
}

pub fn mean_average_precision(images: &[ImageEval], iou_threshold: f64, method: Interpolation) -> MapReport {
    let matched = MatchedDataset::new(images, iou_threshold);
    map_from(&matched, method)
}

fn map_from(matched: &MatchedDataset, method: Interpolation) -> MapReport {
    let per_class: Vec<ClassAp> = matched
        .scored_classes()
        .into_iter()
        .map(|c| ClassAp {
            class_id: c,
            ground_truths: matched.ground_truths(c),
            detections: matched.detections(c),
            ap: average_precision_with(&matched.pr_curve(c), method),
        })
        .collect();
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|c| c.ap).sum::<f64>() / per_class.len() as f64
    };
    MapReport {
        iou_threshold: matched.iou_threshold,
        per_class,
        map,
    }
}

/// mAP at IoU 0.5 with all-point interpolation.
pub fn map_at_50(images: &[ImageEval]) -> MapReport {
    mean_average_precision(images, 0.5, Interpolation::AllPoint)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Curve {
    pub thresholds: Vec<f64>,
    /// Unweighted mean over scored classes at each threshold.
    pub mean_f1: Vec<f64>,
    /// (class id, F1 per threshold) for each scored class.
    pub per_class: Vec<(usize, Vec<f64>)>,
    /// Lowest threshold reaching the maximum mean F1.
    pub best_threshold: f64,
    pub best_f1: f64,
}

impl F1Curve {
    /// `threshold,mean_f1,<class>...` with one row per threshold.
    pub fn to_csv(&self, classes: Option<&ClassTable>) -> String {
        let mut out = String::from("threshold,mean_f1");
        for (id, _) in &self.per_class {
            let name = classes
                .and_then(|t| t.name(*id))
                .map_or_else(|| id.to_string(), str::to_string);
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (k, t) in self.thresholds.iter().enumerate() {
            let _ = write!(out, "{t},{}", self.mean_f1[k]);
            for (_, f) in &self.per_class {
                let _ = write!(out, ",{}", f[k]);
            }
            out.push('\n');
        }
        out
    }
}

/// `steps + 1` evenly spaced thresholds `k / steps` over `[0, 1]`.
pub fn threshold_grid(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|k| k as f64 / steps as f64).collect()
}

/// Per-class precision, recall and F1 keeping detections with confidence ≥ `t`.
pub fn class_prf_at(curve: &PrCurve, threshold: f64) -> (Ratio, Ratio, Ratio) {
    let (tp, fp) = curve.counts_at(threshold);
    let p = precision(tp, fp);
    let r = recall(tp, curve.total_gt - tp);
    (p, r, f1(p.value, r.value))
}

pub fn f1_confidence_curve(images: &[ImageEval], iou_threshold: f64, steps: usize) -> F1Curve {
    f1_curve_from(&MatchedDataset::new(images, iou_threshold), &threshold_grid(steps))
}

fn f1_curve_from(matched: &MatchedDataset, thresholds: &[f64]) -> F1Curve {
    let curves: Vec<PrCurve> = matched
        .scored_classes()
        .into_iter()
        .map(|c| matched.pr_curve(c))
        .collect();
    let per_class: Vec<(usize, Vec<f64>)> = curves
        .iter()
        .map(|c| {
            let vals = thresholds.iter().map(|&t| class_prf_at(c, t).2.value).collect();
            (c.class_id, vals)
        })
        .collect();
    let mean_f1: Vec<f64> = (0..thresholds.len())
        .map(|i| {
            if per_class.is_empty() {
                0.0
            } else {
                per_class.iter().map(|(_, v)| v[i]).sum::<f64>() / per_class.len() as f64
            }
        })
        .collect();
    let mut best = 0;
    for (i, v) in mean_f1.iter().enumerate() {
        if *v > mean_f1[best] {
            best = i;
        }
    }
    F1Curve {
        best_threshold: thresholds.get(best).copied().unwrap_or(0.0),
        best_f1: mean_f1.get(best).copied().unwrap_or(0.0),
        thresholds: thresholds.to_vec(),
        mean_f1,
        per_class,
    }
}

/// `(C+1)×(C+1)` counts: rows are ground-truth classes, columns predicted
/// classes, and index `C` is background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn background(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> usize {
        self.counts[gt][pred]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Right-aligned grid with class ids; the last row and column are background.
    pub fn render_text(&self) -> String {
        let width = self
            .counts
            .iter()
            .flatten()
            .max()
            .map_or(1, |m| m.to_string().len())
            .max(3);
        let head = |i: usize| {
            if i == self.num_classes {
                "bg".to_string()
            } else {
                i.to_string()
            }
        };
        let mut out = format!("{:>width$}", "gt\\p");
        for j in 0..=self.num_classes {
            let _ = write!(out, " {:>width$}", head(j));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{:>width$}", head(i));
            for v in row {
                let _ = write!(out, " {v:>width$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self, classes: Option<&ClassTable>) -> String {
        let label = |i: usize| -> String {
            if i == self.num_classes {
                "background".into()
            } else {
                classes
                    .and_then(|t| t.name(i).map(str::to_string))
                    .unwrap_or_else(|| i.to_string())
            }
        };
        let mut out = String::from("gt\\pred");
        for j in 0..=self.num_classes {
            out.push(',');
            out.push_str(&label(j));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&label(i));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Class-agnostic spatial matching: pairs with IoU ≥ `iou_threshold` are taken
/// greedily by descending IoU (ties by ground-truth then detection index), each
/// box used at most once. Detections below `confidence_threshold` are ignored.
pub fn confusion_matrix(
    images: &[ImageEval],
    num_classes: usize,
    confidence_threshold: f64,
    iou_threshold: f64,
) -> ConfusionMatrix {
    let bg = num_classes;
    let per_image: Vec<Vec<(usize, usize)>> = images
        .par_iter()
        .map(|img| {
            let dets: Vec<&Detection> = img
                .detections
                .iter()
                .filter(|d| d.confidence >= confidence_threshold)
                .collect();
            let mut pairs = Vec::new();
            for (gi, g) in img.ground_truths.iter().enumerate() {
                for (di, d) in dets.iter().enumerate() {
                    let v = box_iou(&g.bbox, &d.bbox);
                    if v >= iou_threshold && v > 0.0 {
                        pairs.push((v, gi, di));
                    }
                }
            }
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
            let mut gt_used = vec![false; img.ground_truths.len()];
            let mut det_used = vec![false; dets.len()];
            let mut cells = Vec::new();
            for (_, gi, di) in pairs {
                if gt_used[gi] || det_used[di] {
                    continue;
                }
                gt_used[gi] = true;
                det_used[di] = true;
                cells.push((img.ground_truths[gi].class_id.min(bg), dets[di].class_id.min(bg)));
            }
            for (g, used) in img.ground_truths.iter().zip(&gt_used) {
                if !used {
                    cells.push((g.class_id.min(bg), bg));
                }
            }
            for (d, used) in dets.iter().zip(&det_used) {
                if !used {
                    cells.push((bg, d.class_id.min(bg)));
                }
            }
            cells
        })
        .collect();
    let mut counts = vec![vec![0; num_classes + 1]; num_classes + 1];
    for (r, c) in per_image.into_iter().flatten() {
        counts[r][c] += 1;
    }
    ConfusionMatrix { num_classes, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    /// Number of intervals in the confidence grid.
    pub f1_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: 0.5,
            interpolation: Interpolation::AllPoint,
            f1_steps: 1000,
        }
    }
}

/// Per-class row of an evaluation. Rates are taken at the best mean-F1 threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassEval {
    pub class_id: usize,
    pub name: Option<String>,
    pub ground_truths: usize,
    pub detections: usize,
    /// `None` when the class has no ground truth.
    pub ap: Option<f64>,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub images: usize,
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    pub map: f64,
    pub best_threshold: f64,
    pub best_mean_f1: f64,
    /// Micro-averaged rates over all classes at `best_threshold`.
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
    pub classes: Vec<ClassEval>,
}

/// Full evaluation: per-class AP, mAP, the F1-confidence sweep, and P/R/F1 at
/// the sweep's best threshold.
pub fn evaluate(images: &[ImageEval], cfg: &EvalConfig, classes: Option<&ClassTable>) -> EvalReport {
    let matched = MatchedDataset::new(images, cfg.iou_threshold);
    let map = map_from(&matched, cfg.interpolation);
    let curve = f1_curve_from(&matched, &threshold_grid(cfg.f1_steps));
    let t = curve.best_threshold;

    let listed: BTreeSet<usize> = (0..matched.class_span())
        .filter(|&c| matched.ground_truths(c) > 0 || matched.detections(c) > 0)
        .collect();
    let (mut tp, mut fp, mut gts) = (0, 0, 0);
    let rows = listed
        .into_iter()
        .map(|c| {
            let pr = matched.pr_curve(c);
            let (p, r, f) = class_prf_at(&pr, t);
            let (ctp, cfp) = pr.counts_at(t);
            tp += ctp;
            fp += cfp;
            gts += pr.total_gt;
            ClassEval {
                class_id: c,
                name: classes.and_then(|tb| tb.name(c).map(str::to_string)),
                ground_truths: pr.total_gt,
                detections: matched.detections(c),
                ap: map.per_class.iter().find(|a| a.class_id == c).map(|a| a.ap),
                precision: p,
                recall: r,
                f1: f,
            }
        })
        .collect();
    let p = precision(tp, fp);
    let r = recall(tp, gts - tp);
    EvalReport {
        images: images.len(),
        iou_threshold: cfg.iou_threshold,
        interpolation: cfg.interpolation,
        map: map.map,
        best_threshold: t,
        best_mean_f1: curve.best_f1,
        precision: p,
        recall: r,
        f1: f1(p.value, r.value),
        classes: rows,
    }
}

fn fmt_ratio(r: &Ratio) -> String {
    if r.defined {
        format!("{:.6}", r.value)
    } else {
        String::new()
    }
}

impl EvalReport {
    /// `class,name,ap,precision,recall,f1` with undefined values left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,name,ground_truths,detections,ap,precision,recall,f1\n");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.class_id,
                c.name.as_deref().unwrap_or(""),
                c.ground_truths,
                c.detections,
                c.ap.map(|v| format!("{v:.6}")).unwrap_or_default(),
                fmt_ratio(&c.precision),
                fmt_ratio(&c.recall),
                fmt_ratio(&c.f1)
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn render_text(&self) -> String {
        let dash = |r: &Ratio| {
            if r.defined {
                format!("{:>6.1}", r.value * 100.0)
            } else {
                format!("{:>6}", "-")
            }
        };
        let mut out = format!(
            "images: {}   mAP@{:.2}: {:.4}   best conf {:.3} (mean F1 {:.4})\n\n",
            self.images, self.iou_threshold, self.map, self.best_threshold, self.best_mean_f1
        );
        let _ = writeln!(
            out,
            "{:>5}  {:<12} {:>5} {:>5} {:>6} {:>6} {:>6} {:>6}",
            "class", "name", "gt", "det", "AP", "P%", "R%", "F1%"
        );
        for c in &self.classes {
            let ap =
                c.ap.map(|v| format!("{:>6.1}", v * 100.0))
                    .unwrap_or(format!("{:>6}", "-"));
            let _ = writeln!(
                out,
                "{:>5}  {:<12} {:>5} {:>5} {} {} {} {}",
                c.class_id,
                c.name.as_deref().unwrap_or("-"),
                c.ground_truths,
                c.detections,
                ap,
                dash(&c.precision),
                dash(&c.recall),
                dash(&c.f1)
            );
        }
        let _ = writeln!(
            out,
            "\n  all  P {}  R {}  F1 {}",
            dash(&self.precision).trim(),
            dash(&self.recall).trim(),
            dash(&self.f1).trim()
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelfmt::NormBox;

    fn nb(cx: f64, cy: f64, w: f64, h: f64) -> NormBox {
        NormBox::new(cx, cy, w, h).unwrap()
    }

    fn gt(c: usize, b: NormBox) -> Annotation {
        Annotation::new(c, b)
    }

    fn det(c: usize, b: NormBox, conf: f64) -> Detection {
        Detection::new(c, b, conf)
    }

    fn image(dets: Vec<Detection>, gts: Vec<Annotation>) -> ImageEval {
        ImageEval {
            id: String::new(),
            detections: dets,
            ground_truths: gts,
        }
    }

    #[test]
    fn rates() {
        assert!((f1(0.922, 0.782).value - 0.846).abs() <= 0.0005);
        assert!((f1(0.909, 0.902).value - 0.905).abs() <= 0.0005);
        assert_eq!(
            precision(0, 0),
            Ratio {
                value: 0.0,
                defined: false
            }
        );
        assert_eq!(
            recall(0, 0),
            Ratio {
                value: 0.0,
                defined: false
            }
        );
        assert_eq!(
            f1(0.0, 0.0),
            Ratio {
                value: 0.0,
                defined: false
            }
        );
        assert_eq!(precision(3, 1).value, 0.75);
        assert_eq!(recall(1, 3).value, 0.25);
    }

    #[test]
    fn single_match() {
        let g = nb(0.5, 0.5, 0.4, 0.4);
        let m = match_detections(&[det(0, g, 0.9)], &[gt(0, g)], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
    }

    #[test]
    fn cross_class_is_fp_and_fn() {
        let g = nb(0.5, 0.5, 0.4, 0.4);
        let m = match_detections(&[det(1, g, 0.9)], &[gt(0, g)], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
    }

    #[test]
    fn pr_walks() {
        let g = nb(0.5, 0.5, 0.4, 0.4);
        let far = nb(0.1, 0.1, 0.1, 0.1);
        let tp_fp = [image(vec![det(0, g, 0.9), det(0, far, 0.5)], vec![gt(0, g)])];
        let c = pr_curve(&tp_fp, 0, 0.5);
        let pts: Vec<_> = c.points.iter().map(|p| (p.precision, p.recall)).collect();
        assert_eq!(pts, [(1.0, 1.0), (0.5, 1.0)]);
        assert_eq!(average_precision(&c), 1.0);

        let fp_tp = [image(vec![det(0, far, 0.9), det(0, g, 0.5)], vec![gt(0, g)])];
        let c = pr_curve(&fp_tp, 0, 0.5);
        let pts: Vec<_> = c.points.iter().map(|p| (p.precision, p.recall)).collect();
        assert_eq!(pts, [(0.0, 0.0), (0.5, 1.0)]);
        assert_eq!(average_precision(&c), 0.5);

        let single = [image(vec![det(0, g, 0.9)], vec![gt(0, g)])];
        let c = pr_curve(&single, 0, 0.5);
        assert_eq!(c.points.len(), 1);
        assert_eq!((c.points[0].precision, c.points[0].recall), (1.0, 1.0));
    }

    #[test]
    fn ties_collapse_into_one_point() {
        let g = nb(0.5, 0.5, 0.4, 0.4);
        let far = nb(0.1, 0.1, 0.1, 0.1);
        let imgs = [image(vec![det(0, g, 0.7), det(0, far, 0.7)], vec![gt(0, g)])];
        let c = pr_curve(&imgs, 0, 0.5);
        assert_eq!(c.points.len(), 1);
        assert_eq!(average_precision(&c), 0.5);
    }

    #[test]
    fn map_cases() {
        let a = nb(0.3, 0.3, 0.2, 0.2);
        let b = nb(0.7, 0.7, 0.2, 0.2);
        let perfect = [image(vec![det(0, a, 0.9), det(1, b, 0.8)], vec![gt(0, a), gt(1, b)])];
        assert_eq!(map_at_50(&perfect).map, 1.0);

        let half = [image(vec![det(0, a, 0.9)], vec![gt(0, a), gt(1, b)])];
        assert_eq!(map_at_50(&half).map, 0.5);

        // class 3 has detections only and is not part of the mean
        let extra = [image(vec![det(0, a, 0.9), det(3, b, 0.9)], vec![gt(0, a)])];
        let r = map_at_50(&extra);
        assert_eq!(r.map, 1.0);
        assert_eq!(r.per_class.len(), 1);

        assert_eq!(map_at_50(&[]).map, 0.0);
    }

    #[test]
    fn eleven_point_differs_from_all_point() {
        let g1 = nb(0.3, 0.3, 0.2, 0.2);
        let g2 = nb(0.7, 0.7, 0.2, 0.2);
        let far = nb(0.1, 0.9, 0.1, 0.1);
        let imgs = [image(
            vec![det(0, g1, 0.9), det(0, far, 0.8), det(0, g2, 0.7)],
            vec![gt(0, g1), gt(0, g2)],
        )];
        let c = pr_curve(&imgs, 0, 0.5);
        // envelope 1 on [0, .5], 2/3 on (.5, 1]
        assert!((average_precision(&c) - (0.5 + 1.0 / 3.0)).abs() < 1e-12);
        let eleven = average_precision_with(&c, Interpolation::ElevenPoint);
        assert!((eleven - (6.0 + 5.0 * 2.0 / 3.0) / 11.0).abs() < 1e-12);
    }

    #[test]
    fn f1_curve_step() {
        let a = nb(0.3, 0.3, 0.2, 0.2);
        let imgs = [image(vec![det(0, a, 0.9)], vec![gt(0, a)])];
        let c = f1_confidence_curve(&imgs, 0.5, 1000);
        assert_eq!(c.thresholds.len(), 1001);
        for (t, f) in c.thresholds.iter().zip(&c.mean_f1) {
            assert_eq!(*f, if *t <= 0.9 { 1.0 } else { 0.0 }, "t={t}");
        }
        assert_eq!(c.best_threshold, 0.0);
        assert_eq!(c.best_f1, 1.0);
    }

    #[test]
    fn confusion_cases() {
        let a = nb(0.3, 0.3, 0.2, 0.2);
        let b = nb(0.7, 0.7, 0.2, 0.2);
        let perfect = [image(vec![det(0, a, 0.9), det(1, b, 0.9)], vec![gt(0, a), gt(1, b)])];
        let m = confusion_matrix(&perfect, 2, 0.25, 0.45);
        assert_eq!(m.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 0]]);

        let swapped = [image(vec![det(1, a, 0.9)], vec![gt(0, a)])];
        assert_eq!(confusion_matrix(&swapped, 2, 0.25, 0.45).get(0, 1), 1);

        let spurious = [image(vec![det(1, b, 0.9)], vec![])];
        let m = confusion_matrix(&spurious, 2, 0.25, 0.45);
        assert_eq!(m.get(m.background(), 1), 1);
        let missed = [image(vec![det(1, b, 0.1)], vec![gt(0, a)])];
        let m = confusion_matrix(&missed, 2, 0.25, 0.45);
        assert_eq!(m.get(0, m.background()), 1);
        assert_eq!(m.total(), 1);
        assert!(m.to_csv(None).starts_with("gt\\pred,0,1,background\n0,0,0,1\n"));
    }

    #[test]
    fn evaluate_report() {
        let a = nb(0.3, 0.3, 0.2, 0.2);
        let b = nb(0.7, 0.7, 0.2, 0.2);
        let imgs = [image(vec![det(0, a, 0.9), det(1, a, 0.4)], vec![gt(0, a), gt(1, b)])];
        let r = evaluate(&imgs, &EvalConfig::default(), None);
        assert_eq!(r.map, 0.5);
        assert_eq!(r.classes.len(), 2);
        // below 0.4 the class-1 FP drags class-1 precision; F1 is 0 there either way
        assert_eq!(r.best_mean_f1, 0.5);
        let csv = r.to_csv();
        assert!(csv.lines().nth(1).unwrap().starts_with("0,,1,1,1.000000,"));
        assert!(r.to_json().contains("\"map\": 0.5"));
    }
}
