//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use detkit::loss::{loss, GridPrediction, GridTarget, LossConfig};
use detkit::metrics::ImageEval;
use detkit::rng::SeededRng;
use detkit::{Annotation, Detection, NormBox};

/// (model, epochs, precision %, recall %, printed F1 %, mAP %) from the
/// published 100/200/300-epoch result tables.
pub const PUBLISHED_ROWS: [(&str, u32, f64, f64, f64, f64); 9] = [
    ("YOLOv5s", 100, 74.2, 74.8, 74.5, 83.5),
    ("YOLOv5m", 100, 92.2, 78.2, 84.6, 88.9),
    ("YOLOv5l", 100, 90.3, 92.3, 91.3, 96.6),
    ("YOLOv5s", 200, 93.2, 88.5, 90.8, 94.7),
    ("YOLOv5m", 200, 90.9, 90.2, 90.5, 98.1),
    ("YOLOv5l", 200, 92.0, 89.7, 90.8, 97.0),
    ("YOLOv5s", 300, 97.4, 83.1, 89.7, 92.9),
    ("YOLOv5m", 300, 95.2, 93.9, 94.5, 98.1),
    ("YOLOv5l", 300, 95.4, 89.1, 92.1, 99.5),
];

/// Published mAP@0.5 summary: (model, epochs, mAP).
pub const MAP_SUMMARY: [(&str, u32, f64); 9] = [
    ("YOLOv5s", 100, 0.835),
    ("YOLOv5s", 200, 0.947),
    ("YOLOv5s", 300, 0.929),
    ("YOLOv5m", 100, 0.889),
    ("YOLOv5m", 200, 0.981),
    ("YOLOv5m", 300, 0.981),
    ("YOLOv5l", 100, 0.966),
    ("YOLOv5l", 200, 0.97),
    ("YOLOv5l", 300, 0.995),
];

/// IoU straight from center form.
pub fn oracle_iou(a: &NormBox, b: &NormBox) -> f64 {
    let ix = ((a.cx + a.w / 2.0).min(b.cx + b.w / 2.0) - (a.cx - a.w / 2.0).max(b.cx - b.w / 2.0)).max(0.0);
    let iy = ((a.cy + a.h / 2.0).min(b.cy + b.h / 2.0) - (a.cy - a.h / 2.0).max(b.cy - b.h / 2.0)).max(0.0);
    let inter = ix * iy;
    let union = a.w * a.h + b.w * b.h - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Fresh greedy matching of one class, keeping only detections at or above
/// `min_conf`. Returns (tp, fp).
pub fn oracle_counts(images: &[ImageEval], class: usize, iou_thr: f64, min_conf: f64) -> (usize, usize) {
    let (mut tp, mut fp) = (0, 0);
    for img in images {
        let mut dets: Vec<(usize, &Detection)> = img
            .detections
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class_id == class && d.confidence >= min_conf)
            .collect();
        // stable: equal confidences keep input order
        dets.sort_by(|a, b| b.1.confidence.partial_cmp(&a.1.confidence).unwrap());
        let gts: Vec<&Annotation> = img.ground_truths.iter().filter(|g| g.class_id == class).collect();
        let mut used = vec![false; gts.len()];
        for (_, d) in dets {
            let mut best: Option<(usize, f64)> = None;
            for (k, g) in gts.iter().enumerate() {
                if used[k] {
                    continue;
                }
                let v = oracle_iou(&d.bbox, &g.bbox);
                if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                    best = Some((k, v));
                }
            }
            match best {
                Some((k, _)) => {
                    used[k] = true;
                    tp += 1;
                }
                None => fp += 1,
            }
        }
    }
    (tp, fp)
}

/// All-point AP by enumerating every distinct confidence as a threshold and
/// integrating `p_interp(r) = max{ p(t) : r(t) ≥ r }` over recall.
/// `None` when the class has no ground truth.
pub fn oracle_ap(images: &[ImageEval], class: usize, iou_thr: f64) -> Option<f64> {
    let total: usize = images
        .iter()
        .map(|i| i.ground_truths.iter().filter(|g| g.class_id == class).count())
        .sum();
    if total == 0 {
        return None;
    }
    let mut confs: Vec<f64> = images
        .iter()
        .flat_map(|i| i.detections.iter())
        .filter(|d| d.class_id == class)
        .map(|d| d.confidence)
        .collect();
    confs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    confs.dedup();
    let points: Vec<(f64, f64)> = confs
        .iter()
        .map(|&t| {
            let (tp, fp) = oracle_counts(images, class, iou_thr, t);
            (tp as f64 / total as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect();
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    recalls.dedup();
    let mut area = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let p = points.iter().filter(|q| q.0 >= r).map(|q| q.1).fold(0.0, f64::max);
        area += (r - prev) * p;
        prev = r;
    }
    Some(area)
}

/// Random small evaluation instance: ≤ 10 images, ≤ 5 classes, ≤ 20 boxes of
/// each kind per image. Detections are jittered copies of ground truths plus
/// clutter, with confidences drawn from a coarse grid so ties happen.
pub fn random_eval(rng: &mut SeededRng) -> Vec<ImageEval> {
    let classes = 1 + rng.below(5) as usize;
    let n_images = 1 + rng.below(10) as usize;
    let mut images = Vec::new();
    for i in 0..n_images {
        let n_gt = rng.below(21) as usize;
        let gts: Vec<Annotation> = (0..n_gt)
            .map(|_| Annotation::new(rng.below(classes as u64) as usize, random_box(rng)))
            .collect();
        let n_det = rng.below(21) as usize;
        let mut dets = Vec::new();
        for _ in 0..n_det {
            let conf = (1 + rng.below(20)) as f64 / 20.0;
            let (class, bbox) = if !gts.is_empty() && rng.unit() < 0.6 {
                let g = gts[rng.below(gts.len() as u64) as usize];
                let class = if rng.unit() < 0.85 {
                    g.class_id
                } else {
                    rng.below(classes as u64) as usize
                };
                (class, jitter(rng, &g.bbox))
            } else {
                (rng.below(classes as u64) as usize, random_box(rng))
            };
            dets.push(Detection::new(class, bbox, conf));
        }
        images.push(ImageEval {
            id: format!("img{i}"),
            detections: dets,
            ground_truths: gts,
        });
    }
    images
}

pub fn random_box(rng: &mut SeededRng) -> NormBox {
    let w = rng.range(0.05, 0.5);
    let h = rng.range(0.05, 0.5);
    NormBox::new(
        rng.range(w / 2.0, 1.0 - w / 2.0),
        rng.range(h / 2.0, 1.0 - h / 2.0),
        w,
        h,
    )
    .unwrap()
}

fn jitter(rng: &mut SeededRng, b: &NormBox) -> NormBox {
    let w = (b.w * rng.range(0.7, 1.3)).clamp(0.01, 1.0);
    let h = (b.h * rng.range(0.7, 1.3)).clamp(0.01, 1.0);
    let cx = (b.cx + rng.range(-0.1, 0.1) * b.w).clamp(0.0, 1.0);
    let cy = (b.cy + rng.range(-0.1, 0.1) * b.h).clamp(0.0, 1.0);
    NormBox::new(cx, cy, w, h).unwrap()
}

/// Central finite-difference gradient of the total loss.
pub fn fd_gradient(pred: &GridPrediction, target: &GridTarget, cfg: &LossConfig, h: f64) -> Vec<f64> {
    let mut probe = pred.clone();
    (0..pred.values().len())
        .map(|i| {
            let v = pred.values()[i];
            probe.values_mut()[i] = v + h;
            let up = loss(&probe, target, cfg).unwrap().total;
            probe.values_mut()[i] = v - h;
            let down = loss(&probe, target, cfg).unwrap().total;
            probe.values_mut()[i] = v;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a − n| / max(1, |a|, |n|)`.
pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1f64.max(a.abs()).max(n.abs())
}

/// Annotation list on the 1e-6 grid that the label format represents exactly.
pub fn random_grid_annotations(rng: &mut SeededRng, max_len: u64) -> Vec<Annotation> {
    let n = rng.below(max_len + 1) as usize;
    (0..n)
        .map(|_| {
            let micro = |rng: &mut SeededRng, lo: u64| (lo + rng.below(1_000_001 - lo)) as f64 / 1e6;
            let bbox = NormBox::new(micro(rng, 0), micro(rng, 0), micro(rng, 1), micro(rng, 1)).unwrap();
            Annotation::new(rng.below(12) as usize, bbox)
        })
        .collect()
}
