//! Anchor sets and IoU k-means anchor fitting.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::wh_iou;
use crate::labelfmt::NormBox;
use crate::rng::SeededRng;

/// Feature-map strides of the three detection scales (P3, P4, P5).
pub const STRIDES: [u32; 3] = [8, 16, 32];

#[derive(Debug, Error, PartialEq)]
pub enum AnchorError {
    #[error("no boxes to cluster")]
    NoBoxes,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {distinct} distinct box shapes")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("reference resolution must be positive")]
    BadResolution,
    #[error("anchor sizes must be positive and finite")]
    NonPositive,
    #[error("anchor groups must have strictly increasing strides")]
    StrideOrder,
    #[error("anchors must be ordered by ascending area")]
    AreaOrder,
    #[error("{anchors} anchors cannot be split evenly over {groups} strides")]
    UnevenGroups { anchors: usize, groups: usize },
    #[error("anchor group is empty")]
    EmptyGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorGroup {
    pub stride: u32,
    /// (width, height) in pixels at the reference resolution.
    pub anchors: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorSet {
    groups: Vec<AnchorGroup>,
}

impl AnchorSet {
    pub fn new(groups: Vec<AnchorGroup>) -> Result<Self, AnchorError> {
        if groups.windows(2).any(|w| w[0].stride >= w[1].stride) {
            return Err(AnchorError::StrideOrder);
        }
        let mut prev = 0.0;
        for g in &groups {
            if g.anchors.is_empty() {
                return Err(AnchorError::EmptyGroup);
            }
            for &(w, h) in &g.anchors {
                if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
                    return Err(AnchorError::NonPositive);
                }
                if w * h < prev {
                    return Err(AnchorError::AreaOrder);
                }
                prev = w * h;
            }
        }
        Ok(AnchorSet { groups })
    }

    /// Splits area-sorted anchors evenly over `strides`.
    pub fn from_sorted(anchors: &[(f64, f64)], strides: &[u32]) -> Result<Self, AnchorError> {
        if strides.is_empty() || !anchors.len().is_multiple_of(strides.len()) || anchors.is_empty() {
            return Err(AnchorError::UnevenGroups {
                anchors: anchors.len(),
                groups: strides.len(),
            });
        }
        let per = anchors.len() / strides.len();
        Self::new(
            strides
                .iter()
                .zip(anchors.chunks(per))
                .map(|(&stride, chunk)| AnchorGroup {
                    stride,
                    anchors: chunk.to_vec(),
                })
                .collect(),
        )
    }

    /// The stock COCO anchors shipped with YOLOv5 configs.
    pub fn yolov5_default() -> Self {
        let flat = [
            (10.0, 13.0),
            (16.0, 30.0),
            (33.0, 23.0),
            (30.0, 61.0),
            (62.0, 45.0),
            (59.0, 119.0),
            (116.0, 90.0),
            (156.0, 198.0),
            (373.0, 326.0),
        ];
        Self::from_sorted(&flat, &STRIDES).expect("stock anchors are ordered")
    }

    pub fn groups(&self) -> &[AnchorGroup] {
        &self.groups
    }

    pub fn flat(&self) -> Vec<(f64, f64)> {
        self.groups.iter().flat_map(|g| g.anchors.iter().copied()).collect()
    }

    pub fn per_group(&self) -> usize {
        self.groups.first().map_or(0, |g| g.anchors.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    /// Image (width, height) in pixels the normalized boxes are scaled to.
    pub reference: (f64, f64),
    pub max_iterations: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 9,
            seed: 0,
            reference: (640.0, 640.0),
            max_iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorFit {
    /// Centroids in pixels, ascending by area.
    pub anchors: Vec<(f64, f64)>,
    pub mean_best_iou: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Mean best IoU after each assignment step.
    pub history: Vec<f64>,
}

impl AnchorFit {
    pub fn anchor_set(&self) -> Result<AnchorSet, AnchorError> {
        AnchorSet::from_sorted(&self.anchors, &STRIDES)
    }
}

/// Mean over boxes of the best `wh_iou` against any anchor.
pub fn mean_best_iou(boxes: &[(f64, f64)], anchors: &[(f64, f64)]) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    let total: f64 = boxes
        .iter()
        .map(|&b| anchors.iter().map(|&a| wh_iou(b, a)).fold(0.0, f64::max))
        .sum();
    total / boxes.len() as f64
}

/// k-means over box shapes with distance `1 − IoU` (boxes aligned at a common
/// center), seeded with k-means++.
///
/// The update step moves a centroid to its cluster's mean shape only when that
/// does not lower the cluster's summed IoU, so the mean best IoU is
/// non-decreasing from one iteration to the next. Iteration stops once
/// assignments repeat or after `max_iterations`.
pub fn kmeans_anchors(boxes: &[NormBox], cfg: &KMeansConfig) -> Result<AnchorFit, AnchorError> {
    if boxes.is_empty() {
        return Err(AnchorError::NoBoxes);
    }
    if cfg.k == 0 {
        return Err(AnchorError::ZeroK);
    }
    let (rw, rh) = cfg.reference;
    if !(rw > 0.0 && rh > 0.0) {
        return Err(AnchorError::BadResolution);
    }
    let points: Vec<(f64, f64)> = boxes.iter().map(|b| (b.w * rw, b.h * rh)).collect();
    let mut distinct: Vec<(u64, u64)> = points.iter().map(|p| (p.0.to_bits(), p.1.to_bits())).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if cfg.k > distinct.len() {
        return Err(AnchorError::TooFewDistinct {
            k: cfg.k,
            distinct: distinct.len(),
        });
    }

    let mut rng = SeededRng::new(cfg.seed);
    let mut centroids = seed_plus_plus(&points, cfg.k, &mut rng);
    let mut assignment: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;

    for iteration in 0..cfg.max_iterations.max(1) {
        let (next, objective) = assign(&points, &centroids);
        history.push(objective);
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
        if iteration + 1 == cfg.max_iterations.max(1) {
            break;
        }
        update(&points, &assignment, &mut centroids);
    }

    centroids.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)).then(a.0.total_cmp(&b.0)));
    Ok(AnchorFit {
        mean_best_iou: *history.last().expect("at least one iteration"),
        iterations: history.len(),
        converged,
        history,
        anchors: centroids,
    })
}

fn seed_plus_plus(points: &[(f64, f64)], k: usize, rng: &mut SeededRng) -> Vec<(f64, f64)> {
    let mut centroids = vec![points[rng.below(points.len() as u64) as usize]];
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|&p| {
                let best = centroids.iter().map(|&c| wh_iou(p, c)).fold(0.0, f64::max);
                (1.0 - best).powi(2)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.unit() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| weights.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every point coincides with a centroid shape; take an unused one
            points
                .iter()
                .position(|p| !centroids.contains(p))
                .expect("k does not exceed distinct shapes")
        };
        centroids.push(points[pick]);
    }
    centroids
}

fn assign(points: &[(f64, f64)], centroids: &[(f64, f64)]) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let labels = points
        .iter()
        .map(|&p| {
            let mut best = (0, f64::NEG_INFINITY);
            for (j, &c) in centroids.iter().enumerate() {
                let v = wh_iou(p, c);
                if v > best.1 {
                    best = (j, v);
                }
            }
            total += best.1;
            best.0
        })
        .collect();
    (labels, total / points.len() as f64)
}

fn update(points: &[(f64, f64)], assignment: &[usize], centroids: &mut [(f64, f64)]) {
    for (j, centroid) in centroids.iter_mut().enumerate() {
        let members: Vec<(f64, f64)> = points
            .iter()
            .zip(assignment)
            .filter(|(_, &a)| a == j)
            .map(|(&p, _)| p)
            .collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len() as f64;
        let mean = (
            members.iter().map(|p| p.0).sum::<f64>() / n,
            members.iter().map(|p| p.1).sum::<f64>() / n,
        );
        let score = |c: (f64, f64)| members.iter().map(|&p| wh_iou(p, c)).sum::<f64>();
        if score(mean) >= score(*centroid) {
            *centroid = mean;
        }
    }
}
