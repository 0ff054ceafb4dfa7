//! Reference grid-detector loss: target assignment, per-term evaluation and
//! analytic gradients.
//!
//! The image is divided into `S × S` cells, each with `B` box predictors
//! `(x, y, w, h, C)` and one class-score vector of length `K`. `x, y` are the
//! box center relative to its cell, `w, h` are relative to the image. For the
//! predictor responsible for an object the loss is
//!
//! ```text
//! λ_coord [(x−x̂)² + (y−ŷ)²] + λ_coord [(√w−√ŵ)² + (√h−√ĥ)²] + (C−Ĉ)²
//! ```
//!
//! every other predictor contributes `λ_noobj C²`, and the class term adds
//! `‖p − p̂‖²` over object cells (or over all cells, with `p̂ = 0` where there is
//! no object). Square roots are taken of `v + ε`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, CornerBox};
use crate::labelfmt::{Annotation, LabelError};
use crate::rng::SeededRng;

const BOX_LEN: usize = 5;
const FIELD_NAMES: [&str; BOX_LEN] = ["x", "y", "w", "h", "conf"];

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("invalid loss configuration: {0}")]
    Config(&'static str),
    #[error("expected {expected} values, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("grid shapes do not match the configuration")]
    GridMismatch,
    #[error("value {index} is not finite")]
    NonFinite { index: usize },
    #[error("negative {field} in cell {cell}, predictor {predictor}")]
    NegativeSize {
        cell: usize,
        predictor: usize,
        field: &'static str,
    },
    #[error("class {class_id} out of range for {classes} classes")]
    ClassOutOfRange { class_id: usize, classes: usize },
    #[error(transparent)]
    Annotation(#[from] LabelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLossScope {
    #[default]
    ObjectCells,
    AllCells,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceTarget {
    /// IoU between the responsible predictor's box and the ground truth.
    #[default]
    Iou,
    One,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Cells per side (S).
    pub grid: usize,
    /// Box predictors per cell (B).
    pub predictors: usize,
    pub classes: usize,
    pub lambda_coord: f64,
    pub lambda_noobj: f64,
    pub sqrt_epsilon: f64,
    pub class_loss_scope: ClassLossScope,
    pub confidence_target: ConfidenceTarget,
}

impl LossConfig {
    pub fn new(grid: usize, predictors: usize, classes: usize) -> Self {
        LossConfig {
            grid,
            predictors,
            classes,
            lambda_coord: 5.0,
            lambda_noobj: 0.5,
            sqrt_epsilon: 1e-8,
            class_loss_scope: ClassLossScope::ObjectCells,
            confidence_target: ConfidenceTarget::Iou,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if self.grid == 0 || self.predictors == 0 || self.classes == 0 {
            return Err(LossError::Config("grid, predictors and classes must be ≥ 1"));
        }
        if !(self.lambda_coord >= 0.0 && self.lambda_noobj >= 0.0) {
            return Err(LossError::Config("loss weights must be ≥ 0"));
        }
        if !(self.sqrt_epsilon > 0.0 && self.sqrt_epsilon.is_finite()) {
            return Err(LossError::Config("sqrt_epsilon must be > 0"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.grid * self.grid
    }

    fn box_block(&self) -> usize {
        self.cells() * self.predictors * BOX_LEN
    }

    pub fn value_count(&self) -> usize {
        self.box_block() + self.cells() * self.classes
    }
}

/// Flat prediction tensor: `S²·B·5` box values followed by `S²·K` class scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPrediction {
    grid: usize,
    predictors: usize,
    classes: usize,
    values: Vec<f64>,
}

impl GridPrediction {
    pub fn zeros(cfg: &LossConfig) -> Self {
        GridPrediction {
            grid: cfg.grid,
            predictors: cfg.predictors,
            classes: cfg.classes,
            values: vec![0.0; cfg.value_count()],
        }
    }

    pub fn from_values(cfg: &LossConfig, values: Vec<f64>) -> Result<Self, LossError> {
        if values.len() != cfg.value_count() {
            return Err(LossError::Shape {
                expected: cfg.value_count(),
                found: values.len(),
            });
        }
        Ok(GridPrediction {
            grid: cfg.grid,
            predictors: cfg.predictors,
            classes: cfg.classes,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn box_index(&self, cell: usize, predictor: usize) -> usize {
        (cell * self.predictors + predictor) * BOX_LEN
    }

    pub fn class_index(&self, cell: usize, class: usize) -> usize {
        self.grid * self.grid * self.predictors * BOX_LEN + cell * self.classes + class
    }

    /// `[x, y, w, h, conf]` of one predictor.
    pub fn predictor(&self, cell: usize, predictor: usize) -> [f64; BOX_LEN] {
        let i = self.box_index(cell, predictor);
        self.values[i..i + BOX_LEN].try_into().expect("box slice")
    }

    pub fn set_predictor(&mut self, cell: usize, predictor: usize, v: [f64; BOX_LEN]) {
        let i = self.box_index(cell, predictor);
        self.values[i..i + BOX_LEN].copy_from_slice(&v);
    }

    pub fn class_scores(&self, cell: usize) -> &[f64] {
        let i = self.class_index(cell, 0);
        &self.values[i..i + self.classes]
    }

    pub fn class_scores_mut(&mut self, cell: usize) -> &mut [f64] {
        let i = self.class_index(cell, 0);
        &mut self.values[i..i + self.classes]
    }

    /// The predictor's box in image-normalized corner form.
    pub fn image_box(&self, cell: usize, predictor: usize) -> CornerBox {
        let [x, y, w, h, _] = self.predictor(cell, predictor);
        let s = self.grid as f64;
        let (col, row) = ((cell % self.grid) as f64, (cell / self.grid) as f64);
        let (cx, cy) = ((col + x) / s, (row + y) / s);
        CornerBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    fn check(&self, cfg: &LossConfig) -> Result<(), LossError> {
        cfg.validate()?;
        if (self.grid, self.predictors, self.classes) != (cfg.grid, cfg.predictors, cfg.classes) {
            return Err(LossError::GridMismatch);
        }
        if let Some(index) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(LossError::NonFinite { index });
        }
        for cell in 0..cfg.cells() {
            for predictor in 0..cfg.predictors {
                let p = self.predictor(cell, predictor);
                for k in [2, 3] {
                    if p[k] < 0.0 {
                        return Err(LossError::NegativeSize {
                            cell,
                            predictor,
                            field: FIELD_NAMES[k],
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTarget {
    /// Index of the responsible predictor.
    pub responsible: usize,
    /// Center offset within the cell.
    pub x: f64,
    pub y: f64,
    /// Size relative to the image.
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTarget {
    pub grid: usize,
    pub predictors: usize,
    pub classes: usize,
    /// One entry per cell, row-major; `None` means no object.
    pub cells: Vec<Option<CellTarget>>,
}

impl GridTarget {
    pub fn empty(cfg: &LossConfig) -> Self {
        GridTarget {
            grid: cfg.grid,
            predictors: cfg.predictors,
            classes: cfg.classes,
            cells: vec![None; cfg.cells()],
        }
    }

    fn check(&self, cfg: &LossConfig) -> Result<(), LossError> {
        if (self.grid, self.predictors, self.classes) != (cfg.grid, cfg.predictors, cfg.classes)
            || self.cells.len() != cfg.cells()
        {
            return Err(LossError::GridMismatch);
        }
        for (cell, t) in self.cells.iter().enumerate() {
            let Some(t) = t else { continue };
            if t.responsible >= cfg.predictors {
                return Err(LossError::GridMismatch);
            }
            if t.class_id >= cfg.classes {
                return Err(LossError::ClassOutOfRange {
                    class_id: t.class_id,
                    classes: cfg.classes,
                });
            }
            for (field, v) in [("w", t.w), ("h", t.h)] {
                if v < 0.0 {
                    return Err(LossError::NegativeSize {
                        cell,
                        predictor: t.responsible,
                        field,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Several annotations landed in one cell; only the largest was kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignWarning {
    pub cell: usize,
    pub kept: usize,
    pub dropped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub target: GridTarget,
    pub warnings: Vec<AssignWarning>,
}

/// Cell index and in-cell offset along one axis; cells are half-open `[lo, hi)`
/// except the last, which also takes 1.0.
fn cell_along(v: f64, grid: usize) -> (usize, f64) {
    let scaled = v * grid as f64;
    let idx = (scaled.floor() as usize).min(grid - 1);
    (idx, scaled - idx as f64)
}

pub fn assign_targets(
    annotations: &[Annotation],
    pred: &GridPrediction,
    cfg: &LossConfig,
) -> Result<Assignment, LossError> {
    pred.check(cfg)?;
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); cfg.cells()];
    for (i, a) in annotations.iter().enumerate() {
        a.bbox.validate()?;
        if a.class_id >= cfg.classes {
            return Err(LossError::ClassOutOfRange {
                class_id: a.class_id,
                classes: cfg.classes,
            });
        }
        let (col, _) = cell_along(a.bbox.cx, cfg.grid);
        let (row, _) = cell_along(a.bbox.cy, cfg.grid);
        owners[row * cfg.grid + col].push(i);
    }

    let mut target = GridTarget::empty(cfg);
    let mut warnings = Vec::new();
    for (cell, list) in owners.into_iter().enumerate() {
        let Some(&first) = list.first() else { continue };
        let kept = list.iter().copied().fold(first, |best, i| {
            if annotations[i].bbox.area() > annotations[best].bbox.area() {
                i
            } else {
                best
            }
        });
        if list.len() > 1 {
            warnings.push(AssignWarning {
                cell,
                kept,
                dropped: list.iter().copied().filter(|&i| i != kept).collect(),
            });
        }
        let a = &annotations[kept];
        let gt_box = crate::geometry::to_corners(&a.bbox);
        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..cfg.predictors {
            let v = iou(&pred.image_box(cell, j), &gt_box);
            if v > best.1 {
                best = (j, v);
            }
        }
        let (_, x) = cell_along(a.bbox.cx, cfg.grid);
        let (_, y) = cell_along(a.bbox.cy, cfg.grid);
        target.cells[cell] = Some(CellTarget {
            responsible: best.0,
            x,
            y,
            w: a.bbox.w,
            h: a.bbox.h,
            confidence: match cfg.confidence_target {
                ConfidenceTarget::Iou => best.1,
                ConfidenceTarget::One => 1.0,
            },
            class_id: a.class_id,
        });
    }
    Ok(Assignment { target, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossBreakdown {
    pub coord_xy: f64,
    pub coord_wh: f64,
    pub obj_conf: f64,
    pub noobj_conf: f64,
    pub class_term: f64,
    pub total: f64,
}

fn class_cells<'a>(target: &'a GridTarget, cfg: &LossConfig) -> impl Iterator<Item = (usize, Option<usize>)> + 'a {
    let scope = cfg.class_loss_scope;
    target
        .cells
        .iter()
        .enumerate()
        .filter(move |(_, t)| scope == ClassLossScope::AllCells || t.is_some())
        .map(|(cell, t)| (cell, t.map(|t| t.class_id)))
}

pub fn loss(pred: &GridPrediction, target: &GridTarget, cfg: &LossConfig) -> Result<LossBreakdown, LossError> {
    pred.check(cfg)?;
    target.check(cfg)?;
    let eps = cfg.sqrt_epsilon;
    let mut b = LossBreakdown::default();
    for cell in 0..cfg.cells() {
        let t = target.cells[cell];
        for j in 0..cfg.predictors {
            let [x, y, w, h, c] = pred.predictor(cell, j);
            match t {
                Some(t) if t.responsible == j => {
                    b.coord_xy += (x - t.x).powi(2) + (y - t.y).powi(2);
                    b.coord_wh += ((w + eps).sqrt() - (t.w + eps).sqrt()).powi(2)
                        + ((h + eps).sqrt() - (t.h + eps).sqrt()).powi(2);
                    b.obj_conf += (c - t.confidence).powi(2);
                }
                _ => b.noobj_conf += c * c,
            }
        }
    }
    for (cell, class) in class_cells(target, cfg) {
        for (k, p) in pred.class_scores(cell).iter().enumerate() {
            let want = if class == Some(k) { 1.0 } else { 0.0 };
            b.class_term += (p - want).powi(2);
        }
    }
    b.coord_xy *= cfg.lambda_coord;
    b.coord_wh *= cfg.lambda_coord;
    b.noobj_conf *= cfg.lambda_noobj;
    b.total = b.coord_xy + b.coord_wh + b.obj_conf + b.noobj_conf + b.class_term;
    Ok(b)
}

/// ∂loss/∂value for every predicted value. The confidence target is treated as
/// a constant.
pub fn loss_gradient(
    pred: &GridPrediction,
    target: &GridTarget,
    cfg: &LossConfig,
) -> Result<GridPrediction, LossError> {
    pred.check(cfg)?;
    target.check(cfg)?;
    let eps = cfg.sqrt_epsilon;
    let mut grad = GridPrediction::zeros(cfg);
    for cell in 0..cfg.cells() {
        let t = target.cells[cell];
        for j in 0..cfg.predictors {
            let [x, y, w, h, c] = pred.predictor(cell, j);
            let g = match t {
                Some(t) if t.responsible == j => {
                    let (sw, sh) = ((w + eps).sqrt(), (h + eps).sqrt());
                    [
                        2.0 * cfg.lambda_coord * (x - t.x),
                        2.0 * cfg.lambda_coord * (y - t.y),
                        cfg.lambda_coord * (sw - (t.w + eps).sqrt()) / sw,
                        cfg.lambda_coord * (sh - (t.h + eps).sqrt()) / sh,
                        2.0 * (c - t.confidence),
                    ]
                }
                _ => [0.0, 0.0, 0.0, 0.0, 2.0 * cfg.lambda_noobj * c],
            };
            grad.set_predictor(cell, j, g);
        }
    }
    for (cell, class) in class_cells(target, cfg) {
        let scores = pred.class_scores(cell).to_vec();
        for (k, (gk, p)) in grad.class_scores_mut(cell).iter_mut().zip(scores).enumerate() {
            let want = if class == Some(k) { 1.0 } else { 0.0 };
            *gk = 2.0 * (p - want);
        }
    }
    Ok(grad)
}

/// Comparison of the analytic gradient with central finite differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub step: f64,
    pub components: usize,
    pub max_abs_error: f64,
    /// `|analytic − numeric| / max(1, |analytic|, |numeric|)`, maximized.
    pub max_rel_error: f64,
    pub worst_index: usize,
}

pub fn check_gradient(
    pred: &GridPrediction,
    target: &GridTarget,
    cfg: &LossConfig,
    step: f64,
) -> Result<GradientCheck, LossError> {
    let analytic = loss_gradient(pred, target, cfg)?;
    let mut probe = pred.clone();
    let mut out = GradientCheck {
        step,
        components: pred.values.len(),
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in 0..pred.values.len() {
        let v = pred.values[i];
        probe.values[i] = v + step;
        let up = loss(&probe, target, cfg)?.total;
        probe.values[i] = v - step;
        let down = loss(&probe, target, cfg)?.total;
        probe.values[i] = v;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.values[i];
        let abs = (a - numeric).abs();
        let rel = abs / 1f64.max(a.abs()).max(numeric.abs());
        out.max_abs_error = out.max_abs_error.max(abs);
        if rel > out.max_rel_error {
            out.max_rel_error = rel;
            out.worst_index = i;
        }
    }
    Ok(out)
}

/// Describes a flat index as `cell/predictor/field` or `cell/class`.
pub fn describe_index(cfg: &LossConfig, index: usize) -> String {
    if index < cfg.box_block() {
        let (cell, rest) = (index / (cfg.predictors * BOX_LEN), index % (cfg.predictors * BOX_LEN));
        format!(
            "cell {cell} predictor {} {}",
            rest / BOX_LEN,
            FIELD_NAMES[rest % BOX_LEN]
        )
    } else {
        let k = index - cfg.box_block();
        format!("cell {} class {}", k / cfg.classes, k % cfg.classes)
    }
}

/// A random prediction with sizes in `[0.05, 1]` plus the target assigned from
/// random annotations (about half the cells hold one).
pub fn random_instance(cfg: &LossConfig, rng: &mut SeededRng) -> Result<(GridPrediction, GridTarget), LossError> {
    let mut pred = GridPrediction::zeros(cfg);
    for cell in 0..cfg.cells() {
        for j in 0..cfg.predictors {
            pred.set_predictor(
                cell,
                j,
                [
                    rng.unit(),
                    rng.unit(),
                    rng.range(0.05, 1.0),
                    rng.range(0.05, 1.0),
                    rng.unit(),
                ],
            );
        }
        for p in pred.class_scores_mut(cell) {
            *p = rng.unit();
        }
    }
    let s = cfg.grid as f64;
    let mut annotations = Vec::new();
    for cell in 0..cfg.cells() {
        if rng.unit() < 0.5 {
            continue;
        }
        let (col, row) = ((cell % cfg.grid) as f64, (cell / cfg.grid) as f64);
        let bbox = crate::labelfmt::NormBox::new(
            (col + rng.range(0.01, 0.99)) / s,
            (row + rng.range(0.01, 0.99)) / s,
            rng.range(0.05, 1.0),
            rng.range(0.05, 1.0),
        )?;
        annotations.push(Annotation::new(rng.below(cfg.classes as u64) as usize, bbox));
    }
    let target = assign_targets(&annotations, &pred, cfg)?.target;
    Ok((pred, target))
}
