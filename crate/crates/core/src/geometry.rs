//! Box conversions, IoU and non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::labelfmt::{Detection, LabelError, NormBox};

/// Corner-format box, in whatever unit the source box used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl CornerBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        CornerBox { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// Zero for degenerate or inverted boxes.
    pub fn area(&self) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            self.width() * self.height()
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
    }

    pub fn intersection(&self, other: &CornerBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> CornerBox {
        CornerBox {
            x1: self.x1.clamp(lo, hi),
            y1: self.y1.clamp(lo, hi),
            x2: self.x2.clamp(lo, hi),
            y2: self.y2.clamp(lo, hi),
        }
    }
}

pub fn to_corners(b: &NormBox) -> CornerBox {
    let (hw, hh) = (b.w / 2.0, b.h / 2.0);
    CornerBox {
        x1: b.cx - hw,
        y1: b.cy - hh,
        x2: b.cx + hw,
        y2: b.cy + hh,
    }
}

/// Converts back to center form. With `clamp`, corners are first clipped to
/// the unit square.
pub fn from_corners(c: &CornerBox, clamp: bool) -> Result<NormBox, LabelError> {
    let c = if clamp { c.clamped(0.0, 1.0) } else { *c };
    NormBox::new((c.x1 + c.x2) / 2.0, (c.y1 + c.y2) / 2.0, c.x2 - c.x1, c.y2 - c.y1)
}

/// Intersection over union. Degenerate boxes give 0.
pub fn iou(a: &CornerBox, b: &CornerBox) -> f64 {
    if a.is_degenerate() || b.is_degenerate() {
        return 0.0;
    }
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn box_iou(a: &NormBox, b: &NormBox) -> f64 {
    iou(&to_corners(a), &to_corners(b))
}

/// IoU of two (width, height) pairs aligned at a common center.
pub fn wh_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    if !(a.0 > 0.0 && a.1 > 0.0 && b.0 > 0.0 && b.1 > 0.0) {
        return 0.0;
    }
    let inter = a.0.min(b.0) * a.1.min(b.1);
    inter / (a.0 * a.1 + b.0 * b.1 - inter)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
    /// Only suppress overlaps between detections of the same class.
    pub class_aware: bool,
}

impl Default for NmsConfig {
    fn default() -> Self {
        NmsConfig {
            iou_threshold: 0.45,
            confidence_threshold: 0.25,
            class_aware: true,
        }
    }
}

/// Greedy NMS. Output is sorted by confidence, ties broken by input position.
pub fn nms(dets: &[Detection], config: &NmsConfig) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].confidence >= config.confidence_threshold && !to_corners(&dets[i].bbox).is_degenerate())
        .collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));

    let mut kept: Vec<(Detection, CornerBox)> = Vec::new();
    for i in order {
        let d = dets[i];
        let corners = to_corners(&d.bbox);
        let suppressed = kept.iter().any(|(k, kc)| {
            (!config.class_aware || k.class_id == d.class_id) && iou(kc, &corners) > config.iou_threshold
        });
        if !suppressed {
            kept.push((d, corners));
        }
    }
    kept.into_iter().map(|(d, _)| d).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb(cx: f64, cy: f64, w: f64, h: f64) -> NormBox {
        NormBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn corner_conversion() {
        let c = to_corners(&nb(0.5, 0.5, 0.5, 0.5));
        assert_eq!(c, CornerBox::new(0.25, 0.25, 0.75, 0.75));
        assert_eq!(from_corners(&c, false).unwrap(), nb(0.5, 0.5, 0.5, 0.5));
    }

    #[test]
    fn clamping_corners() {
        // 0.1 - 0.4/2 = -0.1 on both axes
        let c = to_corners(&nb(0.1, 0.1, 0.4, 0.4));
        assert!((c.x1 + 0.1).abs() < 1e-15);
        let clamped = from_corners(&c, true).unwrap();
        assert!((clamped.cx - 0.15).abs() < 1e-12);
        assert!((clamped.w - 0.3).abs() < 1e-12);
        assert!(from_corners(&CornerBox::new(-0.4, 0.0, 0.2, 0.5), false).is_err());
    }

    #[test]
    fn iou_cases() {
        let a = CornerBox::new(0.0, 0.0, 2.0, 2.0);
        let b = CornerBox::new(1.0, 1.0, 3.0, 3.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &CornerBox::new(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert_eq!(iou(&a, &CornerBox::new(1.0, 1.0, 1.0, 3.0)), 0.0);
        // touching edges share no area
        assert_eq!(iou(&a, &CornerBox::new(2.0, 0.0, 4.0, 2.0)), 0.0);
    }

    #[test]
    fn wh_iou_cases() {
        assert_eq!(wh_iou((2.0, 3.0), (2.0, 3.0)), 1.0);
        assert!((wh_iou((1.0, 1.0), (2.0, 2.0)) - 0.25).abs() < 1e-15);
        assert_eq!(wh_iou((0.0, 1.0), (2.0, 2.0)), 0.0);
    }

    #[test]
    fn nms_examples() {
        let cfg = NmsConfig::default();
        let one = [Detection::new(0, nb(0.5, 0.5, 0.2, 0.2), 0.9)];
        assert_eq!(nms(&one, &cfg), one.to_vec());

        let pair = [
            Detection::new(1, nb(0.5, 0.5, 0.2, 0.2), 0.8),
            Detection::new(1, nb(0.5, 0.5, 0.2, 0.2), 0.9),
        ];
        let kept = nms(&pair, &cfg);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);

        let mixed = [
            Detection::new(1, nb(0.5, 0.5, 0.2, 0.2), 0.9),
            Detection::new(2, nb(0.5, 0.5, 0.2, 0.2), 0.8),
        ];
        assert_eq!(nms(&mixed, &cfg).len(), 2);
        let agnostic = NmsConfig {
            class_aware: false,
            ..cfg
        };
        assert_eq!(nms(&mixed, &agnostic).len(), 1);
    }

    #[test]
    fn nms_confidence_filter_and_ties() {
        let cfg = NmsConfig::default();
        assert!(nms(&[], &cfg).is_empty());
        let low = [Detection::new(0, nb(0.5, 0.5, 0.2, 0.2), 0.1)];
        assert!(nms(&low, &cfg).is_empty());
        let at = [Detection::new(0, nb(0.5, 0.5, 0.2, 0.2), 0.25)];
        assert_eq!(nms(&at, &cfg).len(), 1);

        // equal confidence: the earlier input wins
        let tie = [
            Detection::new(0, nb(0.5, 0.5, 0.2, 0.2), 0.7),
            Detection::new(0, nb(0.51, 0.5, 0.2, 0.2), 0.7),
        ];
        assert_eq!(nms(&tie, &cfg), vec![tie[0]]);
    }
}
