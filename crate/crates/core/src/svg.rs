//! Minimal deterministic SVG line charts. Coordinates are printed with two
//! decimals so identical input always yields identical bytes.

use std::fmt::Write as _;

use crate::labelfmt::ClassTable;
use crate::metrics::{F1Curve, PrCurve};

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
    pub color: &'a str,
    pub width: f64,
}

pub struct Panel<'a> {
    pub title: &'a str,
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
    /// `None` fits the axis to the data.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
    pub series: Vec<Series<'a>>,
}

pub fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fit(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.05 } else { 0.5 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

pub fn begin(out: &mut String, width: f64, height: f64) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#).unwrap();
}

pub fn end(out: &mut String) {
    out.push_str("</svg>\n");
}

pub fn panel(out: &mut String, p: &Panel) {
    let (left, right, top, bottom) = (p.x + 40.0, p.x + p.width - 10.0, p.y + 22.0, p.y + p.height - 24.0);
    writeln!(out, r#"<g class="panel">"#).unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-weight="bold">{}</text>"#,
        p.x + p.width / 2.0,
        p.y + 14.0,
        escape(p.title)
    )
    .unwrap();
    writeln!(
        out,
        r##"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
        right - left,
        bottom - top
    )
    .unwrap();
    let xr = p
        .x_range
        .or_else(|| fit(p.series.iter().flat_map(|s| s.points.iter().map(|q| q.0))));
    let yr = p
        .y_range
        .or_else(|| fit(p.series.iter().flat_map(|s| s.points.iter().map(|q| q.1))));
    let (Some((x0, x1)), Some((y0, y1))) = (xr, yr) else {
        writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#999">no data</text>"##,
            (left + right) / 2.0,
            (top + bottom) / 2.0
        )
        .unwrap();
        out.push_str("</g>\n");
        return;
    };
    let (x1, y1) = (if x1 > x0 { x1 } else { x0 + 1.0 }, if y1 > y0 { y1 } else { y0 + 1.0 });
    for (v, anchor_x, anchor_y, align) in [
        (y0, left - 4.0, bottom, "end"),
        (y1, left - 4.0, top + 8.0, "end"),
        (x0, left, bottom + 14.0, "start"),
        (x1, right, bottom + 14.0, "end"),
    ] {
        writeln!(
            out,
            r#"<text x="{anchor_x:.2}" y="{anchor_y:.2}" text-anchor="{align}">{}</text>"#,
            tick(v)
        )
        .unwrap();
    }
    let sx = |v: f64| left + (v - x0) / (x1 - x0) * (right - left);
    let sy = |v: f64| bottom - (v - y0) / (y1 - y0) * (bottom - top);
    for s in &p.series {
        if s.points.is_empty() {
            continue;
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="{}" points="{}"><title>{}</title></polyline>"#,
            s.color,
            s.width,
            pts.join(" "),
            escape(s.label)
        )
        .unwrap();
    }
    out.push_str("</g>\n");
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

pub fn legend(out: &mut String, x: f64, y: f64, entries: &[(&str, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let yy = y + i as f64 * 14.0;
        writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            yy - 4.0,
            x + 16.0,
            yy - 4.0,
            x + 20.0,
            yy,
            escape(label)
        )
        .unwrap();
    }
}

fn class_label(classes: Option<&ClassTable>, id: usize) -> String {
    classes
        .and_then(|c| c.name(id))
        .map_or_else(|| id.to_string(), str::to_string)
}

/// Per-class F1 against confidence threshold, with the mean drawn on top.
pub fn render_f1_curve(curve: &F1Curve, classes: Option<&ClassTable>) -> String {
    let labels: Vec<String> = curve
        .per_class
        .iter()
        .map(|(id, _)| class_label(classes, *id))
        .collect();
    let mean_label = format!("all classes {:.2} at {:.3}", curve.best_f1, curve.best_threshold);
    let mut series: Vec<Series> = curve
        .per_class
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, ((_, f1), label))| Series {
            label,
            points: curve.thresholds.iter().copied().zip(f1.iter().copied()).collect(),
            color: PALETTE[i % PALETTE.len()],
            width: 1.0,
        })
        .collect();
    series.push(Series {
        label: &mean_label,
        points: curve
            .thresholds
            .iter()
            .copied()
            .zip(curve.mean_f1.iter().copied())
            .collect(),
        color: "#0000aa",
        width: 3.0,
    });
    let mut out = String::new();
    begin(&mut out, 760.0, 500.0);
    panel(
        &mut out,
        &Panel {
            title: "F1-confidence curve",
            x: 0.0,
            y: 0.0,
            width: 560.0,
            height: 500.0,
            x_range: Some((0.0, 1.0)),
            y_range: Some((0.0, 1.0)),
            series,
        },
    );
    let mut entries: Vec<(&str, &str)> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), PALETTE[i % PALETTE.len()]))
        .collect();
    entries.push((&mean_label, "#0000aa"));
    legend(&mut out, 570.0, 40.0, &entries);
    end(&mut out);
    out
}

/// Precision against recall, one line per class.
pub fn render_pr_curves(curves: &[PrCurve], classes: Option<&ClassTable>) -> String {
    let labels: Vec<String> = curves.iter().map(|c| class_label(classes, c.class_id)).collect();
    let series = curves
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (c, label))| Series {
            label,
            points: c.points.iter().map(|p| (p.recall, p.precision)).collect(),
            color: PALETTE[i % PALETTE.len()],
            width: 1.5,
        })
        .collect();
    let mut out = String::new();
    begin(&mut out, 760.0, 500.0);
    panel(
        &mut out,
        &Panel {
            title: "Precision-recall curve",
            x: 0.0,
            y: 0.0,
            width: 560.0,
            height: 500.0,
            x_range: Some((0.0, 1.0)),
            y_range: Some((0.0, 1.0)),
            series,
        },
    );
    let entries: Vec<(&str, &str)> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), PALETTE[i % PALETTE.len()]))
        .collect();
    legend(&mut out, 570.0, 40.0, &entries);
    end(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_panel_says_no_data() {
        let mut out = String::new();
        panel(
            &mut out,
            &Panel {
                title: "a<b",
                x: 0.0,
                y: 0.0,
                width: 100.0,
                height: 100.0,
                x_range: None,
                y_range: None,
                series: vec![],
            },
        );
        assert!(out.contains("no data"));
        assert!(out.contains("a&lt;b"));
        assert!(!out.contains("polyline"));
    }

    #[test]
    fn flat_series_still_renders() {
        let mut out = String::new();
        panel(
            &mut out,
            &Panel {
                title: "flat",
                x: 0.0,
                y: 0.0,
                width: 100.0,
                height: 100.0,
                x_range: None,
                y_range: None,
                series: vec![Series {
                    label: "s",
                    points: vec![(1.0, 0.5), (2.0, 0.5)],
                    color: PALETTE[0],
                    width: 1.0,
                }],
            },
        );
        assert_eq!(out.matches("<polyline").count(), 1);
        assert!(!out.contains("NaN"));
    }
}
