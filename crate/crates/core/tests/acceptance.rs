//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or exceeds its time budget.

mod common;

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use detkit::dataset::split;
use detkit::geometry::{nms, NmsConfig};
use detkit::labelfmt::{emit_label_file, parse_label_file};
use detkit::loss::{
    loss, loss_gradient, random_instance, CellTarget, ClassLossScope, ConfidenceTarget, GridPrediction, GridTarget,
    LossConfig,
};
use detkit::metrics::{average_precision, mean_average_precision, Interpolation, MatchedDataset};
use detkit::modelcfg::{
    estimate_params, parse_model_spec, rank_variants, scale_depth, scale_width, RankPolicy, RankRow, Variant,
    REFERENCE_SPEC,
};
use detkit::report::{comparison_table, ComparisonRow};
use detkit::rng::SeededRng;
use detkit::Detection;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn f1_consistency() -> Check {
    let mut worst = 0.0f64;
    for (model, epochs, p, r, f1, _) in PUBLISHED_ROWS {
        let derived = detkit::metrics::f1(p, r).value;
        let diff = (derived - f1).abs();
        ensure(diff <= 0.05, || {
            format!("{model}@{epochs}: derived {derived:.4} vs printed {f1}")
        })?;
        worst = worst.max(diff);
    }
    Ok(format!("9 rows, max |derived - printed| = {worst:.4} points"))
}

fn split_arithmetic() -> Check {
    let ids: Vec<String> = (0..288).map(|i| format!("img_{i:03}")).collect();
    let first = split(&ids, 0.8, 7).map_err(|e| e.to_string())?;
    ensure(first.train_ids.len() == 230 && first.test_ids.len() == 58, || {
        format!("{} / {}", first.train_ids.len(), first.test_ids.len())
    })?;
    let all: HashSet<&String> = first.train_ids.iter().chain(&first.test_ids).collect();
    ensure(all.len() == 288, || "train and test overlap or lose ids".into())?;
    for _ in 0..100 {
        let again = split(&ids, 0.8, 7).map_err(|e| e.to_string())?;
        ensure(again == first, || "same seed gave a different split".into())?;
    }
    Ok("230 / 58, identical across 100 runs".into())
}

fn ap_oracle() -> Check {
    let mut rng = SeededRng::new(0xA9);
    let (mut classes, mut worst) = (0usize, 0.0f64);
    for instance in 0..500 {
        let images = random_eval(&mut rng);
        let matched = MatchedDataset::new(&images, 0.5);
        let mut oracle_aps = Vec::new();
        for class in 0..5 {
            let Some(expected) = oracle_ap(&images, class, 0.5) else {
                continue;
            };
            let got = average_precision(&matched.pr_curve(class));
            let diff = (got - expected).abs();
            ensure(diff <= 1e-9, || {
                format!("instance {instance} class {class}: {got} vs oracle {expected}")
            })?;
            worst = worst.max(diff);
            classes += 1;
            oracle_aps.push(expected);
        }
        if !oracle_aps.is_empty() {
            let map = mean_average_precision(&images, 0.5, Interpolation::AllPoint).map;
            let expected = oracle_aps.iter().sum::<f64>() / oracle_aps.len() as f64;
            ensure((map - expected).abs() <= 1e-9, || {
                format!("instance {instance}: mAP {map} vs {expected}")
            })?;
        }
    }
    Ok(format!("500 instances, {classes} class curves, max diff {worst:.1e}"))
}

fn loss_gradients() -> Check {
    let mut rng = SeededRng::new(0x1055);
    let (mut instances, mut worst) = (0usize, 0.0f64);
    for grid in [1, 2, 4] {
        for predictors in [1, 2, 3] {
            for k in 0..12 {
                let mut cfg = LossConfig::new(grid, predictors, 1 + rng.below(4) as usize);
                if k % 2 == 1 {
                    cfg.class_loss_scope = ClassLossScope::AllCells;
                }
                if k % 3 == 2 {
                    cfg.confidence_target = ConfidenceTarget::One;
                }
                let (pred, target) = random_instance(&cfg, &mut rng).map_err(|e| e.to_string())?;
                let analytic = loss_gradient(&pred, &target, &cfg).map_err(|e| e.to_string())?;
                let numeric = fd_gradient(&pred, &target, &cfg, 1e-4);
                for (i, (&a, &n)) in analytic.values().iter().zip(&numeric).enumerate() {
                    let e = rel_error(a, n);
                    ensure(e <= 1e-5, || format!("S={grid} B={predictors} value {i}: {a} vs {n}"))?;
                    worst = worst.max(e);
                }

                let mut perfect = GridPrediction::zeros(&cfg);
                for (cell, t) in target.cells.iter().enumerate() {
                    if let Some(t) = t {
                        perfect.set_predictor(cell, t.responsible, [t.x, t.y, t.w, t.h, t.confidence]);
                        perfect.class_scores_mut(cell)[t.class_id] = 1.0;
                    }
                }
                let zero = loss(&perfect, &target, &cfg).map_err(|e| e.to_string())?.total;
                ensure(zero == 0.0, || format!("perfect prediction gave {zero}"))?;
                instances += 1;
            }
        }
    }

    // one cell, one predictor, one class, λ_noobj = 0.5
    let cfg = LossConfig::new(1, 1, 1);
    let mut pred = GridPrediction::zeros(&cfg);
    pred.set_predictor(0, 0, [0.5, 0.5, 0.5, 0.5, 0.5]);
    let noobj = loss(&pred, &GridTarget::empty(&cfg), &cfg)
        .map_err(|e| e.to_string())?
        .total;
    ensure((noobj - 0.125).abs() <= 1e-12, || {
        format!("no-object case gave {noobj}")
    })?;
    let mut target = GridTarget::empty(&cfg);
    target.cells[0] = Some(CellTarget {
        responsible: 0,
        x: 0.4,
        y: 0.5,
        w: 0.5,
        h: 0.5,
        confidence: 0.5,
        class_id: 0,
    });
    pred.class_scores_mut(0)[0] = 1.0;
    // λ_coord · 0.1² = 0.05
    let coord = loss(&pred, &target, &cfg).map_err(|e| e.to_string())?.total;
    ensure((coord - 0.05).abs() <= 1e-12, || {
        format!("coordinate case gave {coord}")
    })?;
    Ok(format!(
        "{instances} instances, max rel error {worst:.1e}, perfect = 0, hand cases 0.125 / 0.05"
    ))
}

fn nms_invariants() -> Check {
    let mut rng = SeededRng::new(0x5EED);
    let mut kept_total = 0usize;
    for set in 0..1000 {
        let cfg = NmsConfig {
            iou_threshold: rng.range(0.2, 0.8),
            confidence_threshold: rng.range(0.0, 0.5),
            class_aware: rng.unit() < 0.7,
        };
        let n = rng.below(40) as usize;
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                Detection::new(
                    rng.below(3) as usize,
                    random_box(&mut rng),
                    (rng.below(50) as f64) / 49.0,
                )
            })
            .collect();
        let kept = nms(&dets, &cfg);
        for (i, a) in kept.iter().enumerate() {
            ensure(dets.contains(a), || format!("set {set}: output box not in input"))?;
            ensure(a.confidence >= cfg.confidence_threshold, || {
                format!("set {set}: low confidence kept")
            })?;
            for b in &kept[i + 1..] {
                let same = !cfg.class_aware || a.class_id == b.class_id;
                let v = oracle_iou(&a.bbox, &b.bbox);
                ensure(!same || v <= cfg.iou_threshold, || {
                    format!("set {set}: kept pair with IoU {v}")
                })?;
            }
        }
        ensure(kept.windows(2).all(|w| w[0].confidence >= w[1].confidence), || {
            format!("set {set}: output not confidence-sorted")
        })?;
        ensure(nms(&kept, &cfg) == kept, || format!("set {set}: not idempotent"))?;
        kept_total += kept.len();
    }
    Ok(format!("1000 sets, {kept_total} boxes kept"))
}

fn format_round_trip() -> Check {
    let mut rng = SeededRng::new(0xF0F0);
    for list in 0..1000 {
        let anns = random_grid_annotations(&mut rng, 30);
        let text = emit_label_file(&anns).map_err(|e| e.to_string())?;
        let back = parse_label_file(&text).map_err(|e| e.to_string())?;
        ensure(back == anns, || format!("list {list} changed after emit/parse"))?;
    }
    let raw = include_str!("fixtures/labels_raw.txt");
    let golden = include_str!("fixtures/labels_golden.txt");
    let emitted = emit_label_file(&parse_label_file(raw).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(emitted == golden, || format!("golden mismatch:\n{emitted}"))?;
    let again = emit_label_file(&parse_label_file(golden).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(again == golden, || "golden file is not a fixed point".into())?;
    Ok("1000 lists identical, golden bytes equal".into())
}

fn variant_scaling() -> Check {
    ensure(scale_depth(3, 0.67) == 2, || "scale_depth(3, 0.67)".into())?;
    ensure(scale_depth(1, 0.33) == 1, || "scale_depth(1, 0.33)".into())?;
    ensure(scale_width(64, 0.75, 8) == 48, || "scale_width(64, 0.75)".into())?;
    let spec = parse_model_spec(REFERENCE_SPEC).map_err(|e| e.to_string())?;
    let params = |v: &Variant| estimate_params(&spec, v).map(|r| r.total).map_err(|e| e.to_string());
    let (s, m, l) = (
        params(&Variant::small())?,
        params(&Variant::medium())?,
        params(&Variant::large())?,
    );
    ensure(s < m && m < l, || format!("totals {s} / {m} / {l}"))?;

    let rows: Vec<RankRow> = MAP_SUMMARY
        .iter()
        .map(|&(model, epochs, map)| {
            let v = Variant::preset(model).map_err(|e| e.to_string())?;
            Ok(RankRow {
                variant: model.to_string(),
                epochs,
                map,
                params: params(&v)?,
            })
        })
        .collect::<Result<_, String>>()?;
    let best = &rank_variants(&rows, RankPolicy::MaxMap)[0];
    ensure(
        best.variant == "YOLOv5l" && best.epochs == 300 && best.map == 0.995,
        || format!("max_map picked {best:?}"),
    )?;
    let efficient = &rank_variants(&rows, RankPolicy::Efficiency { budget: m })[0];
    ensure(efficient.variant == "YOLOv5m" && efficient.map == 0.981, || {
        format!("efficiency picked {efficient:?}")
    })?;
    Ok(format!(
        "params s={s} m={m} l={l}; max_map -> {}@{}; efficiency -> {}@{}",
        best.variant, best.epochs, efficient.variant, efficient.epochs
    ))
}

fn report_audit() -> Check {
    let rows: Vec<ComparisonRow> = PUBLISHED_ROWS
        .iter()
        .map(|&(model, epochs, precision, recall, f1, map)| ComparisonRow {
            model: model.to_string(),
            epochs,
            precision,
            recall,
            f1,
            map,
        })
        .collect();
    let clean = comparison_table(&rows).map_err(|e| e.to_string())?;
    ensure(clean.flags.is_empty(), || format!("unexpected flags {:?}", clean.flags))?;
    let mut corrupted = rows.clone();
    corrupted[4] = ComparisonRow {
        precision: 90.0,
        recall: 50.0,
        f1: 80.0,
        ..corrupted[4].clone()
    };
    let audit = comparison_table(&corrupted).map_err(|e| e.to_string())?;
    ensure(audit.flags.len() == 1 && audit.flags[0].row == 4, || {
        format!("flags {:?}", audit.flags)
    })?;
    Ok(format!(
        "0 flags on 9 rows; corrupted row flagged (derived {:.1})",
        audit.flags[0].derived
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Check); 8] = [
        ("F1 consistency of published rows", 1, f1_consistency),
        ("split arithmetic and determinism", 1, split_arithmetic),
        ("AP oracle equivalence", 30, ap_oracle),
        ("loss gradient check", 30, loss_gradients),
        ("NMS invariants", 10, nms_invariants),
        ("format round-trip", 5, format_round_trip),
        ("variant scaling and ranking", 1, variant_scaling),
        ("report audit", 1, report_audit),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(budget);
        let (status, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {budget}s budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} {name} [{:.3}s < {budget}s] {detail}", elapsed.as_secs_f64());
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
