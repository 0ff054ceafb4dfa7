use std::fmt::Write as _;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use detkit::dataset::{
    dataset_stats, kmeans_anchors, load_image_evals, load_label_dir, read_id_list, split, split_stratified,
    validate_dataset, validate_layout, DatasetLayout, KMeansConfig, ValidationReport,
};
use detkit::fsutil::write_atomic;
use detkit::labelfmt::{default_class_table, ClassTable, DatasetDescriptor, ParseOptions};
use detkit::loss::{check_gradient, loss, random_instance, GradientCheck, LossBreakdown, LossConfig};
use detkit::metrics::{confusion_matrix, evaluate, f1_confidence_curve, EvalConfig, Interpolation, MatchedDataset};
use detkit::modelcfg::{
    estimate_params, parse_model_spec, rank_variants, RankPolicy, RankRow, Variant, REFERENCE_SPEC,
};
use detkit::report::{best_epoch, comparison_table, parse_comparison_csv, parse_run_log, render_dashboard, Criterion};
use detkit::rng::SeededRng;
use detkit::svg::{render_f1_curve, render_pr_curves};

#[derive(Parser)]
#[command(
    name = "detkit",
    version,
    about = "Detection dataset and evaluation toolkit",
    arg_required_else_help = true
)]
struct Cli {
    /// Output format for the command's main result.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset descriptor (data.yaml) or an image directory for label problems.
    Validate {
        #[arg(long, env = "DETKIT_DATA")]
        data: PathBuf,
        /// Class count when `--data` is a directory.
        #[arg(long)]
        nc: Option<usize>,
        /// Treat warnings as findings.
        #[arg(long)]
        deny_warnings: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded train/test split written as two manifests.
    Split {
        /// File with one sample id per line.
        #[arg(long, conflicts_with = "images", required_unless_present = "images")]
        ids: Option<PathBuf>,
        /// Directory whose image stems are the ids.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8, value_parser = unit_interval)]
        fraction: f64,
        #[arg(long)]
        seed: u64,
        /// Split each class separately, keyed by the first class in each label file.
        #[arg(long, requires = "labels")]
        stratify: bool,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Directory for train.txt and test.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class instance counts and box size summaries.
    Stats {
        #[arg(long)]
        labels: PathBuf,
        /// data.yaml supplying class names.
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-means anchor boxes under the 1 − IoU distance.
    Anchors {
        #[arg(long)]
        labels: PathBuf,
        #[arg(short, long, default_value_t = 9)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 640.0)]
        img_size: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class AP, mAP and precision/recall/F1 at the best confidence.
    Eval {
        #[command(flatten)]
        pair: EvalPair,
        #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
        iou: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long)]
        eleven_point: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// F1 against confidence threshold; optional SVG charts.
    F1curve {
        #[command(flatten)]
        pair: EvalPair,
        #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
        iou: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Also write per-class precision-recall curves.
        #[arg(long)]
        pr_svg: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Class confusion matrix with a background row and column.
    Confusion {
        #[command(flatten)]
        pair: EvalPair,
        #[arg(long, default_value_t = 0.25, value_parser = unit_interval)]
        conf: f64,
        #[arg(long, default_value_t = 0.45, value_parser = unit_interval)]
        iou: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic loss gradients with finite differences on random instances.
    LossCheck {
        #[arg(long, default_value_t = 3)]
        grid: usize,
        #[arg(long, default_value_t = 2)]
        predictors: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-layer parameter estimate for a model variant.
    ModelInfo {
        /// Model YAML; the bundled reference spec when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "s", conflicts_with = "all")]
        variant: String,
        /// Totals for every preset.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank trained variants from a results table.
    Rank {
        /// CSV with columns variant,epochs,map and optionally params.
        #[arg(long)]
        rows: PathBuf,
        #[arg(long, value_enum, default_value_t = Policy::MaxMap)]
        policy: Policy,
        /// Parameter budget for the efficiency policy; a preset name or a number.
        #[arg(long)]
        budget: Option<String>,
        /// Model YAML used to fill missing parameter counts.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Training dashboards and the published-results consistency audit.
    Report {
        /// Run log as NAME=results.csv; repeatable.
        #[arg(long = "log", value_parser = parse_named_path)]
        logs: Vec<(String, PathBuf)>,
        /// Directory for dashboard.svg and dashboard.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "map50")]
        criterion: String,
        /// Comparison CSV (model,epochs,precision,recall,f1,map in percent).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Serve the annotation HTTP API over a dataset root.
    Serve {
        #[arg(long, env = "DETKIT_DATA")]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(clap::Args)]
struct EvalPair {
    /// Ground-truth label directory.
    #[arg(long)]
    gt: PathBuf,
    /// Prediction directory (class cx cy w h confidence).
    #[arg(long)]
    pred: PathBuf,
    /// data.yaml supplying class names.
    #[arg(long)]
    names: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    MaxMap,
    Efficiency,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        Ok(v) => Err(format!("{v} is outside [0, 1]")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

/// What a command produced. `findings` maps to exit code 1.
struct Outcome {
    body: String,
    findings: bool,
}

impl Outcome {
    fn ok(body: String) -> Self {
        Outcome { body, findings: false }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(o) => ExitCode::from(u8::from(o.findings)),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let fmt = cli.format;
    let (outcome, out) = match cli.command {
        Command::Validate {
            data,
            nc,
            deny_warnings,
            out,
        } => (validate(&data, nc, deny_warnings, fmt)?, out),
        Command::Split {
            ids,
            images,
            fraction,
            seed,
            stratify,
            labels,
            out,
        } => {
            return split_cmd(
                ids,
                images,
                fraction,
                seed,
                stratify.then_some(labels).flatten(),
                out,
                fmt,
            );
        }
        Command::Stats { labels, names, out } => {
            let classes = class_table(names.as_deref())?;
            let images = load_label_dir(&labels, &ParseOptions::lenient())?;
            let stats = dataset_stats(&images, classes.len());
            let body = match fmt {
                Format::Text => stats.render_table(Some(&classes)),
                Format::Csv => stats.to_csv(Some(&classes)),
                Format::Json => json(&stats)?,
            };
            (Outcome::ok(body), out)
        }
        Command::Anchors {
            labels,
            k,
            seed,
            img_size,
            out,
        } => {
            let images = load_label_dir(&labels, &ParseOptions::lenient())?;
            let boxes: Vec<_> = images
                .iter()
                .flat_map(|i| i.annotations.iter().map(|a| a.bbox))
                .collect();
            let cfg = KMeansConfig {
                k,
                seed,
                reference: (img_size, img_size),
                ..KMeansConfig::default()
            };
            let fit = kmeans_anchors(&boxes, &cfg)?;
            let body = match fmt {
                Format::Json => json(&fit)?,
                Format::Csv => {
                    let mut s = String::from("width,height\n");
                    for (w, h) in &fit.anchors {
                        let _ = writeln!(s, "{w},{h}");
                    }
                    s
                }
                Format::Text => {
                    let mut s = format!(
                        "{} boxes, {} iterations{}, mean best IoU {:.4}\n",
                        boxes.len(),
                        fit.iterations,
                        if fit.converged { "" } else { " (not converged)" },
                        fit.mean_best_iou
                    );
                    let pairs: Vec<String> = fit.anchors.iter().map(|(w, h)| format!("{w:.0},{h:.0}")).collect();
                    s.push_str(&pairs.join(", "));
                    s.push('\n');
                    s
                }
            };
            (Outcome::ok(body), out)
        }
        Command::Eval {
            pair,
            iou,
            steps,
            eleven_point,
            out,
        } => {
            let (images, classes) = load_pair(&pair)?;
            let cfg = EvalConfig {
                iou_threshold: iou,
                interpolation: if eleven_point {
                    Interpolation::ElevenPoint
                } else {
                    Interpolation::AllPoint
                },
                f1_steps: steps,
            };
            let report = evaluate(&images, &cfg, Some(&classes));
            let body = match fmt {
                Format::Text => report.render_text(),
                Format::Json => report.to_json(),
                Format::Csv => report.to_csv(),
            };
            (Outcome::ok(body), out)
        }
        Command::F1curve {
            pair,
            iou,
            steps,
            svg,
            pr_svg,
            out,
        } => {
            let (images, classes) = load_pair(&pair)?;
            let curve = f1_confidence_curve(&images, iou, steps);
            if let Some(path) = svg {
                write_file(&path, &render_f1_curve(&curve, Some(&classes)))?;
            }
            if let Some(path) = pr_svg {
                let matched = MatchedDataset::new(&images, iou);
                let curves: Vec<_> = matched
                    .scored_classes()
                    .into_iter()
                    .map(|c| matched.pr_curve(c))
                    .collect();
                write_file(&path, &render_pr_curves(&curves, Some(&classes)))?;
            }
            let body = match fmt {
                Format::Text => format!(
                    "best mean F1 {:.4} at confidence {:.3}\n",
                    curve.best_f1, curve.best_threshold
                ),
                Format::Csv => curve.to_csv(Some(&classes)),
                Format::Json => json(&curve)?,
            };
            (Outcome::ok(body), out)
        }
        Command::Confusion { pair, conf, iou, out } => {
            let (images, classes) = load_pair(&pair)?;
            let cm = confusion_matrix(&images, classes.len(), conf, iou);
            let body = match fmt {
                Format::Text => cm.render_text(),
                Format::Csv => cm.to_csv(Some(&classes)),
                Format::Json => json(&cm)?,
            };
            (Outcome::ok(body), out)
        }
        Command::LossCheck {
            grid,
            predictors,
            classes,
            seed,
            instances,
            step,
            tolerance,
            out,
        } => (
            loss_check(grid, predictors, classes, seed, instances, step, tolerance, fmt)?,
            out,
        ),
        Command::ModelInfo {
            spec,
            variant,
            all,
            out,
        } => (model_info(spec.as_deref(), &variant, all, fmt)?, out),
        Command::Rank {
            rows,
            policy,
            budget,
            spec,
            out,
        } => (rank(&rows, policy, budget.as_deref(), spec.as_deref(), fmt)?, out),
        Command::Report {
            logs,
            out,
            criterion,
            table,
        } => return report(&logs, out.as_deref(), &criterion, table.as_deref(), fmt),
        Command::Serve { data, addr } => {
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            eprintln!("serving {} on http://{addr}", data.display());
            rt.block_on(annoserve::serve(&data, addr))?;
            return Ok(Outcome::ok(String::new()));
        }
    };
    emit(out.as_deref(), &outcome.body)?;
    Ok(outcome)
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn class_table(names: Option<&Path>) -> Result<ClassTable> {
    match names {
        None => Ok(default_class_table()),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(DatasetDescriptor::parse(&text)?.class_table()?)
        }
    }
}

fn load_pair(pair: &EvalPair) -> Result<(Vec<detkit::metrics::ImageEval>, ClassTable)> {
    Ok((
        load_image_evals(&pair.gt, &pair.pred)?,
        class_table(pair.names.as_deref())?,
    ))
}

fn validate(data: &Path, nc: Option<usize>, deny_warnings: bool, fmt: Format) -> Result<Outcome> {
    let report: ValidationReport = if data.is_dir() {
        let nc = nc.unwrap_or_else(|| default_class_table().len());
        validate_layout(nc, &DatasetLayout::from_images_dir(data))?
    } else {
        let text = std::fs::read_to_string(data).with_context(|| format!("reading {}", data.display()))?;
        let desc = DatasetDescriptor::parse(&text)?;
        validate_dataset(&desc, data.parent().unwrap_or(Path::new(".")))?
    };
    let body = match fmt {
        Format::Text => report.render_text(),
        Format::Csv => report.to_csv(),
        Format::Json => json(&report)?,
    };
    let findings = report.errors() > 0 || (deny_warnings && report.warnings() > 0);
    Ok(Outcome { body, findings })
}

fn split_cmd(
    ids: Option<PathBuf>,
    images: Option<PathBuf>,
    fraction: f64,
    seed: u64,
    stratify_labels: Option<PathBuf>,
    out: Option<PathBuf>,
    fmt: Format,
) -> Result<Outcome> {
    let ids: Vec<String> = match (ids, images) {
        (Some(path), _) => read_id_list(&path)?,
        (None, Some(dir)) => DatasetLayout::from_images_dir(&dir).scan()?.0,
        (None, None) => bail!("one of --ids or --images is required"),
    };
    let plan = match stratify_labels {
        None => split(&ids, fraction, seed)?,
        Some(labels) => {
            let first: std::collections::HashMap<String, usize> = load_label_dir(&labels, &ParseOptions::lenient())?
                .into_iter()
                .filter_map(|img| img.annotations.first().map(|a| (img.id, a.class_id)))
                .collect();
            let keyed: Vec<(&str, usize)> = ids
                .iter()
                .map(|id| match first.get(id) {
                    Some(&c) => Ok((id.as_str(), c)),
                    None => Err(anyhow::anyhow!("no labelled class for sample {id:?}")),
                })
                .collect::<Result<_>>()?;
            split_stratified(&keyed, fraction, seed)?
        }
    };
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        plan.write_manifests(dir)
            .with_context(|| format!("writing manifests to {}", dir.display()))?;
    }
    let body = match fmt {
        Format::Json => json(&plan)?,
        Format::Csv => {
            let mut s = String::from("id,split\n");
            for id in &plan.train_ids {
                let _ = writeln!(s, "{id},train");
            }
            for id in &plan.test_ids {
                let _ = writeln!(s, "{id},test");
            }
            s
        }
        Format::Text => format!(
            "seed {seed}: {} train, {} test\n",
            plan.train_ids.len(),
            plan.test_ids.len()
        ),
    };
    emit(None, &body)?;
    Ok(Outcome::ok(body))
}

#[derive(serde::Serialize)]
struct LossRow {
    terms: LossBreakdown,
    gradient: GradientCheck,
}

#[allow(clippy::too_many_arguments)]
fn loss_check(
    grid: usize,
    predictors: usize,
    classes: usize,
    seed: u64,
    instances: usize,
    step: f64,
    tolerance: f64,
    fmt: Format,
) -> Result<Outcome> {
    let cfg = LossConfig::new(grid, predictors, classes);
    cfg.validate()?;
    let mut rng = SeededRng::new(seed);
    let mut rows = Vec::with_capacity(instances);
    for _ in 0..instances {
        let (pred, target) = random_instance(&cfg, &mut rng)?;
        rows.push(LossRow {
            terms: loss(&pred, &target, &cfg)?,
            gradient: check_gradient(&pred, &target, &cfg, step)?,
        });
    }
    let worst = rows.iter().map(|r| r.gradient.max_rel_error).fold(0.0, f64::max);
    let findings = worst.is_nan() || worst > tolerance;
    let body = match fmt {
        Format::Json => json(&rows)?,
        Format::Csv => {
            let mut s = String::from(
                "instance,coord_xy,coord_wh,obj_conf,noobj_conf,class_term,total,components,max_abs_error,max_rel_error,worst_index\n",
            );
            for (i, r) in rows.iter().enumerate() {
                let (t, g) = (&r.terms, &r.gradient);
                let _ = writeln!(
                    s,
                    "{i},{},{},{},{},{},{},{},{},{},{}",
                    t.coord_xy,
                    t.coord_wh,
                    t.obj_conf,
                    t.noobj_conf,
                    t.class_term,
                    t.total,
                    g.components,
                    g.max_abs_error,
                    g.max_rel_error,
                    g.worst_index
                );
            }
            s
        }
        Format::Text => {
            let mut s = format!("S={grid} B={predictors} C={classes}, {instances} instances, step {step:e}\n");
            let _ = writeln!(
                s,
                "{:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10}",
                "instance", "coord_xy", "coord_wh", "obj_conf", "noobj_conf", "class", "total", "rel_err"
            );
            for (i, r) in rows.iter().enumerate() {
                let t = &r.terms;
                let _ = writeln!(
                    s,
                    "{i:>8} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>10.3e}",
                    t.coord_xy, t.coord_wh, t.obj_conf, t.noobj_conf, t.class_term, t.total, r.gradient.max_rel_error
                );
            }
            if let Some((i, r)) = rows
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.gradient.max_rel_error.total_cmp(&b.1.gradient.max_rel_error))
            {
                let _ = writeln!(
                    s,
                    "worst relative error {:.3e} (instance {i}, {})",
                    r.gradient.max_rel_error,
                    detkit::loss::describe_index(&cfg, r.gradient.worst_index)
                );
            }
            let _ = writeln!(s, "{} (tolerance {tolerance:e})", if findings { "FAIL" } else { "ok" });
            s
        }
    };
    Ok(Outcome { body, findings })
}

fn load_spec(path: Option<&Path>) -> Result<detkit::modelcfg::ModelSpec> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => REFERENCE_SPEC.to_string(),
    };
    Ok(parse_model_spec(&text)?)
}

fn model_info(spec: Option<&Path>, variant: &str, all: bool, fmt: Format) -> Result<Outcome> {
    let spec = load_spec(spec)?;
    if !all {
        let report = estimate_params(&spec, &Variant::preset(variant)?)?;
        let body = match fmt {
            Format::Text => report.render_text(),
            Format::Json => json(&report)?,
            Format::Csv => {
                let mut s = String::from("index,module,number,c_in,c_out,stride,params\n");
                for l in &report.layers {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{}",
                        l.index, l.module, l.number, l.c_in, l.c_out, l.stride, l.params
                    );
                }
                s
            }
        };
        return Ok(Outcome::ok(body));
    }
    let reports = Variant::presets().map(|v| estimate_params(&spec, &v));
    let reports: Vec<_> = reports.into_iter().collect::<Result<_, _>>()?;
    let body = match fmt {
        Format::Json => json(&reports)?,
        Format::Csv | Format::Text => {
            let mut s = String::from("variant,depth_multiple,width_multiple,params\n");
            for r in &reports {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    r.variant.name, r.variant.depth_multiple, r.variant.width_multiple, r.total
                );
            }
            s
        }
    };
    Ok(Outcome::ok(body))
}

fn parse_rank_rows(text: &str, spec: Option<&Path>) -> Result<Vec<RankRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .context("empty rows file")?
        .split(',')
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(vi), Some(ei), Some(mi)) = (col("variant"), col("epochs"), col("map")) else {
        bail!("rows file needs variant, epochs and map columns");
    };
    let pi = col("params");
    let mut model = None;
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| {
            f.get(i)
                .copied()
                .with_context(|| format!("row {}: missing column", n + 1))
        };
        let variant = get(vi)?.to_string();
        let params = match pi.and_then(|i| f.get(i)).filter(|v| !v.is_empty()) {
            Some(v) => v.parse().with_context(|| format!("row {}: bad params", n + 1))?,
            None => {
                let spec = match &model {
                    Some(s) => s,
                    None => model.insert(load_spec(spec)?),
                };
                estimate_params(spec, &Variant::preset(&variant)?)?.total
            }
        };
        rows.push(RankRow {
            epochs: get(ei)?.parse().with_context(|| format!("row {}: bad epochs", n + 1))?,
            map: get(mi)?.parse().with_context(|| format!("row {}: bad map", n + 1))?,
            variant,
            params,
        });
    }
    Ok(rows)
}

fn rank(path: &Path, policy: Policy, budget: Option<&str>, spec: Option<&Path>, fmt: Format) -> Result<Outcome> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = parse_rank_rows(&text, spec)?;
    let policy = match (policy, budget) {
        (Policy::MaxMap, _) => RankPolicy::MaxMap,
        (Policy::Efficiency, None) => bail!("--policy efficiency needs --budget"),
        (Policy::Efficiency, Some(b)) => RankPolicy::Efficiency {
            budget: match b.parse() {
                Ok(n) => n,
                Err(_) => estimate_params(&load_spec(spec)?, &Variant::preset(b)?)?.total,
            },
        },
    };
    let ranked = rank_variants(&rows, policy);
    let body = match fmt {
        Format::Json => json(&ranked)?,
        Format::Csv | Format::Text => {
            let mut s = String::from("rank,variant,epochs,map,params\n");
            for (i, r) in ranked.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{},{}", i + 1, r.variant, r.epochs, r.map, r.params);
            }
            s
        }
    };
    Ok(Outcome {
        body,
        findings: ranked.is_empty(),
    })
}

fn report(
    logs: &[(String, PathBuf)],
    out: Option<&Path>,
    criterion: &str,
    table: Option<&Path>,
    fmt: Format,
) -> Result<Outcome> {
    let criterion = Criterion::parse(criterion).with_context(|| format!("unknown criterion {criterion:?}"))?;
    let mut body = String::new();
    let mut findings = false;
    let runs = logs
        .iter()
        .map(|(name, path)| {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(parse_run_log(name, &text)?)
        })
        .collect::<Result<Vec<_>>>()?;
    if !runs.is_empty() {
        for run in &runs {
            let _ = writeln!(body, "{}: best epoch {}", run.name, best_epoch(run, criterion)?);
        }
        if let Some(dir) = out {
            let dash = render_dashboard(&runs)?;
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_file(&dir.join("dashboard.svg"), &dash.svg)?;
            write_file(&dir.join("dashboard.csv"), &dash.csv)?;
        }
    }
    if let Some(path) = table {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cmp = comparison_table(&parse_comparison_csv(&text)?)?;
        findings = !cmp.flags.is_empty();
        match fmt {
            Format::Text => body.push_str(&cmp.render_markdown()),
            Format::Csv => body = cmp.to_csv(),
            Format::Json => body = json(&cmp)?,
        }
    }
    if runs.is_empty() && table.is_none() {
        bail!("nothing to report: pass --log and/or --table");
    }
    emit(None, &body)?;
    Ok(Outcome { body, findings })
}
