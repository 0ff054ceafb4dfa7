//! `[from, number, module, args]` model specs: parsing, emission, depth and
//! width scaling, parameter estimates and variant ranking.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::Serialize;
use serde_yaml::Value;
use thiserror::Error;

use crate::dataset::anchors::{AnchorError, AnchorGroup, AnchorSet};

/// Bundled reference spec (medium multiples, 12 classes).
pub const REFERENCE_SPEC: &str = include_str!("../assets/yolov5-tsl.yaml");

pub const CHANNEL_DIVISOR: u64 = 8;
const INPUT_CHANNELS: u64 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("spec is not valid YAML: {0}")]
    Yaml(String),
    #[error("missing or invalid key `{0}`")]
    Key(&'static str),
    #[error("{section} row {row}: {message}")]
    Row {
        section: &'static str,
        row: usize,
        message: String,
    },
    #[error("layer {layer}: `from` {from} does not refer to an earlier layer")]
    Dangling { layer: usize, from: i64 },
    #[error("layer {layer}: repeat count must be ≥ 1")]
    Repeat { layer: usize },
    #[error("layer {layer} ({module}): {message}")]
    Layer {
        layer: usize,
        module: String,
        message: String,
    },
    #[error("multiples must be in (0, 1.5], got depth {depth} width {width}")]
    Multiple { depth: f64, width: f64 },
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error(transparent)]
    Anchors(#[from] AnchorError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variant {
    pub name: String,
    pub depth_multiple: f64,
    pub width_multiple: f64,
}

impl Variant {
    pub fn new(name: &str, depth_multiple: f64, width_multiple: f64) -> Result<Self, ModelError> {
        let ok = |m: f64| m > 0.0 && m <= 1.5;
        if !(ok(depth_multiple) && ok(width_multiple)) {
            return Err(ModelError::Multiple {
                depth: depth_multiple,
                width: width_multiple,
            });
        }
        Ok(Variant {
            name: name.to_string(),
            depth_multiple,
            width_multiple,
        })
    }

    pub fn small() -> Self {
        Variant::new("yolov5s", 0.33, 0.50).expect("preset")
    }

    pub fn medium() -> Self {
        Variant::new("yolov5m", 0.67, 0.75).expect("preset")
    }

    pub fn large() -> Self {
        Variant::new("yolov5l", 1.0, 1.0).expect("preset")
    }

    pub fn presets() -> [Variant; 3] {
        [Variant::small(), Variant::medium(), Variant::large()]
    }

    /// Accepts `s`, `small`, `yolov5s` and the like.
    pub fn preset(name: &str) -> Result<Self, ModelError> {
        match name.to_ascii_lowercase().trim_start_matches("yolov5") {
            "s" | "small" => Ok(Variant::small()),
            "m" | "medium" => Ok(Variant::medium()),
            "l" | "large" => Ok(Variant::large()),
            _ => Err(ModelError::UnknownVariant(name.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Arg {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    Null,
    List(Vec<Arg>),
}

impl Arg {
    fn from_value(v: &Value) -> Result<Arg, String> {
        Ok(match v {
            Value::Null => Arg::Null,
            Value::Bool(b) => Arg::Bool(*b),
            Value::Number(n) => match n.as_i64() {
                Some(i) => Arg::Int(i),
                None => Arg::Float(n.as_f64().ok_or("unrepresentable number")?),
            },
            Value::String(s) => Arg::Str(s.clone()),
            Value::Sequence(items) => Arg::List(items.iter().map(Arg::from_value).collect::<Result<_, _>>()?),
            _ => return Err("unsupported argument".into()),
        })
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Arg::Int(i) => Some(*i),
            _ => None,
        }
    }

    fn emit(&self, out: &mut String) {
        match self {
            Arg::Int(i) => write!(out, "{i}").unwrap(),
            Arg::Float(f) => write!(out, "{f:?}").unwrap(),
            Arg::Bool(b) => out.push_str(if *b { "True" } else { "False" }),
            Arg::Str(s) => write!(out, "'{}'", s.replace('\'', "''")).unwrap(),
            Arg::Null => out.push_str("null"),
            Arg::List(items) => {
                out.push('[');
                for (i, a) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    a.emit(out);
                }
                out.push(']');
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum LayerInput {
    Single(i64),
    Multi(Vec<i64>),
}

impl LayerInput {
    pub fn indices(&self) -> Vec<i64> {
        match self {
            LayerInput::Single(f) => vec![*f],
            LayerInput::Multi(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layer {
    pub from: LayerInput,
    pub number: u64,
    pub module: String,
    pub args: Vec<Arg>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Anchors {
    /// Anchors per level, left for the trainer to fit.
    Count(u64),
    /// Flattened `w, h` pairs per detection level.
    Levels(Vec<Vec<f64>>),
}

impl Anchors {
    pub fn per_level(&self) -> u64 {
        match self {
            Anchors::Count(n) => *n,
            Anchors::Levels(l) => l.first().map_or(0, |a| a.len() as u64 / 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub nc: usize,
    pub depth_multiple: f64,
    pub width_multiple: f64,
    pub anchors: Anchors,
    pub backbone: Vec<Layer>,
    pub head: Vec<Layer>,
}

fn key<'a>(map: &'a Value, name: &'static str) -> Result<&'a Value, ModelError> {
    map.get(name).ok_or(ModelError::Key(name))
}

fn parse_rows(v: &Value, section: &'static str) -> Result<Vec<Layer>, ModelError> {
    let rows = v.as_sequence().ok_or(ModelError::Key(section))?;
    let row_err = |row: usize, message: &str| ModelError::Row {
        section,
        row,
        message: message.to_string(),
    };
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let cols = r
                .as_sequence()
                .ok_or_else(|| row_err(i, "expected [from, number, module, args]"))?;
            if cols.len() != 4 {
                return Err(row_err(i, "expected 4 columns"));
            }
            let from = match &cols[0] {
                Value::Number(n) => LayerInput::Single(n.as_i64().ok_or_else(|| row_err(i, "bad from"))?),
                Value::Sequence(s) => LayerInput::Multi(
                    s.iter()
                        .map(|x| x.as_i64().ok_or_else(|| row_err(i, "bad from")))
                        .collect::<Result<_, _>>()?,
                ),
                _ => return Err(row_err(i, "bad from")),
            };
            let number = cols[1]
                .as_i64()
                .ok_or_else(|| row_err(i, "number must be an integer"))?;
            let module = cols[2].as_str().ok_or_else(|| row_err(i, "module must be a name"))?;
            let args = match &cols[3] {
                Value::Sequence(s) => s
                    .iter()
                    .map(Arg::from_value)
                    .collect::<Result<_, _>>()
                    .map_err(|m| row_err(i, &m))?,
                _ => return Err(row_err(i, "args must be a list")),
            };
            if number < 1 {
                return Err(ModelError::Repeat { layer: i });
            }
            Ok(Layer {
                from,
                number: number as u64,
                module: module.to_string(),
                args,
            })
        })
        .collect()
}

pub fn parse_model_spec(text: &str) -> Result<ModelSpec, ModelError> {
    let doc: Value = serde_yaml::from_str(text).map_err(|e| ModelError::Yaml(e.to_string()))?;
    let nc = key(&doc, "nc")?.as_u64().ok_or(ModelError::Key("nc"))? as usize;
    let depth_multiple = key(&doc, "depth_multiple")?
        .as_f64()
        .ok_or(ModelError::Key("depth_multiple"))?;
    let width_multiple = key(&doc, "width_multiple")?
        .as_f64()
        .ok_or(ModelError::Key("width_multiple"))?;
    let anchors = match key(&doc, "anchors")? {
        Value::Number(n) => Anchors::Count(n.as_u64().filter(|&n| n > 0).ok_or(ModelError::Key("anchors"))?),
        Value::Sequence(levels) => Anchors::Levels(
            levels
                .iter()
                .map(|l| {
                    let l = l.as_sequence().ok_or(ModelError::Key("anchors"))?;
                    let vals: Vec<f64> = l.iter().filter_map(Value::as_f64).collect();
                    if vals.len() != l.len() || vals.is_empty() || !vals.len().is_multiple_of(2) {
                        return Err(ModelError::Key("anchors"));
                    }
                    Ok(vals)
                })
                .collect::<Result<_, _>>()?,
        ),
        _ => return Err(ModelError::Key("anchors")),
    };
    let spec = ModelSpec {
        nc,
        depth_multiple,
        width_multiple,
        anchors,
        backbone: parse_rows(key(&doc, "backbone")?, "backbone")?,
        head: parse_rows(key(&doc, "head")?, "head")?,
    };
    spec.validate()?;
    Ok(spec)
}

fn resolve(layer: usize, f: i64) -> Result<Option<usize>, ModelError> {
    let r = if f < 0 { layer as i64 + f } else { f };
    if f < 0 && r == -1 {
        // the network input
        return Ok(None);
    }
    if r < 0 || r >= layer as i64 {
        return Err(ModelError::Dangling { layer, from: f });
    }
    Ok(Some(r as usize))
}

impl ModelSpec {
    /// Backbone then head; `from` indices count across both.
    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.backbone.iter().chain(self.head.iter())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, l) in self.layers().enumerate() {
            if l.number < 1 {
                return Err(ModelError::Repeat { layer: i });
            }
            for f in l.from.indices() {
                resolve(i, f)?;
            }
        }
        Ok(())
    }

    pub fn variant(&self) -> Result<Variant, ModelError> {
        Variant::new("spec", self.depth_multiple, self.width_multiple)
    }

    /// Same spec with another variant's multiples.
    pub fn with_variant(&self, v: &Variant) -> ModelSpec {
        ModelSpec {
            depth_multiple: v.depth_multiple,
            width_multiple: v.width_multiple,
            ..self.clone()
        }
    }

    /// Anchor levels paired with the strides of the Detect inputs.
    pub fn anchor_set(&self, strides: &[u32]) -> Result<Option<AnchorSet>, ModelError> {
        let Anchors::Levels(levels) = &self.anchors else {
            return Ok(None);
        };
        let groups = levels
            .iter()
            .zip(strides)
            .map(|(l, &stride)| AnchorGroup {
                stride,
                anchors: l.chunks(2).map(|p| (p[0], p[1])).collect(),
            })
            .collect();
        Ok(Some(AnchorSet::new(groups)?))
    }
}

fn emit_rows(out: &mut String, name: &str, rows: &[Layer]) {
    writeln!(out, "{name}:").unwrap();
    for (i, l) in rows.iter().enumerate() {
        out.push_str(if i == 0 { "  [[" } else { "   [" });
        match &l.from {
            LayerInput::Single(f) => write!(out, "{f}").unwrap(),
            LayerInput::Multi(v) => {
                let parts: Vec<String> = v.iter().map(i64::to_string).collect();
                write!(out, "[{}]", parts.join(", ")).unwrap();
            }
        }
        write!(out, ", {}, {}, ", l.number, l.module).unwrap();
        Arg::List(l.args.clone()).emit(out);
        out.push_str("],\n");
    }
    if rows.is_empty() {
        out.push_str("  [\n");
    }
    out.push_str("  ]\n");
}

pub fn emit_model_spec(spec: &ModelSpec) -> String {
    let mut out = String::new();
    writeln!(out, "nc: {}", spec.nc).unwrap();
    writeln!(out, "depth_multiple: {:?}", spec.depth_multiple).unwrap();
    writeln!(out, "width_multiple: {:?}", spec.width_multiple).unwrap();
    match &spec.anchors {
        Anchors::Count(n) => writeln!(out, "anchors: {n}").unwrap(),
        Anchors::Levels(levels) => {
            out.push_str("anchors:\n");
            for l in levels {
                let parts: Vec<String> = l.iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "  - [{}]", parts.join(", ")).unwrap();
            }
        }
    }
    out.push('\n');
    emit_rows(&mut out, "backbone", &spec.backbone);
    out.push('\n');
    emit_rows(&mut out, "head", &spec.head);
    out
}

/// `max(round(n·d), 1)` with ties to even, as Python's `round` does.
pub fn scale_depth(n: u64, depth_multiple: f64) -> u64 {
    ((n as f64 * depth_multiple).round_ties_even() as u64).max(1)
}

/// Channels times the multiple, rounded up to a multiple of `divisor`.
pub fn scale_width(channels: u64, width_multiple: f64, divisor: u64) -> u64 {
    let units = (channels as f64 * width_multiple / divisor as f64 - 1e-9)
        .ceil()
        .max(1.0);
    units as u64 * divisor
}

/// Weights plus bias of a `k×k` convolution.
pub fn conv_params(k: u64, c_in: u64, c_out: u64) -> u64 {
    k * k * c_in * c_out + c_out
}

fn bottleneck_params(c_in: u64, c_out: u64, e: f64) -> u64 {
    let c_ = (c_out as f64 * e) as u64;
    conv_params(1, c_in, c_) + conv_params(3, c_, c_out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerParams {
    pub index: usize,
    pub from: LayerInput,
    /// Repeat count after depth scaling.
    pub number: u64,
    pub module: String,
    pub c_in: u64,
    pub c_out: u64,
    pub stride: u32,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamReport {
    pub variant: Variant,
    pub layers: Vec<LayerParams>,
    pub total: u64,
    /// Modules counted as 0 because their parameters are not modeled.
    pub unknown_modules: Vec<String>,
    pub detect_strides: Vec<u32>,
}

impl ParamReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "variant {} (depth {}, width {})\n{:>3} {:>12} {:>3} {:<16} {:>6} {:>6} {:>6} {:>12}\n",
            self.variant.name,
            self.variant.depth_multiple,
            self.variant.width_multiple,
            "#",
            "from",
            "n",
            "module",
            "c_in",
            "c_out",
            "stride",
            "params"
        );
        for l in &self.layers {
            let from = match &l.from {
                LayerInput::Single(f) => f.to_string(),
                LayerInput::Multi(v) => format!("{v:?}"),
            };
            writeln!(
                out,
                "{:>3} {:>12} {:>3} {:<16} {:>6} {:>6} {:>6} {:>12}",
                l.index, from, l.number, l.module, l.c_in, l.c_out, l.stride, l.params
            )
            .unwrap();
        }
        writeln!(out, "total parameters: {}", self.total).unwrap();
        if !self.unknown_modules.is_empty() {
            writeln!(out, "not counted: {}", self.unknown_modules.join(", ")).unwrap();
        }
        out
    }
}

fn int_arg(args: &[Arg], i: usize, default: i64) -> i64 {
    args.get(i).and_then(Arg::as_int).unwrap_or(default)
}

fn layer_err(index: usize, module: &str, message: &str) -> ModelError {
    ModelError::Layer {
        layer: index,
        module: module.to_string(),
        message: message.to_string(),
    }
}

pub fn estimate_params(spec: &ModelSpec, variant: &Variant) -> Result<ParamReport, ModelError> {
    spec.validate()?;
    let (gd, gw) = (variant.depth_multiple, variant.width_multiple);
    let mut ch: Vec<u64> = Vec::new();
    let mut strides: Vec<u32> = Vec::new();
    let mut layers = Vec::new();
    let mut unknown: Vec<String> = Vec::new();
    let mut detect_strides = Vec::new();

    for (i, l) in spec.layers().enumerate() {
        let sources: Vec<Option<usize>> = l
            .from
            .indices()
            .into_iter()
            .map(|f| resolve(i, f))
            .collect::<Result<_, _>>()?;
        let ch_of = |s: &Option<usize>| s.map_or(INPUT_CHANNELS, |k| ch[k]);
        let stride_of = |s: &Option<usize>| s.map_or(1, |k| strides[k]);
        let c_in = ch_of(&sources[0]);
        let s_in = stride_of(&sources[0]);
        let n = if l.number > 1 { scale_depth(l.number, gd) } else { 1 };
        let module = l.module.trim_start_matches("nn.");
        let out_ch = || -> Result<u64, ModelError> {
            let c = int_arg(&l.args, 0, 0);
            if c <= 0 {
                return Err(layer_err(i, &l.module, "first argument must be the output channels"));
            }
            Ok(scale_width(c as u64, gw, CHANNEL_DIVISOR))
        };
        let (c_out, stride, params) = match module {
            "Conv" => {
                let c2 = out_ch()?;
                let (k, s) = (int_arg(&l.args, 1, 1) as u64, int_arg(&l.args, 2, 1) as u32);
                (c2, s_in * s.max(1), n * conv_params(k, c_in, c2))
            }
            "Focus" => {
                let c2 = out_ch()?;
                let k = int_arg(&l.args, 1, 1) as u64;
                (c2, s_in * 2, n * conv_params(k, 4 * c_in, c2))
            }
            "Bottleneck" => {
                let c2 = out_ch()?;
                (c2, s_in, n * bottleneck_params(c_in, c2, 0.5))
            }
            "BottleneckCSP" | "C3" => {
                let c2 = out_ch()?;
                let c_ = c2 / 2;
                let inner = n * bottleneck_params(c_, c_, 1.0);
                let outer = if module == "C3" {
                    2 * conv_params(1, c_in, c_) + conv_params(1, 2 * c_, c2)
                } else {
                    // cv1, cv2, cv3 and cv4 of the cross-stage split
                    conv_params(1, c_in, c_)
                        + conv_params(1, c_in, c_)
                        + conv_params(1, c_, c_)
                        + conv_params(1, 2 * c_, c2)
                };
                (c2, s_in, outer + inner)
            }
            "SPP" | "SPPF" => {
                let c2 = out_ch()?;
                let c_ = c_in / 2;
                let pools = if module == "SPPF" {
                    3
                } else {
                    match l.args.get(1) {
                        Some(Arg::List(k)) => k.len() as u64,
                        _ => 3,
                    }
                };
                (
                    c2,
                    s_in,
                    conv_params(1, c_in, c_) + conv_params(1, c_ * (pools + 1), c2),
                )
            }
            "Upsample" => {
                let factor = int_arg(&l.args, 1, 2).max(1) as u32;
                (c_in, (s_in / factor).max(1), 0)
            }
            "Concat" => (sources.iter().map(ch_of).sum(), s_in, 0),
            "Detect" => {
                let na = spec.anchors.per_level();
                let no = na * (spec.nc as u64 + 5);
                let params = sources.iter().map(|s| ch_of(s) * no + no).sum();
                detect_strides = sources.iter().map(stride_of).collect();
                (no, s_in, params)
            }
            _ => {
                if !unknown.contains(&l.module) {
                    unknown.push(l.module.clone());
                }
                (c_in, s_in, 0)
            }
        };
        ch.push(c_out);
        strides.push(stride);
        layers.push(LayerParams {
            index: i,
            from: l.from.clone(),
            number: n,
            module: l.module.clone(),
            c_in,
            c_out,
            stride,
            params,
        });
    }
    let total = layers.iter().map(|l| l.params).sum();
    Ok(ParamReport {
        variant: variant.clone(),
        layers,
        total,
        unknown_modules: unknown,
        detect_strides,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub variant: String,
    pub epochs: u32,
    pub map: f64,
    pub params: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankPolicy {
    MaxMap,
    /// Best mAP among rows with at most `budget` parameters.
    Efficiency {
        budget: u64,
    },
}

/// Sorted by mAP (descending), then fewer parameters, then fewer epochs.
pub fn rank_variants(rows: &[RankRow], policy: RankPolicy) -> Vec<RankRow> {
    let mut out: Vec<RankRow> = rows
        .iter()
        .filter(|r| match policy {
            RankPolicy::MaxMap => true,
            RankPolicy::Efficiency { budget } => r.params <= budget,
        })
        .cloned()
        .collect();
    out.sort_by(|a, b| {
        b.map
            .partial_cmp(&a.map)
            .unwrap_or(Ordering::Equal)
            .then(a.params.cmp(&b.params))
            .then(a.epochs.cmp(&b.epochs))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelSpec {
        parse_model_spec(REFERENCE_SPEC).unwrap()
    }

    #[test]
    fn parses_reference_spec() {
        let spec = reference();
        assert_eq!(spec.nc, 12);
        assert_eq!((spec.backbone.len(), spec.head.len()), (10, 15));
        assert_eq!(spec.backbone[0].module, "Focus");
        assert_eq!(spec.head[2].from, LayerInput::Multi(vec![-1, 6]));
        assert_eq!(
            spec.head[1].args,
            vec![Arg::Str("None".into()), Arg::Int(2), Arg::Str("nearest".into())]
        );
        assert_eq!(spec.anchors.per_level(), 3);
        let set = spec.anchor_set(&[8, 16, 32]).unwrap().unwrap();
        assert_eq!(set, AnchorSet::yolov5_default());
    }

    #[test]
    fn row_mapping() {
        let text = "nc: 1\ndepth_multiple: 1.0\nwidth_multiple: 1.0\nanchors: 3\nbackbone:\n  [[-1, 1, Conv, [64, 6, 2, 2]]]\nhead: []\n";
        let spec = parse_model_spec(text).unwrap();
        assert_eq!(
            spec.backbone[0],
            Layer {
                from: LayerInput::Single(-1),
                number: 1,
                module: "Conv".into(),
                args: vec![Arg::Int(64), Arg::Int(6), Arg::Int(2), Arg::Int(2)],
            }
        );
        assert_eq!(spec.anchors, Anchors::Count(3));
    }

    #[test]
    fn rejects_dangling_and_bad_rows() {
        let base = "nc: 1\ndepth_multiple: 1.0\nwidth_multiple: 1.0\nanchors: 3\nhead: []\nbackbone:\n";
        let dangling = format!("{base}  [[-1, 1, Conv, [8]], [99, 1, Conv, [8]]]\n");
        assert_eq!(
            parse_model_spec(&dangling),
            Err(ModelError::Dangling { layer: 1, from: 99 })
        );
        let repeat = format!("{base}  [[-1, 0, Conv, [8]]]\n");
        assert_eq!(parse_model_spec(&repeat), Err(ModelError::Repeat { layer: 0 }));
        let malformed = format!("{base}  [[-1, 1, Conv]]\n");
        assert!(matches!(parse_model_spec(&malformed), Err(ModelError::Row { .. })));
        let forward = format!("{base}  [[-1, 1, Conv, [8]], [[-1, 1], 1, Concat, [1]]]\n");
        assert!(matches!(
            parse_model_spec(&forward),
            Err(ModelError::Dangling { layer: 1, from: 1 })
        ));
    }

    #[test]
    fn emit_round_trip() {
        let spec = reference();
        let text = emit_model_spec(&spec);
        assert_eq!(parse_model_spec(&text).unwrap(), spec);
        let counted = ModelSpec {
            anchors: Anchors::Count(3),
            depth_multiple: 0.33,
            ..spec
        };
        assert_eq!(parse_model_spec(&emit_model_spec(&counted)).unwrap(), counted);
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scale_depth(3, 0.67), 2);
        assert_eq!(scale_depth(1, 0.33), 1);
        assert_eq!(scale_depth(9, 0.33), 3);
        // 2.5 rounds to even
        assert_eq!(scale_depth(5, 0.5), 2);
        assert_eq!(scale_width(64, 0.75, 8), 48);
        assert_eq!(scale_width(1024, 0.5, 8), 512);
        assert_eq!(scale_width(10, 0.1, 8), 8);
        assert_eq!(scale_width(100, 0.33, 8), 40);
    }

    #[test]
    fn conv_param_example() {
        assert_eq!(conv_params(3, 16, 32), 4640);
        let text = "nc: 1\ndepth_multiple: 1.0\nwidth_multiple: 1.0\nanchors: 3\nbackbone:\n  [[-1, 1, Conv, [32, 3, 1]]]\nhead: []\n";
        let spec = parse_model_spec(text).unwrap();
        // input has 3 channels
        assert_eq!(
            estimate_params(&spec, &Variant::large()).unwrap().total,
            9 * 3 * 32 + 32
        );
    }

    #[test]
    fn variant_totals_are_ordered() {
        let spec = reference();
        let totals: Vec<u64> = Variant::presets()
            .iter()
            .map(|v| estimate_params(&spec, v).unwrap().total)
            .collect();
        assert!(totals[0] < totals[1] && totals[1] < totals[2], "{totals:?}");
        let report = estimate_params(&spec, &Variant::large()).unwrap();
        assert_eq!(report.detect_strides, vec![8, 16, 32]);
        assert!(report.unknown_modules.is_empty());
        // Detect on the large variant: (256 + 512 + 1024)·51 + 3·51
        assert_eq!(report.layers[24].params, (256 + 512 + 1024) * 51 + 3 * 51);
    }

    #[test]
    fn unknown_modules_are_listed() {
        let text = "nc: 1\ndepth_multiple: 1.0\nwidth_multiple: 1.0\nanchors: 3\nbackbone:\n  [[-1, 1, Conv, [8]], [-1, 1, Mystery, [3]], [-1, 1, Mystery, [3]]]\nhead: []\n";
        let spec = parse_model_spec(text).unwrap();
        let report = estimate_params(&spec, &Variant::large()).unwrap();
        assert_eq!(report.unknown_modules, vec!["Mystery".to_string()]);
        assert_eq!(report.layers[1].params, 0);
    }

    #[test]
    fn variant_presets() {
        assert_eq!(Variant::preset("yolov5m").unwrap(), Variant::medium());
        assert_eq!(Variant::preset("S").unwrap().width_multiple, 0.5);
        assert!(Variant::preset("x").is_err());
        assert!(Variant::new("bad", 0.0, 1.0).is_err());
        assert!(Variant::new("bad", 1.0, 1.6).is_err());
    }

    #[test]
    fn ranking_single_and_ties() {
        let row = |v: &str, e, map, params| RankRow {
            variant: v.into(),
            epochs: e,
            map,
            params,
        };
        let one = vec![row("a", 100, 0.5, 10)];
        assert_eq!(rank_variants(&one, RankPolicy::MaxMap), one);
        let rows = vec![row("b", 300, 0.9, 20), row("c", 200, 0.9, 20), row("d", 100, 0.9, 10)];
        let ranked: Vec<String> = rank_variants(&rows, RankPolicy::MaxMap)
            .into_iter()
            .map(|r| r.variant)
            .collect();
        assert_eq!(ranked, ["d", "c", "b"]);
        assert_eq!(rank_variants(&rows, RankPolicy::Efficiency { budget: 15 }).len(), 1);
    }
}
