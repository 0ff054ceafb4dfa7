//! YOLO text label files, prediction files, the gesture class table and the
//! dataset descriptor.
//!
//! A label line is `class cx cy w h`, with the four box fields normalized to
//! the image size. Prediction lines append a confidence: `class cx cy w h conf`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack for float noise when checking corner overflow (e.g. `0.65 + 0.35`).
const CORNER_EPS: f64 = 1e-9;

/// Overflow accepted (and clamped) by [`ParseMode::Lenient`].
pub const LENIENT_TOLERANCE: f64 = 1e-3;

/// Box field names in line order, used in error messages.
pub const BOX_FIELDS: [&str; 4] = ["cx", "cy", "w", "h"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("field `{field}` is not a number: {token:?}")]
    NonNumeric { field: &'static str, token: String },
    #[error("class id must be a non-negative integer, got {token:?}")]
    InvalidClassId { token: String },
    #[error("class id {class_id} out of range for {class_count} classes")]
    ClassOutOfRange { class_id: usize, class_count: usize },
    #[error("coordinate `{field}` = {value} is outside its range")]
    CoordinateOutOfRange { field: &'static str, value: f64 },
    #[error("box corners exceed the image by {overflow:.6}")]
    CornerOverflow { overflow: f64 },
    #[error("confidence {value} is outside [0, 1]")]
    ConfidenceOutOfRange { value: f64 },
}

impl LabelError {
    /// Name of the offending field, when the error is about a single field.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            LabelError::NonNumeric { field, .. } | LabelError::CoordinateOutOfRange { field, .. } => Some(field),
            LabelError::InvalidClassId { .. } | LabelError::ClassOutOfRange { .. } => Some("class"),
            LabelError::ConfidenceOutOfRange { .. } => Some("conf"),
            LabelError::FieldCount { .. } | LabelError::CornerOverflow { .. } => None,
        }
    }
}

/// A label-file error tagged with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {source}")]
pub struct LineError {
    pub line: usize,
    #[source]
    pub source: LabelError,
}

/// Normalized center-format box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormBox {
    /// Builds a box, checking that `cx, cy ∈ [0,1]` and `w, h ∈ (0,1]`.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, LabelError> {
        let b = NormBox { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        for (field, value) in BOX_FIELDS.iter().zip(self.fields()) {
            let ok = match *field {
                "cx" | "cy" => (0.0..=1.0).contains(&value),
                _ => value > 0.0 && value <= 1.0,
            };
            if !ok || !value.is_finite() {
                return Err(LabelError::CoordinateOutOfRange { field, value });
            }
        }
        Ok(())
    }

    pub fn fields(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// How far the box corners reach outside `[0,1]²` (0 when inside).
    pub fn corner_overflow(&self) -> f64 {
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        [-(self.cx - hw), self.cx + hw - 1.0, -(self.cy - hh), self.cy + hh - 1.0]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: NormBox,
}

impl Annotation {
    pub fn new(class_id: usize, bbox: NormBox) -> Self {
        Annotation { class_id, bbox }
    }
}

/// A model output: an annotation plus a confidence in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: NormBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(class_id: usize, bbox: NormBox, confidence: f64) -> Self {
        Detection {
            class_id,
            bbox,
            confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Reject any out-of-range value.
    #[default]
    Strict,
    /// Clamp field values and box corners that overflow by at most
    /// [`LENIENT_TOLERANCE`], recording a warning.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    pub mode: ParseMode,
    /// When set, boxes whose corners leave the image by more than this are
    /// rejected. Unset by default: only the field ranges are checked.
    pub corner_tolerance: Option<f64>,
    /// When set, class ids must be below this count.
    pub class_count: Option<usize>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self::strict()
    }
}

impl ParseOptions {
    pub fn strict() -> Self {
        ParseOptions {
            mode: ParseMode::Strict,
            corner_tolerance: None,
            class_count: None,
        }
    }

    pub fn lenient() -> Self {
        ParseOptions {
            mode: ParseMode::Lenient,
            corner_tolerance: None,
            class_count: None,
        }
    }

    pub fn with_corner_tolerance(mut self, tolerance: f64) -> Self {
        self.corner_tolerance = Some(tolerance);
        self
    }

    pub fn with_class_count(mut self, class_count: usize) -> Self {
        self.class_count = Some(class_count);
        self
    }
}

/// A value adjusted by lenient parsing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedLabels {
    pub annotations: Vec<Annotation>,
    pub warnings: Vec<ParseWarning>,
}

/// Parses one `class cx cy w h` line in strict mode.
pub fn parse_label_line(line: &str) -> Result<Annotation, LabelError> {
    parse_label_line_with(line, &ParseOptions::strict()).map(|(a, _)| a)
}

/// Parses one label line; the second value describes any lenient clamping.
pub fn parse_label_line_with(line: &str, opts: &ParseOptions) -> Result<(Annotation, Option<String>), LabelError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 5 {
        return Err(LabelError::FieldCount {
            expected: 5,
            found: tokens.len(),
        });
    }
    parse_fields(&tokens, opts)
}

fn parse_fields(tokens: &[&str], opts: &ParseOptions) -> Result<(Annotation, Option<String>), LabelError> {
    let class_id = parse_class_id(tokens[0])?;
    if let Some(class_count) = opts.class_count {
        if class_id >= class_count {
            return Err(LabelError::ClassOutOfRange { class_id, class_count });
        }
    }
    let mut values = [0.0; 4];
    for (i, field) in BOX_FIELDS.iter().enumerate() {
        values[i] = parse_number(field, tokens[i + 1])?;
    }
    let lenient = opts.mode == ParseMode::Lenient;
    let mut clamped = false;
    for (i, field) in BOX_FIELDS.iter().enumerate() {
        let v = values[i];
        let is_size = i >= 2;
        let in_range = if is_size {
            v > 0.0 && v <= 1.0
        } else {
            (0.0..=1.0).contains(&v)
        };
        if in_range {
            continue;
        }
        let near = (-LENIENT_TOLERANCE..=1.0 + LENIENT_TOLERANCE).contains(&v);
        if lenient && near && (!is_size || v > 0.0) {
            values[i] = v.clamp(0.0, 1.0);
            clamped = true;
            continue;
        }
        return Err(LabelError::CoordinateOutOfRange { field, value: v });
    }
    let mut bbox = NormBox::new(values[0], values[1], values[2], values[3])?;
    let overflow = bbox.corner_overflow();
    if opts.corner_tolerance.is_some_and(|t| overflow > t + CORNER_EPS) {
        return Err(LabelError::CornerOverflow { overflow });
    }
    if lenient && overflow > CORNER_EPS && overflow <= LENIENT_TOLERANCE + CORNER_EPS {
        bbox = clamp_to_image(&bbox)?;
        clamped = true;
    }
    let warning = clamped.then(|| "clamped to image bounds".to_string());
    Ok((Annotation::new(class_id, bbox), warning))
}

fn clamp_to_image(b: &NormBox) -> Result<NormBox, LabelError> {
    let x1 = (b.cx - b.w / 2.0).max(0.0);
    let x2 = (b.cx + b.w / 2.0).min(1.0);
    let y1 = (b.cy - b.h / 2.0).max(0.0);
    let y2 = (b.cy + b.h / 2.0).min(1.0);
    NormBox::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
}

fn parse_class_id(token: &str) -> Result<usize, LabelError> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(LabelError::InvalidClassId {
            token: token.to_string(),
        });
    }
    token.parse().map_err(|_| LabelError::InvalidClassId {
        token: token.to_string(),
    })
}

fn parse_number(field: &'static str, token: &str) -> Result<f64, LabelError> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(LabelError::NonNumeric {
            field,
            token: token.to_string(),
        }),
    }
}

/// Parses a whole label file in strict mode. Blank lines are skipped; an
/// empty file is a valid negative sample.
pub fn parse_label_file(text: &str) -> Result<Vec<Annotation>, LineError> {
    parse_label_file_with(text, &ParseOptions::strict()).map(|p| p.annotations)
}

pub fn parse_label_file_with(text: &str, opts: &ParseOptions) -> Result<ParsedLabels, LineError> {
    let mut out = ParsedLabels::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (ann, warning) = parse_label_line_with(line, opts).map_err(|source| LineError { line: idx + 1, source })?;
        if let Some(message) = warning {
            out.warnings.push(ParseWarning { line: idx + 1, message });
        }
        out.annotations.push(ann);
    }
    Ok(out)
}

/// Emits one line per annotation with 6-decimal coordinates.
///
/// Every emitted line is re-checked under strict parsing, so the output of a
/// successful call always re-parses.
pub fn emit_label_file(annotations: &[Annotation]) -> Result<String, LineError> {
    let mut out = String::new();
    for (idx, ann) in annotations.iter().enumerate() {
        let line = format_label_line(ann);
        let err = |source| LineError { line: idx + 1, source };
        ann.bbox.validate().map_err(err)?;
        parse_label_line(&line).map_err(err)?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn format_label_line(ann: &Annotation) -> String {
    let b = &ann.bbox;
    format!("{} {:.6} {:.6} {:.6} {:.6}", ann.class_id, b.cx, b.cy, b.w, b.h)
}

pub fn parse_prediction_line(line: &str) -> Result<Detection, LabelError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 6 {
        return Err(LabelError::FieldCount {
            expected: 6,
            found: tokens.len(),
        });
    }
    let (ann, _) = parse_fields(&tokens[..5], &ParseOptions::strict())?;
    let confidence = parse_number("conf", tokens[5])?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(LabelError::ConfidenceOutOfRange { value: confidence });
    }
    Ok(Detection::new(ann.class_id, ann.bbox, confidence))
}

/// Parses a `class cx cy w h conf` prediction file.
pub fn parse_prediction_file(text: &str) -> Result<Vec<Detection>, LineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| parse_prediction_line(l).map_err(|source| LineError { line: idx + 1, source }))
        .collect()
}

pub fn emit_prediction_file(detections: &[Detection]) -> String {
    let mut out = String::new();
    for d in detections {
        let b = &d.bbox;
        let _ = writeln!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6} {:.6}",
            d.class_id, b.cx, b.cy, b.w, b.h, d.confidence
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub index: usize,
    pub gloss: String,
    pub name: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassTableError {
    #[error("class indices must be contiguous from 0; entry {position} has index {index}")]
    NonContiguous { position: usize, index: usize },
    #[error("duplicate class name {0:?}")]
    DuplicateName(String),
    #[error("class table is empty")]
    Empty,
}

/// Ordered class list; index `i` is the class id written in label files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassTable {
    entries: Vec<ClassEntry>,
}

const GESTURES: [(&str, &str); 12] = [
    ("Home", "illu"),
    ("Love", "prema"),
    ("Money", "dabbulu"),
    ("No", "kadhu"),
    ("One", "okati"),
    ("Yes", "avunu"),
    ("Fine", "bagunna"),
    ("Family", "kutumbam"),
    ("Pray", "Namasthe"),
    ("Help", "sahayam"),
    ("Why", "enduku"),
    ("Where", "ekkada"),
];

/// The twelve Telugu sign gestures, in dataset order.
pub fn default_class_table() -> ClassTable {
    let entries = GESTURES
        .iter()
        .enumerate()
        .map(|(index, (gloss, name))| ClassEntry {
            index,
            gloss: gloss.to_string(),
            name: name.to_string(),
        })
        .collect();
    ClassTable::new(entries).expect("built-in table is valid")
}

impl ClassTable {
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self, ClassTableError> {
        if entries.is_empty() {
            return Err(ClassTableError::Empty);
        }
        let mut seen = HashSet::new();
        for (position, e) in entries.iter().enumerate() {
            if e.index != position {
                return Err(ClassTableError::NonContiguous {
                    position,
                    index: e.index,
                });
            }
            if !seen.insert(e.name.as_str()) {
                return Err(ClassTableError::DuplicateName(e.name.clone()));
            }
        }
        Ok(ClassTable { entries })
    }

    /// Table from bare names (as found in a dataset descriptor); gloss = name.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, ClassTableError> {
        Self::new(
            names
                .iter()
                .enumerate()
                .map(|(index, n)| ClassEntry {
                    index,
                    gloss: n.as_ref().to_string(),
                    name: n.as_ref().to_string(),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn name(&self, class_id: usize) -> Option<&str> {
        self.entries.get(class_id).map(|e| e.name.as_str())
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }
}

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("invalid descriptor: {0}")]
    Yaml(#[from] serde_yaml::Error),
    #[error("nc = {nc} but {names} class names are listed")]
    CountMismatch { nc: usize, names: usize },
    #[error("names map must use keys 0..nc, missing {0}")]
    MissingIndex(usize),
    #[error(transparent)]
    Classes(#[from] ClassTableError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum NamesField {
    List(Vec<String>),
    Map(BTreeMap<usize, String>),
}

#[derive(Debug, Deserialize)]
struct RawDescriptor {
    #[serde(default)]
    path: Option<String>,
    train: String,
    val: String,
    nc: usize,
    names: NamesField,
}

/// The `train`/`val`/`nc`/`names` dataset file used by YOLO tooling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetDescriptor {
    /// Optional dataset root that `train`/`val` are relative to.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(rename = "train")]
    pub train_dir: String,
    #[serde(rename = "val")]
    pub test_dir: String,
    #[serde(rename = "nc")]
    pub class_count: usize,
    #[serde(rename = "names")]
    pub class_names: Vec<String>,
}

impl DatasetDescriptor {
    pub fn new(train_dir: impl Into<String>, test_dir: impl Into<String>, class_names: Vec<String>) -> Self {
        DatasetDescriptor {
            path: None,
            train_dir: train_dir.into(),
            test_dir: test_dir.into(),
            class_count: class_names.len(),
            class_names,
        }
    }

    pub fn parse(text: &str) -> Result<Self, DescriptorError> {
        let raw: RawDescriptor = serde_yaml::from_str(text)?;
        let class_names = match raw.names {
            NamesField::List(v) => v,
            NamesField::Map(m) => (0..m.len())
                .map(|i| m.get(&i).cloned().ok_or(DescriptorError::MissingIndex(i)))
                .collect::<Result<_, _>>()?,
        };
        if class_names.len() != raw.nc {
            return Err(DescriptorError::CountMismatch {
                nc: raw.nc,
                names: class_names.len(),
            });
        }
        ClassTable::from_names(&class_names)?;
        Ok(DatasetDescriptor {
            path: raw.path,
            train_dir: raw.train,
            test_dir: raw.val,
            class_count: raw.nc,
            class_names,
        })
    }

    pub fn to_yaml(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.path {
            let _ = writeln!(out, "path: {}", yaml_scalar(p));
        }
        let _ = writeln!(out, "train: {}", yaml_scalar(&self.train_dir));
        let _ = writeln!(out, "val: {}", yaml_scalar(&self.test_dir));
        let _ = writeln!(out, "nc: {}", self.class_count);
        let names: Vec<String> = self.class_names.iter().map(|n| yaml_scalar(n)).collect();
        let _ = writeln!(out, "names: [{}]", names.join(", "));
        out
    }

    pub fn class_table(&self) -> Result<ClassTable, ClassTableError> {
        ClassTable::from_names(&self.class_names)
    }
}

fn yaml_scalar(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}
