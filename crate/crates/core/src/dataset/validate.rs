use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;
use std::path::{Component, Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::labelfmt::{parse_label_line, DatasetDescriptor};

pub const IMAGE_EXTENSIONS: [&str; 6] = ["jpg", "jpeg", "png", "bmp", "webp", "tif"];

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    OrphanLabel,
    MissingLabel,
    ClassOutOfRange {
        line: usize,
        class_id: usize,
        class_count: usize,
    },
    MalformedLine {
        line: usize,
        message: String,
    },
    DuplicateBox {
        line: usize,
        first_line: usize,
    },
}

impl IssueKind {
    pub fn describe(&self) -> String {
        match self {
            IssueKind::OrphanLabel => "label file has no image".to_string(),
            IssueKind::MissingLabel => "image has no label file".to_string(),
            IssueKind::ClassOutOfRange {
                line,
                class_id,
                class_count,
            } => {
                format!("line {line}: class {class_id} >= nc {class_count}")
            }
            IssueKind::MalformedLine { line, message } => format!("line {line}: {message}"),
            IssueKind::DuplicateBox { line, first_line } => {
                format!("line {line}: duplicate of line {first_line}")
            }
        }
    }

    pub fn severity(&self) -> Severity {
        match self {
            IssueKind::MissingLabel | IssueKind::DuplicateBox { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    /// Sample stem (file name without extension), prefixed by the split name
    /// when validating through a descriptor.
    pub sample: String,
    #[serde(flatten)]
    pub kind: IssueKind,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub images: usize,
    pub label_files: usize,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn errors(&self) -> usize {
        self.issues.iter().filter(|i| i.severity == Severity::Error).count()
    }

    pub fn warnings(&self) -> usize {
        self.issues.len() - self.errors()
    }

    fn merge(&mut self, other: ValidationReport, prefix: &str) {
        self.images += other.images;
        self.label_files += other.label_files;
        self.issues.extend(other.issues.into_iter().map(|mut i| {
            i.sample = format!("{prefix}/{}", i.sample);
            i
        }));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,severity,message\n");
        for i in &self.issues {
            let sev = match i.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            let msg = i.kind.describe().replace('"', "\"\"");
            out.push_str(&format!("{},{sev},\"{msg}\"\n", i.sample));
        }
        out
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{} images, {} label files, {} errors, {} warnings\n",
            self.images,
            self.label_files,
            self.errors(),
            self.warnings()
        );
        for i in &self.issues {
            let sev = match i.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            let what = i.kind.describe();
            out.push_str(&format!("{sev}: {}: {what}\n", i.sample));
        }
        out
    }
}

/// Checks one split given image stems and `(stem, label text)` pairs.
pub fn validate_entries<S: AsRef<str>>(class_count: usize, image_stems: &[S], labels: &[(S, S)]) -> ValidationReport {
    let images: BTreeSet<&str> = image_stems.iter().map(AsRef::as_ref).collect();
    let label_map: BTreeMap<&str, &str> = labels.iter().map(|(s, t)| (s.as_ref(), t.as_ref())).collect();
    let mut issues = Vec::new();
    let mut push = |sample: &str, kind: IssueKind| {
        let severity = kind.severity();
        issues.push(Issue {
            sample: sample.to_string(),
            kind,
            severity,
        });
    };

    for stem in &images {
        if !label_map.contains_key(stem) {
            push(stem, IssueKind::MissingLabel);
        }
    }
    for (stem, text) in &label_map {
        if !images.contains(stem) {
            push(stem, IssueKind::OrphanLabel);
        }
        let mut seen: HashMap<(usize, [u64; 4]), usize> = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            match parse_label_line(line) {
                Ok(a) if a.class_id >= class_count => push(
                    stem,
                    IssueKind::ClassOutOfRange {
                        line: line_no,
                        class_id: a.class_id,
                        class_count,
                    },
                ),
                Ok(a) => {
                    let key = (a.class_id, a.bbox.fields().map(f64::to_bits));
                    if let Some(&first_line) = seen.get(&key) {
                        push(
                            stem,
                            IssueKind::DuplicateBox {
                                line: line_no,
                                first_line,
                            },
                        );
                    } else {
                        seen.insert(key, line_no);
                    }
                }
                Err(e) => push(
                    stem,
                    IssueKind::MalformedLine {
                        line: line_no,
                        message: e.to_string(),
                    },
                ),
            }
        }
    }
    ValidationReport {
        images: images.len(),
        label_files: label_map.len(),
        issues,
    }
}

/// An image directory and its matching label directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub images_dir: PathBuf,
    pub labels_dir: PathBuf,
}

impl DatasetLayout {
    /// YOLO convention: the label directory is the image directory with its
    /// last `images` component replaced by `labels`.
    pub fn from_images_dir(images_dir: impl Into<PathBuf>) -> Self {
        let images_dir = images_dir.into();
        let comps: Vec<Component> = images_dir.components().collect();
        let labels_dir = match comps.iter().rposition(|c| c.as_os_str() == "images") {
            Some(pos) => comps
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == pos {
                        Path::new("labels")
                    } else {
                        Path::new(c.as_os_str())
                    }
                })
                .collect(),
            None => images_dir.clone(),
        };
        DatasetLayout { images_dir, labels_dir }
    }

    /// Resolves the descriptor's `train` and `val` entries against `base`
    /// (the directory containing the descriptor) and its optional `path`.
    pub fn from_descriptor(descriptor: &DatasetDescriptor, base: &Path) -> [(String, Self); 2] {
        let root = match &descriptor.path {
            Some(p) => base.join(p),
            None => base.to_path_buf(),
        };
        [
            (
                "train".to_string(),
                Self::from_images_dir(root.join(&descriptor.train_dir)),
            ),
            (
                "val".to_string(),
                Self::from_images_dir(root.join(&descriptor.test_dir)),
            ),
        ]
    }

    /// Image stems and label texts found in this layout, sorted by stem.
    pub fn scan(&self) -> Result<(Vec<String>, Vec<(String, String)>), DatasetIoError> {
        let images = list_stems(&self.images_dir, |ext| {
            IMAGE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str())
        })?
        .into_iter()
        .map(|(stem, _)| stem)
        .collect();
        let mut labels = Vec::new();
        for (stem, path) in list_stems(&self.labels_dir, |ext| ext == "txt")? {
            let text = std::fs::read_to_string(&path).map_err(|source| DatasetIoError::Read { path, source })?;
            labels.push((stem, text));
        }
        Ok((images, labels))
    }
}

pub(crate) fn list_stems(dir: &Path, keep: impl Fn(&str) -> bool) -> Result<Vec<(String, PathBuf)>, DatasetIoError> {
    let read_err = |source| DatasetIoError::Read {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(read_err)? {
        let path = entry.map_err(read_err)?.path();
        if !path.is_file() {
            continue;
        }
        let (Some(stem), Some(ext)) = (path.file_stem(), path.extension()) else {
            continue;
        };
        if keep(&ext.to_string_lossy()) {
            out.push((stem.to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    Ok(out)
}

pub fn validate_layout(class_count: usize, layout: &DatasetLayout) -> Result<ValidationReport, DatasetIoError> {
    let (images, labels) = layout.scan()?;
    Ok(validate_entries(class_count, &images, &labels))
}

/// Validates both splits named by a descriptor.
pub fn validate_dataset(descriptor: &DatasetDescriptor, base: &Path) -> Result<ValidationReport, DatasetIoError> {
    let mut report = ValidationReport::default();
    for (name, layout) in DatasetLayout::from_descriptor(descriptor, base) {
        report.merge(validate_layout(descriptor.class_count, &layout)?, &name);
    }
    Ok(report)
}
