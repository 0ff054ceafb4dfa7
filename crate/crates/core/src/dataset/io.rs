//! Loading label and prediction directories from disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::stats::LabeledImage;
use super::validate::{list_stems, DatasetIoError};
use crate::labelfmt::{parse_label_file_with, parse_prediction_file, LineError, ParseOptions};
use crate::metrics::ImageEval;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] DatasetIoError),
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: LineError },
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Every `*.txt` label file in `dir`, parsed with `opts`, sorted by id.
pub fn load_label_dir(dir: &Path, opts: &ParseOptions) -> Result<Vec<LabeledImage>, LoadError> {
    list_stems(dir, |ext| ext == "txt")?
        .into_iter()
        .map(|(id, path)| {
            let parsed = parse_label_file_with(&read(&path)?, opts).map_err(|source| LoadError::Parse {
                path: path.clone(),
                source,
            })?;
            Ok(LabeledImage {
                id,
                annotations: parsed.annotations,
            })
        })
        .collect()
}

/// Pairs ground-truth label files with prediction files by stem. An image
/// present on only one side gets an empty list on the other.
pub fn load_image_evals(gt_dir: &Path, pred_dir: &Path) -> Result<Vec<ImageEval>, LoadError> {
    let mut images: BTreeMap<String, ImageEval> = BTreeMap::new();
    for gt in load_label_dir(gt_dir, &ParseOptions::strict())? {
        images.insert(
            gt.id.clone(),
            ImageEval {
                id: gt.id,
                detections: Vec::new(),
                ground_truths: gt.annotations,
            },
        );
    }
    for (id, path) in list_stems(pred_dir, |ext| ext == "txt")? {
        let dets = parse_prediction_file(&read(&path)?).map_err(|source| LoadError::Parse {
            path: path.clone(),
            source,
        })?;
        images
            .entry(id.clone())
            .or_insert_with(|| ImageEval {
                id,
                ..ImageEval::default()
            })
            .detections = dets;
    }
    Ok(images.into_values().collect())
}

/// Ids listed one per line; blank lines and `#` comments are skipped.
pub fn read_id_list(path: &Path) -> Result<Vec<String>, LoadError> {
    Ok(read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_by_stem() {
        let dir = tempfile::tempdir().unwrap();
        let (gt, pred) = (dir.path().join("gt"), dir.path().join("pred"));
        std::fs::create_dir_all(&gt).unwrap();
        std::fs::create_dir_all(&pred).unwrap();
        std::fs::write(gt.join("a.txt"), "0 0.5 0.5 0.2 0.2\n").unwrap();
        std::fs::write(gt.join("b.txt"), "").unwrap();
        std::fs::write(pred.join("a.txt"), "0 0.5 0.5 0.2 0.2 0.9\n").unwrap();
        std::fs::write(pred.join("c.txt"), "1 0.5 0.5 0.2 0.2 0.4\n").unwrap();
        let images = load_image_evals(&gt, &pred).unwrap();
        let ids: Vec<&str> = images.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(images[0].detections.len(), 1);
        assert!(images[2].ground_truths.is_empty());

        std::fs::write(gt.join("d.txt"), "0 1.5 0.5 0.2 0.2\n").unwrap();
        assert!(matches!(load_image_evals(&gt, &pred), Err(LoadError::Parse { .. })));
    }

    #[test]
    fn id_list_skips_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ids.txt");
        std::fs::write(&p, "# header\na\n\n b \n").unwrap();
        assert_eq!(read_id_list(&p).unwrap(), ["a", "b"]);
    }
}
