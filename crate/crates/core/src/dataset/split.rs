use std::collections::{BTreeMap, HashSet};
use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::fsutil::write_atomic;
use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("no sample ids to split")]
    Empty,
    #[error("duplicate sample id {0:?}")]
    Duplicate(String),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.train_ids.len() + self.test_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `train.txt` and `test.txt` (one id per line) into `dir`.
    pub fn write_manifests(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("train.txt"), manifest_text(&self.train_ids).as_bytes())?;
        write_atomic(&dir.join("test.txt"), manifest_text(&self.test_ids).as_bytes())
    }
}

pub fn manifest_text(ids: &[String]) -> String {
    let mut out = String::new();
    for id in ids {
        out.push_str(id);
        out.push('\n');
    }
    out
}

/// `floor(fraction × n)`, tolerant of products like `0.29 × 100 = 28.999…`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 + 1e-9).floor() as usize).min(n)
}

fn check_inputs<S: AsRef<str>>(ids: &[S], fraction: f64) -> Result<(), SplitError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SplitError::InvalidFraction(fraction));
    }
    if ids.is_empty() {
        return Err(SplitError::Empty);
    }
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_ref()) {
            return Err(SplitError::Duplicate(id.as_ref().to_string()));
        }
    }
    Ok(())
}

/// Shuffles `ids` with the seeded generator and cuts at `floor(fraction × N)`.
pub fn split<S: AsRef<str>>(ids: &[S], train_fraction: f64, seed: u64) -> Result<SplitPlan, SplitError> {
    check_inputs(ids, train_fraction)?;
    let mut shuffled: Vec<String> = ids.iter().map(|s| s.as_ref().to_string()).collect();
    SeededRng::new(seed).shuffle(&mut shuffled);
    let test_ids = shuffled.split_off(train_count(ids.len(), train_fraction));
    Ok(SplitPlan {
        seed,
        train_fraction,
        train_ids: shuffled,
        test_ids,
    })
}

/// Per-class split: each class is shuffled and cut on its own, so the train
/// total is the sum of per-class floors and may fall below `floor(fraction × N)`.
/// Classes are processed in ascending order with one shared generator.
pub fn split_stratified<S: AsRef<str>>(
    items: &[(S, usize)],
    train_fraction: f64,
    seed: u64,
) -> Result<SplitPlan, SplitError> {
    let ids: Vec<&str> = items.iter().map(|(s, _)| s.as_ref()).collect();
    check_inputs(&ids, train_fraction)?;
    let mut by_class: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (id, class) in items {
        by_class.entry(*class).or_default().push(id.as_ref().to_string());
    }
    let mut rng = SeededRng::new(seed);
    let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
    for (_, mut group) in by_class {
        rng.shuffle(&mut group);
        let rest = group.split_off(train_count(group.len(), train_fraction));
        train_ids.extend(group);
        test_ids.extend(rest);
    }
    Ok(SplitPlan {
        seed,
        train_fraction,
        train_ids,
        test_ids,
    })
}
