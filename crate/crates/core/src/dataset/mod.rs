//! Splitting, validation, statistics and anchor fitting over a labeled dataset.

pub mod anchors;
pub mod io;
pub mod split;
pub mod stats;
pub mod validate;

pub use anchors::{kmeans_anchors, mean_best_iou, AnchorFit, AnchorGroup, AnchorSet, KMeansConfig};
pub use io::{load_image_evals, load_label_dir, read_id_list, LoadError};
pub use split::{split, split_stratified, SplitPlan};
pub use stats::{dataset_stats, DatasetStats, LabeledImage};
pub use validate::{validate_dataset, validate_entries, validate_layout, DatasetLayout, ValidationReport};
