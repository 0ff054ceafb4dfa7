//! Tooling for YOLO-style gesture detection datasets: label formats, dataset
//! splitting and statistics, box geometry, detection metrics, a reference
//! grid loss with analytic gradients, model-config scaling and run reports.

pub mod dataset;
pub mod fsutil;
pub mod geometry;
pub mod labelfmt;
pub mod loss;
pub mod metrics;
pub mod modelcfg;
pub mod report;
pub mod rng;
pub mod svg;

pub use labelfmt::{Annotation, Detection, NormBox};
