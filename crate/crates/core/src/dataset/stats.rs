use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::labelfmt::{Annotation, ClassTable};

/// One image's id and its annotations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledImage {
    pub id: String,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: impl Iterator<Item = f64>) -> Summary {
        let mut s = Summary {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            ..Summary::default()
        };
        let mut total = 0.0;
        for v in values {
            s.count += 1;
            total += v;
            s.min = s.min.min(v);
            s.max = s.max.max(v);
        }
        if s.count == 0 {
            return Summary::default();
        }
        s.mean = total / s.count as f64;
        s
    }
}

pub const AREA_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub images: usize,
    pub boxes: usize,
    /// Box count per class id.
    pub class_boxes: Vec<usize>,
    /// Number of images containing at least one box of the class.
    pub class_images: Vec<usize>,
    /// boxes-in-image → number of images.
    pub boxes_per_image: BTreeMap<usize, usize>,
    pub width: Summary,
    pub height: Summary,
    pub area: Summary,
    /// Normalized box areas in ten equal bins over `[0, 1]`.
    pub area_histogram: [usize; AREA_BINS],
}

/// Class ids at or above `class_count` are counted in `boxes` but not per class.
pub fn dataset_stats(images: &[LabeledImage], class_count: usize) -> DatasetStats {
    let mut stats = DatasetStats {
        images: images.len(),
        boxes: 0,
        class_boxes: vec![0; class_count],
        class_images: vec![0; class_count],
        boxes_per_image: BTreeMap::new(),
        width: Summary::default(),
        height: Summary::default(),
        area: Summary::default(),
        area_histogram: [0; AREA_BINS],
    };
    for img in images {
        stats.boxes += img.annotations.len();
        *stats.boxes_per_image.entry(img.annotations.len()).or_default() += 1;
        let mut present = vec![false; class_count];
        for a in &img.annotations {
            if let Some(c) = stats.class_boxes.get_mut(a.class_id) {
                *c += 1;
                present[a.class_id] = true;
            }
            let bin = ((a.bbox.area() * AREA_BINS as f64) as usize).min(AREA_BINS - 1);
            stats.area_histogram[bin] += 1;
        }
        for (count, p) in stats.class_images.iter_mut().zip(present) {
            *count += p as usize;
        }
    }
    let all = || images.iter().flat_map(|i| i.annotations.iter());
    stats.width = Summary::of(all().map(|a| a.bbox.w));
    stats.height = Summary::of(all().map(|a| a.bbox.h));
    stats.area = Summary::of(all().map(|a| a.bbox.area()));
    stats
}

impl DatasetStats {
    pub fn to_csv(&self, classes: Option<&ClassTable>) -> String {
        let mut out = String::from("class,name,boxes,images\n");
        for (i, (b, n)) in self.class_boxes.iter().zip(&self.class_images).enumerate() {
            let name = classes.and_then(|t| t.name(i)).unwrap_or("");
            let _ = writeln!(out, "{i},{name},{b},{n}");
        }
        out
    }

    pub fn render_table(&self, classes: Option<&ClassTable>) -> String {
        let mut out = format!("images: {}\nboxes:  {}\n\n", self.images, self.boxes);
        let _ = writeln!(out, "{:>5}  {:<12} {:>6} {:>6}", "class", "name", "boxes", "images");
        for (i, (b, n)) in self.class_boxes.iter().zip(&self.class_images).enumerate() {
            let name = classes.and_then(|t| t.name(i)).unwrap_or("-");
            let _ = writeln!(out, "{i:>5}  {name:<12} {b:>6} {n:>6}");
        }
        out.push_str("\nboxes per image:\n");
        for (k, v) in &self.boxes_per_image {
            let _ = writeln!(out, "{k:>5}  {v}");
        }
        out.push_str("\nbox size (normalized):\n");
        for (label, s) in [("width", &self.width), ("height", &self.height), ("area", &self.area)] {
            let _ = writeln!(
                out,
                "{label:>7}  min {:.4}  mean {:.4}  max {:.4}",
                s.min, s.mean, s.max
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelfmt::NormBox;

    fn img(id: &str, classes: &[usize]) -> LabeledImage {
        LabeledImage {
            id: id.into(),
            annotations: classes
                .iter()
                .map(|&c| Annotation::new(c, NormBox::new(0.5, 0.5, 0.2, 0.5).unwrap()))
                .collect(),
        }
    }

    #[test]
    fn uniform_classes() {
        let images: Vec<_> = (0..288).map(|i| img(&i.to_string(), &[i % 12])).collect();
        let s = dataset_stats(&images, 12);
        assert_eq!(s.class_boxes, vec![24; 12]);
        assert_eq!(s.class_images, vec![24; 12]);
        assert_eq!(s.boxes_per_image, BTreeMap::from([(1, 288)]));
        assert_eq!(s.area_histogram[1], 288);
    }

    #[test]
    fn empty_dataset() {
        let s = dataset_stats(&[], 12);
        assert_eq!(s.boxes, 0);
        assert_eq!(s.class_boxes, vec![0; 12]);
        assert!(s.boxes_per_image.is_empty());
        assert_eq!(s.area, Summary::default());
    }

    #[test]
    fn histogram_of_boxes_per_image() {
        let s = dataset_stats(&[img("a", &[0, 3])], 12);
        assert_eq!(s.boxes_per_image, BTreeMap::from([(2, 1)]));
        assert_eq!(s.class_images[3], 1);
        let csv = s.to_csv(None);
        assert!(csv.starts_with("class,name,boxes,images\n0,,1,1\n"));
        assert!((s.width.mean - 0.2).abs() < 1e-12);
    }
}
