//! YOLO-style S x S x B output grids carrying polygon vertices.
//!
//! Each anchor slot has `2N + 1 + C` channels: N vertex offsets `(x, y)`,
//! one confidence and C class scores. Vertex offsets are measured from the
//! top-left corner of the slot's cell in grid units and are not squashed, so
//! they may fall outside `[0, 1]` when a polygon spans several cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, raster_iou, Point2, Polygon, DEFAULT_RESOLUTION};

/// A ground-truth instance: class plus polygon in normalized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub class_id: usize,
    pub polygon: Polygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    pub confidence: f64,
    pub polygon: Polygon,
}

/// Channel arrangement inside one anchor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub num_vertices: usize,
    pub num_classes: usize,
}

impl ChannelLayout {
    pub fn channels(&self) -> usize {
        2 * self.num_vertices + 1 + self.num_classes
    }

    pub fn vertex_range(&self) -> std::ops::Range<usize> {
        0..2 * self.num_vertices
    }

    pub fn confidence_channel(&self) -> usize {
        2 * self.num_vertices
    }

    pub fn class_range(&self) -> std::ops::Range<usize> {
        2 * self.num_vertices + 1..self.channels()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub grid_size: usize,
    /// Anchor `(w, h)` in normalized image units.
    pub anchors: Vec<(f64, f64)>,
    pub num_vertices: usize,
    pub num_classes: usize,
}

impl GridSpec {
    pub fn new(grid_size: usize, anchors: Vec<(f64, f64)>, num_vertices: usize, num_classes: usize) -> Result<Self> {
        let spec = Self { grid_size, anchors, num_vertices, num_classes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 1 {
            return Err(Error::InvalidConfig("grid size must be >= 1".into()));
        }
        if self.anchors.is_empty() {
            return Err(Error::InvalidConfig("at least one anchor is required".into()));
        }
        if self.anchors.iter().any(|&(w, h)| !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite())) {
            return Err(Error::InvalidConfig("anchor sizes must be positive".into()));
        }
        if self.num_vertices < 3 {
            return Err(Error::InvalidConfig("polygons need at least 3 vertices".into()));
        }
        if self.num_classes < 1 {
            return Err(Error::InvalidConfig("at least one class is required".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> ChannelLayout {
        ChannelLayout { num_vertices: self.num_vertices, num_classes: self.num_classes }
    }

    /// Channels per cell: `B * (2N + 1 + C)`.
    pub fn channels_per_cell(&self) -> usize {
        self.anchors.len() * self.layout().channels()
    }

    pub fn slot_count(&self) -> usize {
        self.grid_size * self.grid_size * self.anchors.len()
    }

    /// Slot index of `(row, col, anchor)`.
    pub fn slot_index(&self, row: usize, col: usize, anchor: usize) -> usize {
        (row * self.grid_size + col) * self.anchors.len() + anchor
    }

    /// `(row, col, anchor)` of a slot index.
    pub fn slot_position(&self, slot: usize) -> (usize, usize, usize) {
        let b = self.anchors.len();
        let cell = slot / b;
        (cell / self.grid_size, cell % self.grid_size, slot % b)
    }
}

/// Dense grid values, stored row-major as `[row][col][anchor][channel]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTensor {
    grid_size: usize,
    num_anchors: usize,
    layout: ChannelLayout,
    values: Vec<f64>,
}

impl GridTensor {
    pub fn zeros(spec: &GridSpec) -> Self {
        Self {
            grid_size: spec.grid_size,
            num_anchors: spec.anchors.len(),
            layout: spec.layout(),
            values: vec![0.0; spec.slot_count() * spec.layout().channels()],
        }
    }

    pub fn from_values(spec: &GridSpec, values: Vec<f64>) -> Result<Self> {
        let expected = spec.slot_count() * spec.layout().channels();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!("{} values, spec needs {expected}", values.len())));
        }
        Ok(Self { values, ..Self::zeros(spec) })
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn slot_count(&self) -> usize {
        self.grid_size * self.grid_size * self.num_anchors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn matches(&self, spec: &GridSpec) -> bool {
        self.grid_size == spec.grid_size && self.num_anchors == spec.anchors.len() && self.layout == spec.layout()
    }

    pub fn same_shape(&self, other: &GridTensor) -> bool {
        self.grid_size == other.grid_size && self.num_anchors == other.num_anchors && self.layout == other.layout
    }

    pub fn slot(&self, slot: usize) -> &[f64] {
        let c = self.layout.channels();
        &self.values[slot * c..(slot + 1) * c]
    }

    pub fn slot_mut(&mut self, slot: usize) -> &mut [f64] {
        let c = self.layout.channels();
        &mut self.values[slot * c..(slot + 1) * c]
    }

    /// Applies the logistic function to the confidence and class channels,
    /// turning raw head outputs into the probabilities the losses expect.
    pub fn activated(&self) -> GridTensor {
        let mut out = self.clone();
        let layout = self.layout;
        for slot in 0..self.slot_count() {
            let s = out.slot_mut(slot);
            s[layout.confidence_channel()] = sigmoid(s[layout.confidence_channel()]);
            for v in &mut s[layout.class_range()] {
                *v = sigmoid(*v);
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTarget {
    pub values: GridTensor,
    pub responsibility: Vec<bool>,
    /// Slot assigned to each input annotation, `None` if it was dropped.
    pub assignments: Vec<Option<usize>>,
    pub dropped: usize,
}

fn box_iou_at_shared_center(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = a.0.min(b.0) * a.1.min(b.1);
    let union = a.0 * a.1 + b.0 * b.1 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Anchors ordered by decreasing box IoU with `size`, ties by index.
fn ranked_anchors(anchors: &[(f64, f64)], size: (f64, f64)) -> Vec<usize> {
    let mut order: Vec<usize> = (0..anchors.len()).collect();
    order.sort_by(|&i, &j| {
        box_iou_at_shared_center(anchors[j], size).total_cmp(&box_iou_at_shared_center(anchors[i], size))
    });
    order
}

/// Builds training targets: the cell holding the polygon center is
/// responsible, through the free anchor whose box best matches the polygon's
/// bounding box. An instance that finds every anchor of its cell taken is
/// dropped and counted.
pub fn encode_targets(annotations: &[InstanceAnnotation], spec: &GridSpec) -> Result<GridTarget> {
    spec.validate()?;
    let layout = spec.layout();
    let s = spec.grid_size as f64;
    let mut values = GridTensor::zeros(spec);
    let mut responsibility = vec![false; spec.slot_count()];
    let mut assignments = Vec::with_capacity(annotations.len());
    let mut dropped = 0;
    for ann in annotations {
        if ann.polygon.len() != spec.num_vertices {
            return Err(Error::ShapeMismatch(format!(
                "annotation has {} vertices, grid expects {}",
                ann.polygon.len(),
                spec.num_vertices
            )));
        }
        if ann.class_id >= spec.num_classes {
            return Err(Error::ShapeMismatch(format!(
                "class {} outside {} classes",
                ann.class_id, spec.num_classes
            )));
        }
        let c = centroid(&ann.polygon);
        let col = ((c.x * s).floor().max(0.0) as usize).min(spec.grid_size - 1);
        let row = ((c.y * s).floor().max(0.0) as usize).min(spec.grid_size - 1);
        let (lo, hi) = ann.polygon.bounds();
        let free = ranked_anchors(&spec.anchors, (hi.x - lo.x, hi.y - lo.y))
            .into_iter()
            .map(|a| spec.slot_index(row, col, a))
            .find(|&slot| !responsibility[slot]);
        let Some(slot) = free else {
            dropped += 1;
            assignments.push(None);
            continue;
        };
        responsibility[slot] = true;
        assignments.push(Some(slot));
        let v = values.slot_mut(slot);
        for (k, p) in ann.polygon.vertices().iter().enumerate() {
            v[2 * k] = p.x * s - col as f64;
            v[2 * k + 1] = p.y * s - row as f64;
        }
        v[layout.confidence_channel()] = 1.0;
        v[layout.class_range().start + ann.class_id] = 1.0;
    }
    Ok(GridTarget { values, responsibility, assignments, dropped })
}

/// Reads detections from raw head outputs: slots whose logistic confidence
/// reaches `conf_threshold` emit their polygon and arg-max class.
pub fn decode_predictions(values: &GridTensor, spec: &GridSpec, conf_threshold: f64) -> Result<Vec<Detection>> {
    spec.validate()?;
    if !values.matches(spec) {
        return Err(Error::ShapeMismatch("grid values do not match the grid spec".into()));
    }
    let layout = spec.layout();
    let s = spec.grid_size as f64;
    let mut out = Vec::new();
    for slot in 0..spec.slot_count() {
        let v = values.slot(slot);
        let confidence = sigmoid(v[layout.confidence_channel()]);
        if confidence < conf_threshold {
            continue;
        }
        let (row, col, _) = spec.slot_position(slot);
        let vertices = (0..spec.num_vertices)
            .map(|k| Point2::new((v[2 * k] + col as f64) / s, (v[2 * k + 1] + row as f64) / s))
            .collect();
        let scores = &v[layout.class_range()];
        let class_id = scores
            .iter()
            .enumerate()
            .fold(0, |best, (i, &x)| if x > scores[best] { i } else { best });
        out.push(Detection { class_id, confidence, polygon: Polygon::new(vertices)? });
    }
    Ok(out)
}

/// Greedy polygon NMS: highest confidence first, a detection survives if its
/// rasterized IoU with every kept detection of the same class is below
/// `iou_threshold`. Equal confidences keep input order.
pub fn polygon_nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    polygon_nms_with_resolution(detections, iou_threshold, DEFAULT_RESOLUTION)
}

pub fn polygon_nms_with_resolution(detections: &[Detection], iou_threshold: f64, resolution: usize) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&i, &j| detections[j].confidence.total_cmp(&detections[i].confidence));
    let mut kept: Vec<&Detection> = Vec::new();
    for i in order {
        let d = &detections[i];
        let suppressed = kept.iter().any(|k| {
            k.class_id == d.class_id
                && raster_iou(&k.polygon, &d.polygon, resolution).unwrap_or(0.0) >= iou_threshold
        });
        if !suppressed {
            kept.push(d);
        }
    }
    kept.into_iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, y: f64, side: f64) -> Polygon {
        Polygon::from_xy(&[(x, y), (x + side, y), (x + side, y + side), (x, y + side)]).unwrap()
    }

    fn det(x: f64, conf: f64) -> Detection {
        Detection { class_id: 0, confidence: conf, polygon: square(x, 0.0, 1.0) }
    }

    #[test]
    fn channel_count_law() {
        let spec = GridSpec::new(7, vec![(0.1, 0.1), (0.3, 0.2), (0.5, 0.5)], 16, 4).unwrap();
        assert_eq!(spec.layout().channels(), 2 * 16 + 1 + 4);
        assert_eq!(spec.channels_per_cell(), 3 * 37);
        assert_eq!(GridTensor::zeros(&spec).values().len(), 49 * 3 * 37);
    }

    #[test]
    fn spec_validation() {
        assert!(GridSpec::new(0, vec![(0.1, 0.1)], 4, 1).is_err());
        assert!(GridSpec::new(1, vec![], 4, 1).is_err());
        assert!(GridSpec::new(1, vec![(0.1, 0.1)], 2, 1).is_err());
        assert!(GridSpec::new(1, vec![(0.1, 0.1)], 4, 0).is_err());
        assert!(GridSpec::new(1, vec![(0.0, 0.1)], 4, 1).is_err());
    }

    #[test]
    fn single_centered_square() {
        let spec = GridSpec::new(1, vec![(0.5, 0.5)], 4, 1).unwrap();
        let poly = square(0.25, 0.25, 0.5);
        let t = encode_targets(&[InstanceAnnotation { class_id: 0, polygon: poly.clone() }], &spec).unwrap();
        assert_eq!(t.responsibility, vec![true]);
        let v = t.values.slot(0);
        assert_eq!(&v[..8], &poly.to_flat()[..]);
        assert_eq!(v[8], 1.0);
        assert_eq!(v[9], 1.0);
    }

    #[test]
    fn empty_annotations_give_zero_target() {
        let spec = GridSpec::new(3, vec![(0.2, 0.2)], 4, 2).unwrap();
        let t = encode_targets(&[], &spec).unwrap();
        assert!(t.values.values().iter().all(|&v| v == 0.0));
        assert!(t.responsibility.iter().all(|&r| !r));
    }

    #[test]
    fn instances_in_different_cells() {
        let spec = GridSpec::new(2, vec![(0.2, 0.2)], 4, 1).unwrap();
        let anns = vec![
            InstanceAnnotation { class_id: 0, polygon: square(0.1, 0.1, 0.2) },
            InstanceAnnotation { class_id: 0, polygon: square(0.6, 0.6, 0.2) },
        ];
        let t = encode_targets(&anns, &spec).unwrap();
        assert_eq!(t.assignments, vec![Some(spec.slot_index(0, 0, 0)), Some(spec.slot_index(1, 1, 0))]);
        assert_eq!(t.dropped, 0);
    }

    #[test]
    fn collisions_fall_back_then_drop() {
        let spec = GridSpec::new(1, vec![(0.2, 0.2), (0.6, 0.6)], 4, 1).unwrap();
        let small = InstanceAnnotation { class_id: 0, polygon: square(0.4, 0.4, 0.2) };
        let t = encode_targets(&[small.clone(), small.clone(), small], &spec).unwrap();
        assert_eq!(t.assignments, vec![Some(0), Some(1), None]);
        assert_eq!(t.dropped, 1);
    }

    #[test]
    fn hand_built_grid_decodes_to_one_detection() {
        let spec = GridSpec::new(2, vec![(0.3, 0.3)], 3, 2).unwrap();
        let mut g = GridTensor::zeros(&spec);
        for slot in 0..spec.slot_count() {
            g.slot_mut(slot)[6] = -10.0;
        }
        // cell (row 1, col 0): triangle offsets in grid units
        let slot = spec.slot_index(1, 0, 0);
        g.slot_mut(slot).copy_from_slice(&[0.5, 0.5, 1.5, 0.5, 0.5, 1.0, 2.0, -1.0, 3.0]);
        let dets = decode_predictions(&g, &spec, 0.5).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].class_id, 1);
        assert!((dets[0].confidence - sigmoid(2.0)).abs() < 1e-15);
        let expected = Polygon::from_xy(&[(0.25, 0.75), (0.75, 0.75), (0.25, 1.0)]).unwrap();
        assert_eq!(dets[0].polygon, expected);
    }

    #[test]
    fn low_confidence_gives_nothing() {
        let spec = GridSpec::new(2, vec![(0.3, 0.3)], 3, 1).unwrap();
        let mut g = GridTensor::zeros(&spec);
        for slot in 0..spec.slot_count() {
            g.slot_mut(slot)[6] = -3.0;
        }
        assert!(decode_predictions(&g, &spec, 0.5).unwrap().is_empty());
        let other = GridSpec::new(3, vec![(0.3, 0.3)], 3, 1).unwrap();
        assert!(decode_predictions(&g, &other, 0.5).is_err());
    }

    #[test]
    fn nms_keeps_best_of_duplicates() {
        let kept = polygon_nms(&[det(0.0, 0.8), det(0.0, 0.9)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);
    }

    #[test]
    fn nms_keeps_disjoint() {
        let kept = polygon_nms(&[det(0.0, 0.8), det(5.0, 0.9), det(10.0, 0.1)], 0.5);
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn nms_ignores_other_classes() {
        let mut b = det(0.0, 0.8);
        b.class_id = 1;
        assert_eq!(polygon_nms(&[det(0.0, 0.9), b], 0.5).len(), 2);
    }

    #[test]
    fn nms_chain_matches_brute_force_greedy() {
        // unit squares shifted by 0.25: neighbors have IoU 0.75 / 1.25 = 0.6
        let dets: Vec<Detection> = (0..4).map(|k| det(0.25 * k as f64, 0.9 - 0.1 * k as f64)).collect();
        // oracle: analytic IoU of equal axis-aligned squares offset by dx
        let iou = |a: &Detection, b: &Detection| {
            let dx = (a.polygon.vertices()[0].x - b.polygon.vertices()[0].x).abs();
            (1.0 - dx).max(0.0) / (1.0 + dx.min(1.0))
        };
        let mut expected: Vec<f64> = Vec::new();
        for d in &dets {
            if expected.iter().all(|&x| iou(&det(x, 0.0), d) < 0.5) {
                expected.push(d.polygon.vertices()[0].x);
            }
        }
        assert_eq!(expected, vec![0.0, 0.5]);
        let got: Vec<f64> = polygon_nms(&dets, 0.5).iter().map(|d| d.polygon.vertices()[0].x).collect();
        assert_eq!(got, expected);
    }
}
