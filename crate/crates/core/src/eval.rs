//! Average precision of polygon detections at IoU thresholds.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{raster_iou, DEFAULT_RESOLUTION};
use crate::grid::{Detection, InstanceAnnotation};

/// Outcome of matching one image's detections against its ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// Ground-truth index matched by each detection, in input order.
    pub detection_matches: Vec<Option<usize>>,
    pub gt_matched: Vec<bool>,
}

impl Matching {
    pub fn true_positives(&self) -> usize {
        self.detection_matches.iter().filter(|m| m.is_some()).count()
    }

    pub fn false_positives(&self) -> usize {
        self.detection_matches.len() - self.true_positives()
    }

    pub fn false_negatives(&self) -> usize {
        self.gt_matched.iter().filter(|&&m| !m).count()
    }
}

fn pair_ious(dets: &[Detection], gts: &[InstanceAnnotation], resolution: usize) -> Vec<Vec<f64>> {
    dets.iter()
        .map(|d| {
            gts.iter()
                .map(|g| {
                    if d.class_id == g.class_id {
                        raster_iou(&d.polygon, &g.polygon, resolution).unwrap_or(0.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Detection indices by descending confidence, ties by index.
fn ranked(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].confidence.total_cmp(&dets[i].confidence));
    order
}

fn match_with_ious(dets: &[Detection], gts: &[InstanceAnnotation], ious: &[Vec<f64>], threshold: f64) -> Matching {
    let mut m = Matching { detection_matches: vec![None; dets.len()], gt_matched: vec![false; gts.len()] };
    for i in ranked(dets) {
        let best = (0..gts.len())
            .filter(|&g| !m.gt_matched[g] && gts[g].class_id == dets[i].class_id && ious[i][g] >= threshold)
            .fold(None, |best: Option<usize>, g| match best {
                Some(b) if ious[i][b] >= ious[i][g] => Some(b),
                _ => Some(g),
            });
        if let Some(g) = best {
            m.gt_matched[g] = true;
            m.detection_matches[i] = Some(g);
        }
    }
    m
}

/// Greedy matching: detections in descending confidence each take the
/// unmatched same-class ground truth of highest IoU at or above `threshold`.
pub fn match_detections(
    dets: &[Detection],
    gts: &[InstanceAnnotation],
    threshold: f64,
    resolution: usize,
) -> Matching {
    match_with_ious(dets, gts, &pair_ious(dets, gts, resolution), threshold)
}

/// A ranked detection for precision-recall accumulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredMatch {
    pub confidence: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Raw precision-recall points in rank order. Equal confidences keep the
/// order of `scored`.
pub fn pr_curve(scored: &[ScoredMatch], gt_count: usize) -> Vec<PrPoint> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&i, &j| scored[j].confidence.total_cmp(&scored[i].confidence));
    let mut tp = 0usize;
    order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            tp += scored[i].true_positive as usize;
            PrPoint { recall: tp as f64 / gt_count.max(1) as f64, precision: tp as f64 / (rank + 1) as f64 }
        })
        .collect()
}

/// All-point interpolated AP: area under the precision envelope
/// `p(r) = max precision at recall >= r`. `None` without ground truth.
pub fn average_precision(scored: &[ScoredMatch], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let curve = pr_curve(scored, gt_count);
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, &env) in curve.iter().zip(&envelope) {
        ap += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub resolution: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { thresholds: vec![0.5, 0.75], resolution: DEFAULT_RESOLUTION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholdReport {
    pub class_id: usize,
    pub threshold: f64,
    /// Absent when the class has no ground truth.
    pub ap: Option<f64>,
    pub gt_count: usize,
    pub detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub pr_curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub threshold: f64,
    /// Mean over classes with ground truth.
    pub mean_ap: Option<f64>,
    pub matched: usize,
    pub unmatched_detections: usize,
    pub unmatched_ground_truth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: usize,
    pub summaries: Vec<ThresholdSummary>,
    pub classes: Vec<ClassThresholdReport>,
}

impl EvalReport {
    pub fn mean_ap(&self, threshold: f64) -> Option<f64> {
        self.summaries.iter().find(|s| s.threshold == threshold).and_then(|s| s.mean_ap)
    }

    pub fn class_ap(&self, class_id: usize, threshold: f64) -> Option<f64> {
        self.classes
            .iter()
            .find(|c| c.class_id == class_id && c.threshold == threshold)
            .and_then(|c| c.ap)
    }

    /// One row per class and threshold, followed by one `mean` row per threshold.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "threshold", "ap", "gt_count", "detections", "tp", "fp", "fn"])?;
        for c in &self.classes {
            w.write_record([
                c.class_id.to_string(),
                c.threshold.to_string(),
                fmt(c.ap),
                c.gt_count.to_string(),
                c.detections.to_string(),
                c.true_positives.to_string(),
                c.false_positives.to_string(),
                c.false_negatives.to_string(),
            ])?;
        }
        for s in &self.summaries {
            w.write_record([
                "mean".to_string(),
                s.threshold.to_string(),
                fmt(s.mean_ap),
                (s.matched + s.unmatched_ground_truth).to_string(),
                (s.matched + s.unmatched_detections).to_string(),
                s.matched.to_string(),
                s.unmatched_detections.to_string(),
                s.unmatched_ground_truth.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates detections per image id against ground truth per image id.
///
/// Every detection image must exist in the ground truth; ground-truth images
/// without an entry in `dets` have no detections.
pub fn evaluate(
    dets: &BTreeMap<String, Vec<Detection>>,
    gts: &BTreeMap<String, Vec<InstanceAnnotation>>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if let Some(id) = dets.keys().find(|id| !gts.contains_key(*id)) {
        return Err(Error::DatasetMismatch(format!("detections for unknown image {id:?}")));
    }
    if cfg.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidConfig("IoU thresholds must lie in [0, 1]".into()));
    }
    let empty = Vec::new();
    let images: Vec<(&Vec<Detection>, &Vec<InstanceAnnotation>)> =
        gts.iter().map(|(id, g)| (dets.get(id).unwrap_or(&empty), g)).collect();
    // per image, one matching per threshold
    let matchings: Vec<Vec<Matching>> = images
        .par_iter()
        .map(|(d, g)| {
            let ious = pair_ious(d, g, cfg.resolution);
            cfg.thresholds.iter().map(|&t| match_with_ious(d, g, &ious, t)).collect()
        })
        .collect();

    let classes: BTreeSet<usize> = images
        .iter()
        .flat_map(|(d, g)| d.iter().map(|x| x.class_id).chain(g.iter().map(|x| x.class_id)))
        .collect();

    let mut report = EvalReport { images: images.len(), summaries: Vec::new(), classes: Vec::new() };
    for (t_idx, &threshold) in cfg.thresholds.iter().enumerate() {
        let mut class_aps = Vec::new();
        let mut summary = ThresholdSummary {
            threshold,
            mean_ap: None,
            matched: 0,
            unmatched_detections: 0,
            unmatched_ground_truth: 0,
        };
        for &class_id in &classes {
            let mut scored = Vec::new();
            let mut gt_count = 0;
            let mut false_negatives = 0;
            for ((d, g), per_t) in images.iter().zip(&matchings) {
                let m = &per_t[t_idx];
                for (i, det) in d.iter().enumerate().filter(|(_, x)| x.class_id == class_id) {
                    scored.push(ScoredMatch {
                        confidence: det.confidence,
                        true_positive: m.detection_matches[i].is_some(),
                    });
                }
                for (k, _) in g.iter().enumerate().filter(|(_, x)| x.class_id == class_id) {
                    gt_count += 1;
                    false_negatives += (!m.gt_matched[k]) as usize;
                }
            }
            let tp = scored.iter().filter(|s| s.true_positive).count();
            let ap = average_precision(&scored, gt_count);
            if let Some(ap) = ap {
                class_aps.push(ap);
            }
            summary.matched += tp;
            summary.unmatched_detections += scored.len() - tp;
            summary.unmatched_ground_truth += false_negatives;
            report.classes.push(ClassThresholdReport {
                class_id,
                threshold,
                ap,
                gt_count,
                detections: scored.len(),
                true_positives: tp,
                false_positives: scored.len() - tp,
                false_negatives,
                pr_curve: pr_curve(&scored, gt_count),
            });
        }
        summary.mean_ap = (!class_aps.is_empty()).then(|| class_aps.iter().sum::<f64>() / class_aps.len() as f64);
        report.summaries.push(summary);
    }
    Ok(report)
}
