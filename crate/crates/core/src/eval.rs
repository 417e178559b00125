//! Detection metrics: IoU, greedy matching, precision/recall, all-point
//! interpolated AP and mAP.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::model::{BBox, Detection, GroundTruth};
use crate::par::Parallelism;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("IoU threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("no ground truth for class {0:?}")]
    NoGroundTruth(Option<u32>),
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(0.0);
    let h = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

fn check_threshold(iou_threshold: f64) -> Result<(), EvalError> {
    if iou_threshold > 0.0 && iou_threshold <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidThreshold(iou_threshold))
    }
}

/// Indices of `items` sorted by descending confidence; ties keep input order.
pub fn confidence_order<T>(items: &[T], confidence: impl Fn(&T) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| confidence(&items[b]).total_cmp(&confidence(&items[a])));
    order
}

/// Outcome for one detection, in confidence-descending order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchFlag {
    /// Index into the caller's detection slice.
    pub detection: usize,
    pub confidence: f64,
    pub true_positive: bool,
    /// Matched ground-truth index, if any.
    pub ground_truth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub class_id: u32,
    pub flags: Vec<MatchFlag>,
    pub num_ground_truth: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.flags.iter().filter(|f| f.true_positive).count()
    }

    pub fn false_positives(&self) -> usize {
        self.flags.len() - self.true_positives()
    }

    pub fn false_negatives(&self) -> usize {
        self.num_ground_truth - self.true_positives()
    }
}

/// Greedy matching for one class: detections in descending confidence each
/// take the highest-IoU still-unmatched ground truth at or above the
/// threshold (lowest index on IoU ties).
pub fn match_detections(
    detections: &[Detection],
    ground_truth: &[GroundTruth],
    iou_threshold: f64,
    class_id: u32,
) -> Result<MatchResult, EvalError> {
    check_threshold(iou_threshold)?;
    let gt_indices: Vec<usize> = (0..ground_truth.len())
        .filter(|&i| ground_truth[i].class_id == class_id)
        .collect();
    let mut taken = vec![false; gt_indices.len()];

    let flags = confidence_order(detections, |d| d.confidence)
        .into_iter()
        .filter(|&i| detections[i].class_id == class_id)
        .map(|i| {
            let det = &detections[i];
            let mut best: Option<(usize, f64)> = None;
            for (slot, &g) in gt_indices.iter().enumerate() {
                if taken[slot] {
                    continue;
                }
                let overlap = iou(&det.bbox, &ground_truth[g].bbox);
                if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((slot, overlap));
                }
            }
            if let Some((slot, _)) = best {
                taken[slot] = true;
            }
            MatchFlag {
                detection: i,
                confidence: det.confidence,
                true_positive: best.is_some(),
                ground_truth: best.map(|(slot, _)| gt_indices[slot]),
            }
        })
        .collect();

    Ok(MatchResult {
        class_id,
        flags,
        num_ground_truth: gt_indices.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    pub class_id: u32,
    pub ap: f64,
    /// `TP / (TP + FP)` over all detections; 0 when there are none.
    pub precision: f64,
    pub recall: f64,
    pub num_ground_truth: usize,
    pub num_detections: usize,
    pub true_positives: usize,
    #[serde(skip)]
    pub curve: Vec<PrPoint>,
}

/// Cumulative precision/recall after each ranked detection.
pub fn pr_curve(flags: &[bool], num_ground_truth: usize) -> Vec<PrPoint> {
    let mut tp = 0usize;
    flags
        .iter()
        .enumerate()
        .map(|(rank, &hit)| {
            tp += hit as usize;
            PrPoint {
                recall: tp as f64 / num_ground_truth as f64,
                precision: tp as f64 / (rank + 1) as f64,
            }
        })
        .collect()
}

/// Area under the precision envelope, where the envelope at recall `r` is
/// the highest precision reached at any recall `>= r`.
pub fn envelope_area(curve: &[PrPoint]) -> f64 {
    let mut envelope = vec![0.0; curve.len()];
    let mut running = 0.0f64;
    for (i, p) in curve.iter().enumerate().rev() {
        running = running.max(p.precision);
        envelope[i] = running;
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in curve.iter().zip(envelope) {
        area += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    area
}

/// AP for one class from per-image match results. Flags from all images are
/// ranked together by confidence; ties keep image order.
pub fn ap_from_matches(class_id: u32, matches: &[MatchResult]) -> Result<ApResult, EvalError> {
    let num_ground_truth: usize = matches.iter().map(|m| m.num_ground_truth).sum();
    if num_ground_truth == 0 {
        return Err(EvalError::NoGroundTruth(Some(class_id)));
    }
    let merged: Vec<&MatchFlag> = matches.iter().flat_map(|m| &m.flags).collect();
    let ranked: Vec<bool> = confidence_order(&merged, |f| f.confidence)
        .into_iter()
        .map(|i| merged[i].true_positive)
        .collect();
    let curve = pr_curve(&ranked, num_ground_truth);
    let true_positives = ranked.iter().filter(|&&t| t).count();
    let num_detections = ranked.len();
    Ok(ApResult {
        class_id,
        ap: envelope_area(&curve).clamp(0.0, 1.0),
        precision: if num_detections == 0 {
            0.0
        } else {
            true_positives as f64 / num_detections as f64
        },
        recall: true_positives as f64 / num_ground_truth as f64,
        num_ground_truth,
        num_detections,
        true_positives,
        curve,
    })
}

pub fn average_precision(
    detections: &[Detection],
    ground_truth: &[GroundTruth],
    class_id: u32,
    iou_threshold: f64,
) -> Result<ApResult, EvalError> {
    let m = match_detections(detections, ground_truth, iou_threshold, class_id)?;
    ap_from_matches(class_id, std::slice::from_ref(&m))
}

/// Detections and ground truth for one image.
#[derive(Debug, Clone, Default)]
pub struct ImageEval {
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub map: f64,
    pub classes: Vec<ApResult>,
}

/// Per-class AP over a set of images (matching is per image) and their
/// unweighted mean over classes that have ground truth.
pub fn evaluate(images: &[ImageEval], iou_threshold: f64, parallelism: Parallelism) -> Result<EvalReport, EvalError> {
    check_threshold(iou_threshold)?;
    let classes: Vec<u32> = images
        .iter()
        .flat_map(|im| im.ground_truth.iter().map(|g| g.class_id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.is_empty() {
        return Err(EvalError::NoGroundTruth(None));
    }
    let results = parallelism.map_slice(&classes, |&class_id| {
        let matches = images
            .iter()
            .map(|im| match_detections(&im.detections, &im.ground_truth, iou_threshold, class_id))
            .collect::<Result<Vec<_>, _>>()?;
        ap_from_matches(class_id, &matches)
    });
    let classes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let map = classes.iter().map(|c| c.ap).sum::<f64>() / classes.len() as f64;
    Ok(EvalReport {
        iou_threshold,
        map,
        classes,
    })
}

/// mAP for a single image.
pub fn mean_ap(detections: &[Detection], ground_truth: &[GroundTruth], iou_threshold: f64) -> Result<f64, EvalError> {
    let image = ImageEval {
        detections: detections.to_vec(),
        ground_truth: ground_truth.to_vec(),
    };
    Ok(evaluate(std::slice::from_ref(&image), iou_threshold, Parallelism::Sequential)?.map)
}
