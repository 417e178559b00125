//! The adaptation loop with pluggable detector and trainer.
//!
//! Each iteration pairs one source and one target sample: the detector runs
//! on the source image (source loss against ground truth), then on the
//! target image; its confident detections pick a region that is augmented
//! and tiled into a composite, the detector runs on the composite and the
//! target loss compares that output with the composite pseudo-labels. The
//! trainer sees `source + target` and is asked to update once per step.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugOp;
use crate::compose::{compose, ComposeError, CompositePlan};
use crate::eval::{confidence_order, iou};
use crate::model::{BBox, DatasetSample, Detection, Dims, GroundTruth, Image};
use crate::par::Parallelism;
use crate::rng::Substream;
use crate::selection::{filter_confidence, select_region, trim_detections, GridLayout, SelectionError};

/// IoU at which the surrogate loss pairs a prediction with a target.
pub const SURROGATE_IOU: f64 = 0.5;

const MAX_JITTER_REDRAWS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("image {id} is {actual}, expected {expected}")]
    ImageSize { id: String, actual: Dims, expected: Dims },
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

/// One detector invocation. `scene` carries annotations of what is actually
/// in the image; only simulated detectors may look at it. `key` names the
/// request uniquely within a run.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub image: &'a Image,
    pub scene: Option<&'a [Detection]>,
    pub key: &'a str,
}

/// An object detector: image in, detections out.
pub trait Detector {
    fn detect(&mut self, frame: Frame<'_>) -> Vec<Detection>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub source: f64,
    pub target: Option<f64>,
    pub total: f64,
}

impl LossReport {
    pub fn new(source: f64, target: Option<f64>) -> Self {
        Self {
            source,
            target,
            total: source + target.unwrap_or(0.0),
        }
    }
}

/// Computes the source and target losses and applies parameter updates.
pub trait Trainer {
    fn source_loss(&mut self, ground_truth: &[GroundTruth], detections: &[Detection]) -> f64;
    fn target_loss(&mut self, pseudo_labels: &[Detection], detections: &[Detection]) -> f64;
    fn update(&mut self, losses: &LossReport);
}

/// Scores with [`surrogate_loss`] and records every update; never changes
/// any parameters.
#[derive(Debug, Clone, Default)]
pub struct RecordingTrainer {
    pub history: Vec<LossReport>,
}

impl Trainer for RecordingTrainer {
    fn source_loss(&mut self, ground_truth: &[GroundTruth], detections: &[Detection]) -> f64 {
        let targets: Vec<Detection> = ground_truth.iter().map(GroundTruth::as_detection).collect();
        surrogate_loss(detections, &targets)
    }

    fn target_loss(&mut self, pseudo_labels: &[Detection], detections: &[Detection]) -> f64 {
        surrogate_loss(detections, pseudo_labels)
    }

    fn update(&mut self, losses: &LossReport) {
        self.history.push(*losses);
    }
}

/// Detection-set discrepancy: predictions (by descending confidence) are
/// greedily paired with the best unpaired same-class target at IoU >= 0.5.
/// The loss is the mean `1 - IoU` over pairs plus one per unpaired
/// prediction and per unpaired target, divided by `max(1, |targets|)`.
pub fn surrogate_loss(predictions: &[Detection], targets: &[Detection]) -> f64 {
    let mut taken = vec![false; targets.len()];
    let mut pair_cost = 0.0;
    let mut pairs = 0usize;
    let mut unpaired_predictions = 0usize;
    for i in confidence_order(predictions, |d| d.confidence) {
        let p = &predictions[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, t) in targets.iter().enumerate() {
            if taken[j] || t.class_id != p.class_id {
                continue;
            }
            let overlap = iou(&p.bbox, &t.bbox);
            if overlap >= SURROGATE_IOU && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((j, overlap));
            }
        }
        match best {
            Some((j, overlap)) => {
                taken[j] = true;
                pair_cost += 1.0 - overlap;
                pairs += 1;
            }
            None => unpaired_predictions += 1,
        }
    }
    let unpaired_targets = taken.iter().filter(|t| !**t).count();
    let mean_pair = if pairs == 0 { 0.0 } else { pair_cost / pairs as f64 };
    (mean_pair + unpaired_predictions as f64 + unpaired_targets as f64) / targets.len().max(1) as f64
}

fn default_base() -> f64 {
    0.9
}

fn default_decay() -> f64 {
    4.0
}

fn default_fp_confidence() -> f64 {
    0.4
}

fn default_classes() -> u32 {
    1
}

/// Noise model of the simulated detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockDetectorConfig {
    /// Std-dev of the independent Gaussian offset added to each corner (px).
    pub corner_jitter_sigma: f64,
    pub drop_probability: f64,
    /// Poisson rate of spurious boxes per image.
    pub false_positives_per_image: f64,
    /// `conf = clamp(base - decay * |jitter| / diagonal + N(0, noise), 0, 1)`
    #[serde(default = "default_base")]
    pub confidence_base: f64,
    #[serde(default = "default_decay")]
    pub confidence_decay: f64,
    pub confidence_noise_sigma: f64,
    /// Upper bound of the uniform confidence given to spurious boxes.
    #[serde(default = "default_fp_confidence")]
    pub false_positive_max_confidence: f64,
    /// Class ids for spurious boxes are drawn from `0..num_classes`.
    #[serde(default = "default_classes")]
    pub num_classes: u32,
}

impl Default for MockDetectorConfig {
    fn default() -> Self {
        Self {
            corner_jitter_sigma: 2.0,
            drop_probability: 0.1,
            false_positives_per_image: 0.5,
            confidence_base: default_base(),
            confidence_decay: default_decay(),
            confidence_noise_sigma: 0.05,
            false_positive_max_confidence: default_fp_confidence(),
            num_classes: default_classes(),
        }
    }
}

impl MockDetectorConfig {
    /// Reproduces the scene exactly, every box at confidence 1.
    pub fn noise_free() -> Self {
        Self {
            corner_jitter_sigma: 0.0,
            drop_probability: 0.0,
            false_positives_per_image: 0.0,
            confidence_base: 1.0,
            confidence_decay: 0.0,
            confidence_noise_sigma: 0.0,
            false_positive_max_confidence: 0.0,
            num_classes: 1,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |what: &str| Err(HarnessError::InvalidConfig(format!("mock detector: {what}")));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.corner_jitter_sigma) {
            return bad("corner_jitter_sigma must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return bad("drop_probability must be in [0, 1]");
        }
        if !finite_nonneg(self.false_positives_per_image) {
            return bad("false_positives_per_image must be >= 0");
        }
        if !finite_nonneg(self.confidence_decay) || !finite_nonneg(self.confidence_noise_sigma) {
            return bad("confidence decay and noise must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.confidence_base) {
            return bad("confidence_base must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.false_positive_max_confidence) {
            return bad("false_positive_max_confidence must be in [0, 1]");
        }
        if self.num_classes == 0 {
            return bad("num_classes must be >= 1");
        }
        Ok(())
    }
}

fn clamp_to(b: &BBox, dims: Dims) -> [f64; 4] {
    let (w, h) = (dims.width as f64, dims.height as f64);
    [
        b.x_min().clamp(0.0, w),
        b.y_min().clamp(0.0, h),
        b.x_max().clamp(0.0, w),
        b.y_max().clamp(0.0, h),
    ]
}

fn sized_box(c: [f64; 4]) -> Option<BBox> {
    if c[2] - c[0] >= 1.0 && c[3] - c[1] >= 1.0 {
        BBox::new(c[0], c[1], c[2], c[3]).ok()
    } else {
        None
    }
}

/// Simulated detections for a scene. Objects are dropped independently;
/// survivors have their corners jittered (redrawn until the box stays at
/// least one pixel wide and tall inside the image) and get a confidence that
/// falls with the jitter magnitude; Poisson-many spurious boxes follow.
pub fn mock_detect<R: Rng + ?Sized>(
    scene: &[Detection],
    dims: Dims,
    config: &MockDetectorConfig,
    rng: &mut R,
) -> Result<Vec<Detection>, HarnessError> {
    config.validate()?;
    let jitter = Normal::new(0.0, config.corner_jitter_sigma).expect("validated sigma");
    let conf_noise = Normal::new(0.0, config.confidence_noise_sigma).expect("validated sigma");
    let diagonal = dims.diagonal();
    let (w, h) = (dims.width as f64, dims.height as f64);

    let mut out = Vec::new();
    for object in scene {
        let dropped = rng.random::<f64>() < config.drop_probability;
        let Some(base) = sized_box(clamp_to(&object.bbox, dims)) else {
            continue;
        };
        if dropped {
            continue;
        }
        let corners = base.corners();
        let mut accepted = (base, 0.0);
        for _ in 0..MAX_JITTER_REDRAWS {
            let offsets: [f64; 4] = std::array::from_fn(|_| jitter.sample(rng));
            let moved = [
                (corners[0] + offsets[0]).clamp(0.0, w),
                (corners[1] + offsets[1]).clamp(0.0, h),
                (corners[2] + offsets[2]).clamp(0.0, w),
                (corners[3] + offsets[3]).clamp(0.0, h),
            ];
            if let Some(b) = sized_box(moved) {
                let magnitude = offsets.iter().map(|o| o * o).sum::<f64>().sqrt();
                accepted = (b, magnitude);
                break;
            }
        }
        let (bbox, magnitude) = accepted;
        let confidence = (config.confidence_base - config.confidence_decay * magnitude / diagonal
            + conf_noise.sample(rng))
        .clamp(0.0, 1.0);
        out.push(Detection {
            bbox,
            class_id: object.class_id,
            confidence,
        });
    }

    if config.false_positives_per_image > 0.0 {
        let count = Poisson::new(config.false_positives_per_image)
            .expect("validated rate")
            .sample(rng) as usize;
        for _ in 0..count {
            let bw = (w * (0.05 + 0.25 * rng.random::<f64>())).max(1.0).min(w);
            let bh = (h * (0.05 + 0.25 * rng.random::<f64>())).max(1.0).min(h);
            let x0 = (w - bw) * rng.random::<f64>();
            let y0 = (h - bh) * rng.random::<f64>();
            let class_id = (rng.random::<f64>() * config.num_classes as f64) as u32;
            let confidence = config.false_positive_max_confidence * rng.random::<f64>();
            if let Ok(bbox) = BBox::new(x0, y0, x0 + bw, y0 + bh) {
                out.push(Detection {
                    bbox,
                    class_id: class_id.min(config.num_classes - 1),
                    confidence,
                });
            }
        }
    }
    Ok(out)
}

/// Detector that perturbs the frame's scene annotations. Each frame draws
/// from its own substream keyed by `Frame::key`, so a frame's output does
/// not depend on what was detected before it.
#[derive(Debug, Clone)]
pub struct MockDetector {
    config: MockDetectorConfig,
    seed: u64,
}

impl MockDetector {
    pub fn new(config: MockDetectorConfig, seed: u64) -> Result<Self, HarnessError> {
        config.validate()?;
        Ok(Self { config, seed })
    }
}

impl Detector for MockDetector {
    fn detect(&mut self, frame: Frame<'_>) -> Vec<Detection> {
        let mut rng = Substream::new(self.seed, format!("mock/{}", frame.key), 0).rng();
        mock_detect(
            frame.scene.unwrap_or_default(),
            frame.image.dims(),
            &self.config,
            &mut rng,
        )
        .expect("config validated at construction")
    }
}

/// Settings for the adaptation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationConfig {
    pub image_size: Dims,
    pub grid: GridLayout,
    pub ops: Vec<AugOp>,
    /// Number of row-major cells that get augmented copies.
    pub regions: usize,
    pub conf_threshold: f64,
    pub min_visibility: f64,
    pub seed: u64,
    pub n_iterations: usize,
    pub parallelism: Parallelism,
}

impl AdaptationConfig {
    pub fn new(image_size: Dims, grid: GridLayout, ops: Vec<AugOp>) -> Self {
        Self {
            image_size,
            grid,
            ops,
            regions: grid.cell_count(),
            conf_threshold: 0.25,
            min_visibility: 0.0,
            seed: 0,
            n_iterations: 50,
            parallelism: Parallelism::default(),
        }
    }

    pub fn plan(&self) -> CompositePlan {
        CompositePlan::new(self.image_size, self.grid, self.ops.clone()).with_regions(self.regions)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(SelectionError::InvalidThreshold(self.conf_threshold).into());
        }
        if !(0.0..=1.0).contains(&self.min_visibility) {
            return Err(SelectionError::InvalidVisibility(self.min_visibility).into());
        }
        self.plan().validate()?;
        Ok(())
    }
}

/// What happened in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub iteration: usize,
    pub source_id: String,
    pub target_id: String,
    pub skipped: bool,
    pub cell: Option<(u32, u32)>,
    pub mean_confidence: Option<f64>,
    pub source_detections: usize,
    pub target_detections: usize,
    /// Target detections passing the confidence threshold.
    pub pseudo_labels_pre_trim: usize,
    /// Pseudo-labels surviving the trim to the selected cell.
    pub pseudo_labels_post_trim: usize,
    pub composite_labels: usize,
    pub composite_detections: usize,
    pub source_loss: f64,
    pub target_loss: Option<f64>,
    pub total_loss: f64,
}

fn check_size<L>(sample: &DatasetSample<L>, expected: Dims) -> Result<(), HarnessError> {
    if sample.image.dims() != expected {
        return Err(HarnessError::ImageSize {
            id: sample.id.clone(),
            actual: sample.image.dims(),
            expected,
        });
    }
    Ok(())
}

/// Runs one iteration. The target's labels are only ever shown to the
/// detector as scene annotations; the pipeline itself works from detections.
pub fn adaptation_step<D, T>(
    iteration: usize,
    source: &DatasetSample<GroundTruth>,
    target: &DatasetSample<GroundTruth>,
    detector: &mut D,
    trainer: &mut T,
    config: &AdaptationConfig,
) -> Result<StepReport, HarnessError>
where
    D: Detector + ?Sized,
    T: Trainer + ?Sized,
{
    check_size(source, config.image_size)?;
    check_size(target, config.image_size)?;

    let source_scene: Vec<Detection> = source.labels.iter().map(GroundTruth::as_detection).collect();
    let source_key = format!("{iteration}/source/{}", source.id);
    let source_dets = detector.detect(Frame {
        image: &source.image,
        scene: Some(&source_scene),
        key: &source_key,
    });
    let source_loss = trainer.source_loss(&source.labels, &source_dets);

    let target_scene: Vec<Detection> = target.labels.iter().map(GroundTruth::as_detection).collect();
    let target_key = format!("{iteration}/target/{}", target.id);
    let target_dets = detector.detect(Frame {
        image: &target.image,
        scene: Some(&target_scene),
        key: &target_key,
    });
    let confident = filter_confidence(&target_dets, config.conf_threshold)?;

    let mut report = StepReport {
        iteration,
        source_id: source.id.clone(),
        target_id: target.id.clone(),
        skipped: true,
        cell: None,
        mean_confidence: None,
        source_detections: source_dets.len(),
        target_detections: target_dets.len(),
        pseudo_labels_pre_trim: confident.len(),
        pseudo_labels_post_trim: 0,
        composite_labels: 0,
        composite_detections: 0,
        source_loss,
        target_loss: None,
        total_loss: source_loss,
    };

    let region = match select_region(&target.image, &confident, config.grid, config.min_visibility) {
        Ok(region) => region,
        Err(SelectionError::NoConfidentRegion) => {
            trainer.update(&LossReport::new(source_loss, None));
            return Ok(report);
        }
        Err(e) => return Err(e.into()),
    };

    let composite_id = format!("{}#{iteration}", target.id);
    let composite = compose(
        &region.crop,
        &region.pseudo_labels,
        &config.plan(),
        config.seed,
        &composite_id,
        config.parallelism,
    )?;
    let composite_scene = composite.project(&trim_detections(&target_scene, region.rect, config.min_visibility));
    let composite_key = format!("{iteration}/composite/{}", target.id);
    let composite_dets = detector.detect(Frame {
        image: &composite.image,
        scene: Some(&composite_scene),
        key: &composite_key,
    });
    let target_loss = trainer.target_loss(&composite.pseudo_labels, &composite_dets);
    let losses = LossReport::new(source_loss, Some(target_loss));
    trainer.update(&losses);

    report.skipped = false;
    report.cell = Some(region.cell);
    report.mean_confidence = Some(region.mean_confidence);
    report.pseudo_labels_post_trim = region.pseudo_labels.len();
    report.composite_labels = composite.pseudo_labels.len();
    report.composite_detections = composite_dets.len();
    report.target_loss = Some(target_loss);
    report.total_loss = losses.total;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptationSummary {
    pub n_iterations: usize,
    pub completed_steps: usize,
    pub skipped_steps: usize,
    pub mean_source_loss: Option<f64>,
    pub mean_target_loss: Option<f64>,
    pub mean_total_loss: Option<f64>,
    /// Mean number of above-threshold target detections per iteration.
    pub mean_pseudo_labels: Option<f64>,
    pub mean_composite_labels: Option<f64>,
    /// Total loss of every non-skipped step, in order.
    pub loss_series: Vec<f64>,
    pub target_loss_series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptationReport {
    pub steps: Vec<StepReport>,
    pub summary: AdaptationSummary,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl AdaptationReport {
    pub fn from_steps(n_iterations: usize, steps: Vec<StepReport>) -> Self {
        let done: Vec<&StepReport> = steps.iter().filter(|s| !s.skipped).collect();
        let summary = AdaptationSummary {
            n_iterations,
            completed_steps: done.len(),
            skipped_steps: steps.len() - done.len(),
            mean_source_loss: mean(steps.iter().map(|s| s.source_loss)),
            mean_target_loss: mean(done.iter().filter_map(|s| s.target_loss)),
            mean_total_loss: mean(steps.iter().map(|s| s.total_loss)),
            mean_pseudo_labels: mean(steps.iter().map(|s| s.pseudo_labels_pre_trim as f64)),
            mean_composite_labels: mean(done.iter().map(|s| s.composite_labels as f64)),
            loss_series: done.iter().map(|s| s.total_loss).collect(),
            target_loss_series: done.iter().filter_map(|s| s.target_loss).collect(),
        };
        Self { steps, summary }
    }

    /// One JSON object per step, newline-terminated.
    pub fn steps_jsonl(&self) -> String {
        self.steps
            .iter()
            .map(|s| serde_json::to_string(s).expect("step serializes") + "\n")
            .collect()
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }
}

/// Runs `n_iterations` steps, cycling the source and target sets
/// independently (step `i` uses source `i mod |S|` and target `i mod |T|`).
pub fn run_adaptation<D, T>(
    sources: &[DatasetSample<GroundTruth>],
    targets: &[DatasetSample<GroundTruth>],
    detector: &mut D,
    trainer: &mut T,
    config: &AdaptationConfig,
) -> Result<AdaptationReport, HarnessError>
where
    D: Detector + ?Sized,
    T: Trainer + ?Sized,
{
    config.validate()?;
    if sources.is_empty() {
        return Err(HarnessError::EmptyDataset("source"));
    }
    if targets.is_empty() {
        return Err(HarnessError::EmptyDataset("target"));
    }
    let steps = (0..config.n_iterations)
        .map(|i| {
            adaptation_step(
                i,
                &sources[i % sources.len()],
                &targets[i % targets.len()],
                detector,
                trainer,
                config,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AdaptationReport::from_steps(config.n_iterations, steps))
}
