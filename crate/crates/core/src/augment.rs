//! Box-aware augmentations and seeded augmentation pipelines.
//!
//! A pipeline is sampled once per composite cell: each configured op gets a
//! Bernoulli firing draw plus its parameter draws, all taken from the cell's
//! own substream and frozen into a [`SampledPipeline`]. Applying the frozen
//! pipeline is then a pure function of the input crop and boxes.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BBox, Detection, Dims, Image};
use crate::raster::{box_blur, quantize, FloatImage, Region, LUMA};
use crate::rng::Substream;

/// Mean-filter kernel sizes drawn uniformly by [`AugKind::Blur`].
pub const BLUR_KERNELS: [usize; 3] = [3, 5, 7];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("invalid augmentation parameters: {0}")]
    InvalidParams(String),
    #[error("unknown augmentation {0:?}")]
    UnknownOp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugKind {
    HorizontalFlip,
    BBoxSafeRandomCrop,
    Blur,
    ColorJitter,
    Downscale,
    BrightnessContrast,
}

impl AugKind {
    /// Application order within a pipeline.
    pub const ALL: [AugKind; 6] = [
        AugKind::HorizontalFlip,
        AugKind::BBoxSafeRandomCrop,
        AugKind::Blur,
        AugKind::ColorJitter,
        AugKind::Downscale,
        AugKind::BrightnessContrast,
    ];

    pub fn acronym(self) -> &'static str {
        match self {
            AugKind::HorizontalFlip => "HF",
            AugKind::BBoxSafeRandomCrop => "SRC",
            AugKind::Blur => "B",
            AugKind::ColorJitter => "CJ",
            AugKind::Downscale => "D",
            AugKind::BrightnessContrast => "BC",
        }
    }

    pub fn from_acronym(s: &str) -> Result<Self, AugmentError> {
        AugKind::ALL
            .into_iter()
            .find(|k| k.acronym().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| AugmentError::UnknownOp(s.to_string()))
    }

    pub fn is_geometric(self) -> bool {
        matches!(self, AugKind::HorizontalFlip | AugKind::BBoxSafeRandomCrop)
    }

    fn rank(self) -> usize {
        AugKind::ALL.iter().position(|&k| k == self).unwrap_or(usize::MAX)
    }
}

/// Kind-specific parameters. Defaults follow the usual settings of each op:
/// color jitter 0.2 on every channel, downscale in `[0.5, 0.99]`,
/// brightness/contrast limits 0.1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum AugParams {
    HorizontalFlip,
    BBoxSafeRandomCrop,
    Blur,
    ColorJitter {
        brightness: f64,
        contrast: f64,
        saturation: f64,
        hue: f64,
    },
    Downscale {
        scale_min: f64,
        scale_max: f64,
    },
    BrightnessContrast {
        brightness_limit: f64,
        contrast_limit: f64,
    },
}

impl AugParams {
    pub fn default_for(kind: AugKind) -> Self {
        match kind {
            AugKind::HorizontalFlip => AugParams::HorizontalFlip,
            AugKind::BBoxSafeRandomCrop => AugParams::BBoxSafeRandomCrop,
            AugKind::Blur => AugParams::Blur,
            AugKind::ColorJitter => AugParams::ColorJitter {
                brightness: 0.2,
                contrast: 0.2,
                saturation: 0.2,
                hue: 0.2,
            },
            AugKind::Downscale => AugParams::Downscale {
                scale_min: 0.5,
                scale_max: 0.99,
            },
            AugKind::BrightnessContrast => AugParams::BrightnessContrast {
                brightness_limit: 0.1,
                contrast_limit: 0.1,
            },
        }
    }

    pub fn kind(&self) -> AugKind {
        match self {
            AugParams::HorizontalFlip => AugKind::HorizontalFlip,
            AugParams::BBoxSafeRandomCrop => AugKind::BBoxSafeRandomCrop,
            AugParams::Blur => AugKind::Blur,
            AugParams::ColorJitter { .. } => AugKind::ColorJitter,
            AugParams::Downscale { .. } => AugKind::Downscale,
            AugParams::BrightnessContrast { .. } => AugKind::BrightnessContrast,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(AugmentError::InvalidParams(format!("{name} = {v} outside [0, 1]")))
            }
        };
        match *self {
            AugParams::ColorJitter {
                brightness,
                contrast,
                saturation,
                hue,
            } => {
                unit("brightness", brightness)?;
                unit("contrast", contrast)?;
                unit("saturation", saturation)?;
                if !(0.0..=0.5).contains(&hue) {
                    return Err(AugmentError::InvalidParams(format!("hue = {hue} outside [0, 0.5]")));
                }
                Ok(())
            }
            AugParams::Downscale { scale_min, scale_max } => {
                if scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0 {
                    Ok(())
                } else {
                    Err(AugmentError::InvalidParams(format!(
                        "downscale range [{scale_min}, {scale_max}] not within (0, 1]"
                    )))
                }
            }
            AugParams::BrightnessContrast {
                brightness_limit,
                contrast_limit,
            } => {
                unit("brightness_limit", brightness_limit)?;
                unit("contrast_limit", contrast_limit)
            }
            _ => Ok(()),
        }
    }
}

/// One configured augmentation: parameters plus firing probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugOp {
    pub probability: f64,
    pub params: AugParams,
}

impl AugOp {
    /// Default probability and parameters for `kind`.
    pub fn default_for(kind: AugKind) -> Self {
        let probability = match kind {
            AugKind::BBoxSafeRandomCrop => 0.2,
            _ => 0.5,
        };
        Self {
            probability,
            params: AugParams::default_for(kind),
        }
    }

    pub fn kind(&self) -> AugKind {
        self.params.kind()
    }

    pub fn with_probability(self, probability: f64) -> Self {
        Self { probability, ..self }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(AugmentError::InvalidParams(format!(
                "{} probability {} outside [0, 1]",
                self.kind().acronym(),
                self.probability
            )));
        }
        self.params.validate()
    }
}

/// All six ops with their default settings.
pub fn default_ops() -> Vec<AugOp> {
    AugKind::ALL.into_iter().map(AugOp::default_for).collect()
}

/// Default-configured ops for a subset of kinds.
pub fn ops_for(kinds: &[AugKind]) -> Vec<AugOp> {
    kinds.iter().copied().map(AugOp::default_for).collect()
}

/// Parses `None`, `All`, or `+`-joined acronyms such as `HF+D+B`.
pub fn parse_subset(spec: &str) -> Result<Vec<AugKind>, AugmentError> {
    match spec.trim().to_ascii_lowercase().as_str() {
        "none" | "" => Ok(Vec::new()),
        "all" => Ok(AugKind::ALL.to_vec()),
        _ => spec.split('+').map(AugKind::from_acronym).collect(),
    }
}

/// Frozen random draws for one op. Crop draws are unit uniforms that are
/// realized against the box hull at application time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Draw {
    HorizontalFlip,
    BBoxSafeRandomCrop {
        left: f64,
        top: f64,
        right: f64,
        bottom: f64,
    },
    Blur {
        kernel: usize,
    },
    ColorJitter {
        brightness: f64,
        contrast: f64,
        saturation: f64,
        hue_shift: f64,
    },
    Downscale {
        scale: f64,
    },
    BrightnessContrast {
        brightness_shift: f64,
        contrast_factor: f64,
    },
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

impl AugParams {
    /// Draws every random value the op needs, whether or not it fires.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        match *self {
            AugParams::HorizontalFlip => Draw::HorizontalFlip,
            AugParams::BBoxSafeRandomCrop => Draw::BBoxSafeRandomCrop {
                left: rng.random(),
                top: rng.random(),
                right: rng.random(),
                bottom: rng.random(),
            },
            AugParams::Blur => {
                let i = ((rng.random::<f64>() * BLUR_KERNELS.len() as f64) as usize).min(BLUR_KERNELS.len() - 1);
                Draw::Blur {
                    kernel: BLUR_KERNELS[i],
                }
            }
            AugParams::ColorJitter {
                brightness,
                contrast,
                saturation,
                hue,
            } => Draw::ColorJitter {
                brightness: uniform(rng, 1.0 - brightness, 1.0 + brightness),
                contrast: uniform(rng, 1.0 - contrast, 1.0 + contrast),
                saturation: uniform(rng, 1.0 - saturation, 1.0 + saturation),
                hue_shift: uniform(rng, -hue, hue),
            },
            AugParams::Downscale { scale_min, scale_max } => Draw::Downscale {
                scale: uniform(rng, scale_min, scale_max),
            },
            AugParams::BrightnessContrast {
                brightness_limit,
                contrast_limit,
            } => Draw::BrightnessContrast {
                brightness_shift: uniform(rng, -brightness_limit, brightness_limit),
                contrast_factor: 1.0 + uniform(rng, -contrast_limit, contrast_limit),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampledStep {
    pub op: AugOp,
    pub fired: bool,
    pub draw: Draw,
}

/// A fully drawn pipeline; replaying it is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledPipeline {
    pub substream: Substream,
    pub steps: Vec<SampledStep>,
}

impl SampledPipeline {
    /// A pipeline in which nothing fires.
    pub fn identity(substream: Substream) -> Self {
        Self {
            substream,
            steps: Vec::new(),
        }
    }

    pub fn fired(&self) -> impl Iterator<Item = &SampledStep> {
        self.steps.iter().filter(|s| s.fired)
    }

    pub fn fired_kinds(&self) -> Vec<AugKind> {
        self.fired().map(|s| s.op.kind()).collect()
    }
}

pub fn sample_pipeline(ops: &[AugOp], substream: Substream) -> SampledPipeline {
    let mut ordered = ops.to_vec();
    ordered.sort_by_key(|op| op.kind().rank());
    let mut rng = substream.rng();
    let steps = ordered
        .into_iter()
        .map(|op| {
            let fired = rng.random::<f64>() < op.probability;
            let draw = op.params.draw(&mut rng);
            SampledStep { op, fired, draw }
        })
        .collect();
    SampledPipeline { substream, steps }
}

/// Axis-aligned coordinate map produced by a geometric op.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum AxisMap {
    /// `x' = width - x`
    MirrorX { width: f64 },
    /// `x' = (x - x0) * scale_x`, `y' = (y - y0) * scale_y`
    CropResize {
        x0: f64,
        y0: f64,
        scale_x: f64,
        scale_y: f64,
    },
}

impl AxisMap {
    /// Maps a box and clamps it to `[0, width] x [0, height]`; `None` when
    /// nothing of positive area survives.
    pub fn apply(&self, b: &BBox, dims: Dims) -> Option<BBox> {
        let [x_min, y_min, x_max, y_max] = match *self {
            AxisMap::MirrorX { width } => [width - b.x_max(), b.y_min(), width - b.x_min(), b.y_max()],
            AxisMap::CropResize {
                x0,
                y0,
                scale_x,
                scale_y,
            } => [
                (b.x_min() - x0) * scale_x,
                (b.y_min() - y0) * scale_y,
                (b.x_max() - x0) * scale_x,
                (b.y_max() - y0) * scale_y,
            ],
        };
        let (w, h) = (dims.width as f64, dims.height as f64);
        BBox::new(
            x_min.clamp(0.0, w),
            y_min.clamp(0.0, h),
            x_max.clamp(0.0, w),
            y_max.clamp(0.0, h),
        )
        .ok()
    }
}

/// The realized geometric maps of an applied pipeline, in order. Used to
/// carry any other box set through exactly the same transform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryTrace {
    pub dims: Dims,
    pub maps: Vec<AxisMap>,
}

impl GeometryTrace {
    pub fn identity(dims: Dims) -> Self {
        Self { dims, maps: Vec::new() }
    }

    pub fn map_box(&self, b: &BBox) -> Option<BBox> {
        self.maps.iter().try_fold(*b, |acc, m| m.apply(&acc, self.dims))
    }

    /// Projects detections through the trace; boxes that end up narrower or
    /// shorter than one pixel are dropped.
    pub fn project(&self, detections: &[Detection]) -> Vec<Detection> {
        detections
            .iter()
            .filter_map(|d| self.map_box(&d.bbox).map(|b| d.with_bbox(b)))
            .filter(|d| d.bbox.width() >= 1.0 && d.bbox.height() >= 1.0)
            .collect()
    }
}

fn map_all(boxes: &[Detection], map: &AxisMap, dims: Dims) -> Vec<Detection> {
    boxes
        .iter()
        .filter_map(|d| map.apply(&d.bbox, dims).map(|b| d.with_bbox(b)))
        .collect()
}

fn mirror_pixels(image: &Image) -> Image {
    let w = image.width() as usize;
    let mut pixels = Vec::with_capacity(image.pixels().len());
    for row in image.pixels().chunks_exact(w * 3) {
        for px in row.chunks_exact(3).rev() {
            pixels.extend_from_slice(px);
        }
    }
    Image::new(image.width(), image.height(), pixels).expect("same dimensions")
}

/// Mirrors pixels and boxes about the vertical center line.
pub fn horizontal_flip(crop: &Image, boxes: &[Detection]) -> (Image, Vec<Detection>) {
    let map = AxisMap::MirrorX {
        width: crop.width() as f64,
    };
    (mirror_pixels(crop), map_all(boxes, &map, crop.dims()))
}

/// Integer crop rectangle `(x0, y0, x1, y1)`.
pub type CropRect = (u32, u32, u32, u32);

/// Realizes unit draws as a crop rectangle that contains every box.
pub fn safe_crop_rect(dims: Dims, boxes: &[Detection], draws: [f64; 4]) -> CropRect {
    let Some(hull) = boxes.iter().map(|d| d.bbox).reduce(|a, b| a.union_hull(&b)) else {
        return (0, 0, dims.width, dims.height);
    };
    let (w, h) = (dims.width as f64, dims.height as f64);
    // slack on each side in whole pixels, then a uniform pick in 0..=slack
    let pick = |slack: f64, u: f64| -> u32 {
        let slack = slack.floor().max(0.0);
        (u * (slack + 1.0)).floor().min(slack) as u32
    };
    let [left, top, right, bottom] = draws;
    let x0 = pick(hull.x_min().min(w), left);
    let y0 = pick(hull.y_min().min(h), top);
    let x1 = dims.width - pick(w - hull.x_max().max(0.0), right);
    let y1 = dims.height - pick(h - hull.y_max().max(0.0), bottom);
    (x0, y0, x1, y1)
}

fn crop_resize_map(dims: Dims, rect: CropRect) -> AxisMap {
    let (x0, y0, x1, y1) = rect;
    AxisMap::CropResize {
        x0: x0 as f64,
        y0: y0 as f64,
        scale_x: dims.width as f64 / (x1 - x0) as f64,
        scale_y: dims.height as f64 / (y1 - y0) as f64,
    }
}

/// Crops `rect` and stretches it back to the input size with bilinear
/// interpolation; boxes follow the same affine map.
pub fn crop_and_resize(crop: &Image, boxes: &[Detection], rect: CropRect) -> (Image, Vec<Detection>) {
    let dims = crop.dims();
    if rect == (0, 0, dims.width, dims.height) {
        return (crop.clone(), boxes.to_vec());
    }
    let (x0, y0, x1, y1) = rect;
    let region = Region {
        x0: x0 as f64,
        y0: y0 as f64,
        x1: x1 as f64,
        y1: y1 as f64,
    };
    let pixels = FloatImage::from_image(crop)
        .resample(region, dims.width, dims.height)
        .to_image();
    (pixels, map_all(boxes, &crop_resize_map(dims, rect), dims))
}

/// Random crop that keeps every box whole, resized back to the input size.
pub fn bbox_safe_random_crop<R: Rng + ?Sized>(
    crop: &Image,
    boxes: &[Detection],
    rng: &mut R,
) -> (Image, Vec<Detection>) {
    let draws = [rng.random(), rng.random(), rng.random(), rng.random()];
    let rect = safe_crop_rect(crop.dims(), boxes, draws);
    crop_and_resize(crop, boxes, rect)
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn color_jitter(image: &Image, brightness: f64, contrast: f64, saturation: f64, hue_shift: f64) -> Image {
    let mut f = FloatImage::from_image(image);
    for v in &mut f.data {
        *v *= brightness;
    }
    f.clamp_in_place();

    let mean = f.mean_luma();
    for v in &mut f.data {
        *v = (*v - mean) * contrast + mean;
    }
    f.clamp_in_place();

    for p in f.data.chunks_exact_mut(3) {
        let luma = LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2];
        for v in p.iter_mut() {
            *v = luma + (*v - luma) * saturation;
        }
    }
    f.clamp_in_place();

    if hue_shift != 0.0 {
        for p in f.data.chunks_exact_mut(3) {
            let (h, s, v) = rgb_to_hsv(p[0] / 255.0, p[1] / 255.0, p[2] / 255.0);
            let (r, g, b) = hsv_to_rgb(h + hue_shift, s, v);
            p[0] = r * 255.0;
            p[1] = g * 255.0;
            p[2] = b * 255.0;
        }
    }
    f.to_image()
}

fn downscale(image: &Image, scale: f64) -> Image {
    let dims = image.dims();
    let small = Dims::new(
        ((dims.width as f64 * scale).round() as u32).max(1),
        ((dims.height as f64 * scale).round() as u32).max(1),
    );
    if small == dims {
        return image.clone();
    }
    FloatImage::from_image(image)
        .resample(Region::full(dims), small.width, small.height)
        .resample(Region::full(small), dims.width, dims.height)
        .to_image()
}

fn brightness_contrast(image: &Image, brightness_shift: f64, contrast_factor: f64) -> Image {
    let pixels = image
        .pixels()
        .iter()
        .map(|&v| quantize((v as f64 + brightness_shift * 255.0) * contrast_factor))
        .collect();
    Image::new(image.width(), image.height(), pixels).expect("same dimensions")
}

/// Applies a photometric draw. Geometric draws leave the image untouched.
pub fn apply_photometric_draw(image: &Image, draw: &Draw) -> Image {
    match *draw {
        Draw::Blur { kernel } => box_blur(image, kernel),
        Draw::ColorJitter {
            brightness,
            contrast,
            saturation,
            hue_shift,
        } => color_jitter(image, brightness, contrast, saturation, hue_shift),
        Draw::Downscale { scale } => downscale(image, scale),
        Draw::BrightnessContrast {
            brightness_shift,
            contrast_factor,
        } => brightness_contrast(image, brightness_shift, contrast_factor),
        Draw::HorizontalFlip | Draw::BBoxSafeRandomCrop { .. } => image.clone(),
    }
}

/// Draws parameters for a photometric op and applies them.
pub fn apply_photometric<R: Rng + ?Sized>(
    crop: &Image,
    params: &AugParams,
    rng: &mut R,
) -> Result<Image, AugmentError> {
    params.validate()?;
    if params.kind().is_geometric() {
        return Err(AugmentError::InvalidParams(format!(
            "{} is not a photometric op",
            params.kind().acronym()
        )));
    }
    Ok(apply_photometric_draw(crop, &params.draw(rng)))
}

/// Applies the fired steps of `pipeline`, returning the transformed crop and
/// boxes together with the realized geometric maps.
pub fn apply_pipeline_traced(
    crop: &Image,
    boxes: &[Detection],
    pipeline: &SampledPipeline,
) -> (Image, Vec<Detection>, GeometryTrace) {
    let dims = crop.dims();
    let mut image = crop.clone();
    let mut boxes = boxes.to_vec();
    let mut trace = GeometryTrace::identity(dims);
    for step in pipeline.fired() {
        match step.draw {
            Draw::HorizontalFlip => {
                let map = AxisMap::MirrorX {
                    width: dims.width as f64,
                };
                image = mirror_pixels(&image);
                boxes = map_all(&boxes, &map, dims);
                trace.maps.push(map);
            }
            Draw::BBoxSafeRandomCrop {
                left,
                top,
                right,
                bottom,
            } => {
                let rect = safe_crop_rect(dims, &boxes, [left, top, right, bottom]);
                if rect != (0, 0, dims.width, dims.height) {
                    let map = crop_resize_map(dims, rect);
                    (image, boxes) = crop_and_resize(&image, &boxes, rect);
                    trace.maps.push(map);
                }
            }
            ref photometric => image = apply_photometric_draw(&image, photometric),
        }
    }
    (image, boxes, trace)
}

pub fn apply_pipeline(crop: &Image, boxes: &[Detection], pipeline: &SampledPipeline) -> (Image, Vec<Detection>) {
    let (image, boxes, _) = apply_pipeline_traced(crop, boxes, pipeline);
    (image, boxes)
}
