//! Core value types: RGB rasters, corner-coordinate boxes, labels and the
//! normalized `class cx cy w h [conf]` text format used for label files.

use std::fmt::Write as _;

use thiserror::Error;

/// Tolerance applied when checking that normalized label values lie in `[0, 1]`.
pub const NORMALIZED_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("pixel buffer has {actual} bytes, expected {expected} for {width}x{height} RGB")]
    BufferSize {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("invalid box ({x_min}, {y_min}, {x_max}, {y_max}): corners must be finite and strictly ordered")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
}

/// Width and height of an image in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub width: u32,
    pub height: u32,
}

impl Dims {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Integer pixel rectangle, half-open: `[x, x + width) x [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    pub const fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self { x, y, width, height }
    }

    pub fn x_end(&self) -> u32 {
        self.x + self.width
    }

    pub fn y_end(&self) -> u32 {
        self.y + self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    /// Half-open containment test for a continuous point.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64 && x < self.x_end() as f64 && y >= self.y as f64 && y < self.y_end() as f64
    }

    pub fn fits_in(&self, dims: Dims) -> bool {
        self.x_end() <= dims.width && self.y_end() <= dims.height
    }
}

/// Owned 8-bit RGB raster, row-major, three bytes per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::EmptyImage { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ModelError::BufferSize {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    /// # Panics
    ///
    /// Panics when either dimension is zero.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies out the pixels under `rect`.
    ///
    /// # Panics
    ///
    /// Panics when `rect` is empty or extends past the image.
    pub fn crop(&self, rect: PixelRect) -> Image {
        assert!(
            !rect.is_empty() && rect.fits_in(self.dims()),
            "crop rectangle out of bounds"
        );
        let row_bytes = rect.width as usize * 3;
        let mut pixels = Vec::with_capacity(row_bytes * rect.height as usize);
        for y in rect.y..rect.y_end() {
            let start = self.offset(rect.x, y);
            pixels.extend_from_slice(&self.pixels[start..start + row_bytes]);
        }
        Image {
            width: rect.width,
            height: rect.height,
            pixels,
        }
    }

    /// Copies `src` into this image with its top-left corner at `(x, y)`.
    ///
    /// # Panics
    ///
    /// Panics when `src` does not fit.
    pub fn blit(&mut self, src: &Image, x: u32, y: u32) {
        assert!(
            x + src.width <= self.width && y + src.height <= self.height,
            "blit source does not fit"
        );
        let row_bytes = src.width as usize * 3;
        for row in 0..src.height {
            let dst = self.offset(x, y + row);
            let from = src.offset(0, row);
            self.pixels[dst..dst + row_bytes].copy_from_slice(&src.pixels[from..from + row_bytes]);
        }
    }

    /// Bilinear stretch to `dims` (no letterboxing).
    pub fn resize(&self, dims: Dims) -> Image {
        if dims == self.dims() {
            return self.clone();
        }
        crate::raster::FloatImage::from_image(self)
            .resample(crate::raster::Region::full(self.dims()), dims.width, dims.height)
            .to_image()
    }
}

/// Axis-aligned box stored as two opposite corners in continuous pixel
/// coordinates (origin top-left, y downward). Corners are strictly ordered.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ModelError> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(ModelError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self, ModelError> {
        Self::new(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Overlap with another box; `None` when the overlap has zero area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        BBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        )
        .ok()
    }

    /// Smallest box covering both.
    pub fn union_hull(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn intersects_image(&self, dims: Dims) -> bool {
        self.x_max > 0.0 && self.y_max > 0.0 && self.x_min < dims.width as f64 && self.y_min < dims.height as f64
    }

    pub fn is_within(&self, width: f64, height: f64) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= width && self.y_max <= height
    }
}

/// Annotated object: a box and its class.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class_id: u32,
}

impl GroundTruth {
    pub fn new(bbox: BBox, class_id: u32) -> Self {
        Self { bbox, class_id }
    }

    /// The same object as a detection with full confidence.
    pub fn as_detection(&self) -> Detection {
        Detection {
            bbox: self.bbox,
            class_id: self.class_id,
            confidence: 1.0,
        }
    }
}

/// Detector output: a box, its class and a confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: u32,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: u32, confidence: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ModelError::InvalidConfidence(confidence));
        }
        Ok(Self {
            bbox,
            class_id,
            confidence,
        })
    }

    pub fn with_bbox(&self, bbox: BBox) -> Detection {
        Detection { bbox, ..*self }
    }
}

/// An image with its labels and the file stem it was loaded from.
#[derive(Debug, Clone)]
pub struct DatasetSample<L> {
    pub id: String,
    pub image: Image,
    pub labels: Vec<L>,
}

impl<L: LabelRecord> DatasetSample<L> {
    /// Builds a sample, rejecting labels that miss the image entirely.
    pub fn new(id: impl Into<String>, image: Image, labels: Vec<L>) -> Result<Self, ModelError> {
        let dims = image.dims();
        if let Some(bad) = labels.iter().find(|l| !l.bbox().intersects_image(dims)) {
            let [x_min, y_min, x_max, y_max] = bad.bbox().corners();
            return Err(ModelError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            id: id.into(),
            image,
            labels,
        })
    }
}

/// Common view over ground-truth and detection records.
pub trait LabelRecord {
    fn bbox(&self) -> &BBox;
    fn class_id(&self) -> u32;
    fn confidence(&self) -> Option<f64>;
}

impl LabelRecord for GroundTruth {
    fn bbox(&self) -> &BBox {
        &self.bbox
    }

    fn class_id(&self) -> u32 {
        self.class_id
    }

    fn confidence(&self) -> Option<f64> {
        None
    }
}

impl LabelRecord for Detection {
    fn bbox(&self) -> &BBox {
        &self.bbox
    }

    fn class_id(&self) -> u32 {
        self.class_id
    }

    fn confidence(&self) -> Option<f64> {
        Some(self.confidence)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("malformed label line: {0}")]
    MalformedLine(String),
    #[error("value {value} for `{field}` outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("box {width_px:.3}x{height_px:.3} px is smaller than one pixel")]
    DegenerateBox { width_px: f64, height_px: f64 },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<LabelError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// `class cx cy w h`
    GroundTruth,
    /// `class cx cy w h conf`
    Detection,
}

impl LabelMode {
    pub fn field_count(self) -> usize {
        match self {
            LabelMode::GroundTruth => 5,
            LabelMode::Detection => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    GroundTruth(GroundTruth),
    Detection(Detection),
}

impl Label {
    pub fn bbox(&self) -> &BBox {
        match self {
            Label::GroundTruth(g) => &g.bbox,
            Label::Detection(d) => &d.bbox,
        }
    }

    pub fn class_id(&self) -> u32 {
        match self {
            Label::GroundTruth(g) => g.class_id,
            Label::Detection(d) => d.class_id,
        }
    }

    pub fn confidence(&self) -> Option<f64> {
        match self {
            Label::GroundTruth(_) => None,
            Label::Detection(d) => Some(d.confidence),
        }
    }
}

fn normalized(field: &'static str, raw: &str) -> Result<f64, LabelError> {
    let value: f64 = raw
        .parse()
        .map_err(|_| LabelError::MalformedLine(format!("`{field}` is not a number: {raw:?}")))?;
    if !value.is_finite() {
        return Err(LabelError::MalformedLine(format!("`{field}` is not finite: {raw:?}")));
    }
    if !(-NORMALIZED_TOLERANCE..=1.0 + NORMALIZED_TOLERANCE).contains(&value) {
        return Err(LabelError::OutOfRange { field, value });
    }
    Ok(value)
}

/// Parses one `class cx cy w h [conf]` record and denormalizes it against `dims`.
pub fn parse_label_line(line: &str, mode: LabelMode, dims: Dims) -> Result<Label, LabelError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != mode.field_count() {
        return Err(LabelError::MalformedLine(format!(
            "expected {} fields, found {}",
            mode.field_count(),
            fields.len()
        )));
    }
    let class_id: u32 = fields[0]
        .parse()
        .map_err(|_| LabelError::MalformedLine(format!("class is not an integer: {:?}", fields[0])))?;
    let cx = normalized("cx", fields[1])?;
    let cy = normalized("cy", fields[2])?;
    let w = normalized("w", fields[3])?;
    let h = normalized("h", fields[4])?;

    let (width, height) = (dims.width as f64, dims.height as f64);
    let (width_px, height_px) = (w * width, h * height);
    if width_px < 1.0 || height_px < 1.0 {
        return Err(LabelError::DegenerateBox { width_px, height_px });
    }
    // Round-off in the printed digits can push an edge box a hair outside.
    let bbox = BBox::new(
        ((cx - w / 2.0) * width).clamp(0.0, width),
        ((cy - h / 2.0) * height).clamp(0.0, height),
        ((cx + w / 2.0) * width).clamp(0.0, width),
        ((cy + h / 2.0) * height).clamp(0.0, height),
    )
    .map_err(|e| LabelError::MalformedLine(e.to_string()))?;

    Ok(match mode {
        LabelMode::GroundTruth => Label::GroundTruth(GroundTruth { bbox, class_id }),
        LabelMode::Detection => {
            let raw = fields[5];
            let confidence: f64 = raw
                .parse()
                .map_err(|_| LabelError::MalformedLine(format!("confidence is not a number: {raw:?}")))?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(LabelError::OutOfRange {
                    field: "confidence",
                    value: confidence,
                });
            }
            Label::Detection(Detection {
                bbox,
                class_id,
                confidence,
            })
        }
    })
}

fn parse_lines(text: &str, mode: LabelMode, dims: Dims) -> Result<Vec<Label>, LabelError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            parse_label_line(line, mode, dims).map_err(|e| LabelError::AtLine {
                line: i + 1,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Parses a whole ground-truth label file. Blank lines are ignored.
pub fn parse_ground_truth(text: &str, dims: Dims) -> Result<Vec<GroundTruth>, LabelError> {
    Ok(parse_lines(text, LabelMode::GroundTruth, dims)?
        .into_iter()
        .filter_map(|l| match l {
            Label::GroundTruth(g) => Some(g),
            Label::Detection(_) => None,
        })
        .collect())
}

/// Parses a whole detection label file. Blank lines are ignored.
pub fn parse_detections(text: &str, dims: Dims) -> Result<Vec<Detection>, LabelError> {
    Ok(parse_lines(text, LabelMode::Detection, dims)?
        .into_iter()
        .filter_map(|l| match l {
            Label::Detection(d) => Some(d),
            Label::GroundTruth(_) => None,
        })
        .collect())
}

/// Writes one normalized record per line, six decimals per float.
pub fn serialize_labels<L: LabelRecord>(labels: &[L], dims: Dims) -> String {
    let (width, height) = (dims.width as f64, dims.height as f64);
    let mut out = String::new();
    for label in labels {
        let b = label.bbox();
        let (cx, cy) = b.center();
        let _ = write!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6}",
            label.class_id(),
            cx / width,
            cy / height,
            b.width() / width,
            b.height() / height
        );
        if let Some(conf) = label.confidence() {
            let _ = write!(out, " {conf:.6}");
        }
        out.push('\n');
    }
    out
}
