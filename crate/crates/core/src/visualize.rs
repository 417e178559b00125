//! Box overlays for inspecting labels.

use crate::model::{BBox, Image, Label};
use crate::synthetic::class_color;

/// Border thickness in pixels.
pub const BORDER: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ColorBy {
    Class,
    Confidence,
}

/// Red for confidence 0 through yellow to green for confidence 1.
pub fn confidence_color(confidence: f64) -> [u8; 3] {
    let c = confidence.clamp(0.0, 1.0);
    let red = if c < 0.5 { 255.0 } else { 255.0 * (1.0 - c) * 2.0 };
    let green = if c < 0.5 { 255.0 * c * 2.0 } else { 255.0 };
    [red.round() as u8, green.round() as u8, 0]
}

pub fn label_color(label: &Label, color_by: ColorBy) -> [u8; 3] {
    match color_by {
        ColorBy::Class => class_color(label.class_id()),
        ColorBy::Confidence => confidence_color(label.confidence().unwrap_or(1.0)),
    }
}

/// Slack for coordinates that went through normalized text.
const SNAP: f64 = 1e-6;

/// Inclusive pixel bounds covered by `bbox`, clipped to the image.
pub fn pixel_bounds(bbox: &BBox, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let x0 = (bbox.x_min() + SNAP).floor().max(0.0);
    let y0 = (bbox.y_min() + SNAP).floor().max(0.0);
    let x1 = ((bbox.x_max() - SNAP).ceil() - 1.0).min(width as f64 - 1.0);
    let y1 = ((bbox.y_max() - SNAP).ceil() - 1.0).min(height as f64 - 1.0);
    (x1 >= x0 && y1 >= y0).then_some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

/// Draws a `BORDER`-pixel frame just inside the box's pixel bounds.
pub fn draw_box(image: &mut Image, bbox: &BBox, color: [u8; 3]) {
    let Some((x0, y0, x1, y1)) = pixel_bounds(bbox, image.width(), image.height()) else {
        return;
    };
    for y in y0..=y1 {
        for x in x0..=x1 {
            let on_border = x < x0 + BORDER || x + BORDER > x1 || y < y0 + BORDER || y + BORDER > y1;
            if on_border {
                image.set_pixel(x, y, color);
            }
        }
    }
}

pub fn annotate(image: &Image, labels: &[Label], color_by: ColorBy) -> Image {
    let mut out = image.clone();
    for label in labels {
        draw_box(&mut out, label.bbox(), label_color(label, color_by));
    }
    out
}
