//! Seeded synthetic scenes (flat-shaded rectangles on a gradient) for
//! simulations, benches and tests.

use rand::Rng;

use crate::model::{BBox, DatasetSample, Dims, GroundTruth, Image};
use crate::rng::Substream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub dims: Dims,
    pub objects: usize,
    pub num_classes: u32,
    /// Object side length range as a fraction of the image side.
    pub min_size: f64,
    pub max_size: f64,
}

impl SceneSpec {
    pub fn new(dims: Dims, objects: usize) -> Self {
        Self {
            dims,
            objects,
            num_classes: 3,
            min_size: 0.06,
            max_size: 0.2,
        }
    }
}

/// Deterministic per-class color.
pub fn class_color(class_id: u32) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 8] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
    ];
    PALETTE[class_id as usize % PALETTE.len()]
}

pub fn scene(spec: &SceneSpec, seed: u64, id: &str) -> DatasetSample<GroundTruth> {
    let mut rng = Substream::new(seed, format!("synthetic/{id}"), 0).rng();
    let Dims { width, height } = spec.dims;
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(40.0..120.0));
    let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
    for y in 0..height {
        for x in 0..width {
            let gx = x as f64 / width as f64;
            let gy = y as f64 / height as f64;
            pixels.push((tint[0] + 60.0 * gx) as u8);
            pixels.push((tint[1] + 60.0 * gy) as u8);
            pixels.push((tint[2] + 30.0 * (gx + gy)) as u8);
        }
    }
    let mut image = Image::new(width, height, pixels).expect("sized by construction");

    let (w, h) = (width as f64, height as f64);
    let mut labels = Vec::with_capacity(spec.objects);
    for _ in 0..spec.objects {
        let bw = (w * rng.random_range(spec.min_size..=spec.max_size)).round().max(2.0);
        let bh = (h * rng.random_range(spec.min_size..=spec.max_size)).round().max(2.0);
        let x0 = (rng.random::<f64>() * (w - bw)).floor();
        let y0 = (rng.random::<f64>() * (h - bh)).floor();
        let class_id = rng.random_range(0..spec.num_classes);
        let color = class_color(class_id);
        for y in y0 as u32..(y0 + bh) as u32 {
            for x in x0 as u32..(x0 + bw) as u32 {
                image.set_pixel(x, y, color);
            }
        }
        let bbox = BBox::new(x0, y0, x0 + bw, y0 + bh).expect("positive size");
        labels.push(GroundTruth::new(bbox, class_id));
    }
    DatasetSample {
        id: id.to_string(),
        image,
        labels,
    }
}

/// `count` scenes with ids `<prefix>_000`, `<prefix>_001`, ...
pub fn dataset(spec: &SceneSpec, seed: u64, prefix: &str, count: usize) -> Vec<DatasetSample<GroundTruth>> {
    (0..count)
        .map(|i| scene(spec, seed, &format!("{prefix}_{i:03}")))
        .collect()
}
