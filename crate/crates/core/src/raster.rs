//! Floating-point raster buffers and resampling kernels shared by resizing
//! and the photometric/geometric transforms.

use crate::model::{Dims, Image};

/// Rec. 601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Rounds half away from zero and clamps to the 8-bit range.
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Continuous source region `[x0, x1) x [y0, y1)` in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Region {
    pub fn full(dims: Dims) -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            x1: dims.width as f64,
            y1: dims.height as f64,
        }
    }
}

/// Interleaved RGB buffer of `f64` samples, nominally in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl FloatImage {
    pub fn from_image(image: &Image) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            data: image.pixels().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_image(&self) -> Image {
        let pixels = self.data.iter().map(|&v| quantize(v)).collect();
        Image::new(self.width, self.height, pixels).expect("buffer sized by construction")
    }

    fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width as usize + x) * 3 + c]
    }

    pub fn clamp_in_place(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 255.0);
        }
    }

    /// Mean luma over the whole buffer.
    pub fn mean_luma(&self) -> f64 {
        let n = (self.width as usize * self.height as usize) as f64;
        let sum: f64 = self
            .data
            .chunks_exact(3)
            .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
            .sum();
        sum / n
    }

    /// Bilinear resample of `region` onto an `out_w x out_h` grid, using
    /// pixel-center alignment. Samples are clamped to the pixels covered by
    /// `region`, so resampling the full image at its own size is exact.
    pub fn resample(&self, region: Region, out_w: u32, out_h: u32) -> FloatImage {
        let scale_x = (region.x1 - region.x0) / out_w as f64;
        let scale_y = (region.y1 - region.y0) / out_h as f64;
        let lo_x = region.x0.floor().max(0.0);
        let hi_x = (region.x1.ceil() - 1.0).min(self.width as f64 - 1.0).max(lo_x);
        let lo_y = region.y0.floor().max(0.0);
        let hi_y = (region.y1.ceil() - 1.0).min(self.height as f64 - 1.0).max(lo_y);

        let axis = |o: u32, origin: f64, scale: f64, lo: f64, hi: f64| -> (usize, usize, f64) {
            let s = (origin + (o as f64 + 0.5) * scale - 0.5).clamp(lo, hi);
            let i0 = s.floor();
            let frac = s - i0;
            let i1 = (i0 + 1.0).min(hi);
            (i0 as usize, i1 as usize, frac)
        };
        let cols: Vec<_> = (0..out_w).map(|o| axis(o, region.x0, scale_x, lo_x, hi_x)).collect();

        let mut data = Vec::with_capacity(out_w as usize * out_h as usize * 3);
        for oy in 0..out_h {
            let (y0, y1, fy) = axis(oy, region.y0, scale_y, lo_y, hi_y);
            for &(x0, x1, fx) in &cols {
                for c in 0..3 {
                    let top = self.at(x0, y0, c) * (1.0 - fx) + self.at(x1, y0, c) * fx;
                    let bottom = self.at(x0, y1, c) * (1.0 - fx) + self.at(x1, y1, c) * fx;
                    data.push(top * (1.0 - fy) + bottom * fy);
                }
            }
        }
        FloatImage {
            width: out_w,
            height: out_h,
            data,
        }
    }
}

/// `k x k` mean filter with edge clamping. Sums are exact integers; the
/// division is rounded half away from zero.
pub fn box_blur(image: &Image, k: usize) -> Image {
    assert!(k % 2 == 1, "kernel size must be odd");
    let (w, h) = (image.width() as usize, image.height() as usize);
    let r = (k / 2) as isize;
    let src = image.pixels();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut horizontal = vec![0u32; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut sum = 0u32;
                for dx in -r..=r {
                    let xx = clamp(x as isize + dx, w);
                    sum += src[(y * w + xx) * 3 + c] as u32;
                }
                horizontal[(y * w + x) * 3 + c] = sum;
            }
        }
    }

    let area = (k * k) as f64;
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut sum = 0u32;
                for dy in -r..=r {
                    let yy = clamp(y as isize + dy, h);
                    sum += horizontal[(yy * w + x) * 3 + c];
                }
                out.push(quantize(sum as f64 / area));
            }
        }
    }
    Image::new(image.width(), image.height(), out).expect("same dimensions")
}
