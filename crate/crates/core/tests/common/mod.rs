//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the library's geometry or
//! metric code.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use daca::io::save_image;
use daca::model::serialize_labels;
use daca::{DatasetSample, Detection, GroundTruth};
use sha2::{Digest, Sha256};

/// Clip `[x0, y0, x1, y1]` to the rect `(rx, ry, rw, rh)` by intersecting
/// the two axis intervals independently, then shift into rect coordinates.
pub fn trim_oracle(b: [f64; 4], rect: (u32, u32, u32, u32), min_visibility: f64) -> Option<[f64; 4]> {
    fn overlap(lo: f64, hi: f64, start: u32, len: u32) -> Option<(f64, f64)> {
        let (s, e) = (start as f64, (start + len) as f64);
        let lo = if lo > s { lo } else { s };
        let hi = if hi < e { hi } else { e };
        (hi - lo >= 1.0).then_some((lo, hi))
    }
    let (rx, ry, rw, rh) = rect;
    let (x0, x1) = overlap(b[0], b[2], rx, rw)?;
    let (y0, y1) = overlap(b[1], b[3], ry, rh)?;
    let kept = (x1 - x0) * (y1 - y0);
    let full = (b[2] - b[0]) * (b[3] - b[1]);
    if kept < min_visibility * full {
        return None;
    }
    Some([x0 - rx as f64, y0 - ry as f64, x1 - rx as f64, y1 - ry as f64])
}

/// Cell of the point `(cx, cy)` found by scanning half-open cell intervals;
/// points left of / above the image land in cell 0, points past the far
/// edge in the last cell.
pub fn assign_oracle(cx: f64, cy: f64, width: u32, height: u32, rows: u32, cols: u32) -> (u32, u32) {
    fn scan(v: f64, extent: u32, count: u32) -> u32 {
        let size = (extent / count) as f64;
        for i in 0..count {
            if v < size * (i + 1) as f64 {
                return i;
            }
        }
        count - 1
    }
    (scan(cy, height, rows), scan(cx, width, cols))
}

pub fn iou_oracle(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Brute-force all-point AP for one class over several images, or `None`
/// when the class has no ground truth.
///
/// Per image, detections are visited by descending confidence (ties by
/// index) and each claims the best-IoU unclaimed box at or above the
/// threshold. The interpolated precision at each distinct recall level is
/// found by a full scan of every ranked point.
pub fn brute_ap(images: &[(Vec<Detection>, Vec<GroundTruth>)], class_id: u32, threshold: f64) -> Option<f64> {
    let mut ranked: Vec<(f64, usize, usize, bool)> = Vec::new();
    let mut total_gt = 0usize;
    for (img, (dets, gts)) in images.iter().enumerate() {
        let gts: Vec<[f64; 4]> = gts
            .iter()
            .filter(|g| g.class_id == class_id)
            .map(|g| g.bbox.corners())
            .collect();
        total_gt += gts.len();
        let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class_id == class_id).collect();
        order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence).then(a.cmp(&b)));
        let mut claimed = vec![false; gts.len()];
        for i in order {
            let mut best: Option<usize> = None;
            let mut best_iou = threshold;
            for (g, gb) in gts.iter().enumerate() {
                let v = iou_oracle(dets[i].bbox.corners(), *gb);
                if !claimed[g] && v >= threshold && (best.is_none() || v > best_iou) {
                    best = Some(g);
                    best_iou = v;
                }
            }
            if let Some(g) = best {
                claimed[g] = true;
            }
            ranked.push((dets[i].confidence, img, i, best.is_some()));
        }
    }
    if total_gt == 0 {
        return None;
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut points = Vec::new();
    let mut tp = 0usize;
    for (k, r) in ranked.iter().enumerate() {
        tp += r.3 as usize;
        points.push((tp as f64 / total_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut levels: Vec<f64> = points.iter().map(|p| p.0).filter(|&r| r > 0.0).collect();
    levels.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in levels {
        let interp = points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        ap += (r - prev) * interp;
        prev = r;
    }
    Some(ap)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `<root>/images/<id>.ppm` and `<root>/labels/<id>.txt`.
pub fn write_dataset(root: &Path, samples: &[DatasetSample<GroundTruth>]) {
    fs::create_dir_all(root.join("images")).unwrap();
    fs::create_dir_all(root.join("labels")).unwrap();
    for s in samples {
        save_image(&root.join("images").join(format!("{}.ppm", s.id)), &s.image).unwrap();
        fs::write(
            root.join("labels").join(format!("{}.txt", s.id)),
            serialize_labels(&s.labels, s.image.dims()),
        )
        .unwrap();
    }
}

/// All regular files under `dir` (non-recursive), sorted, with contents.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
