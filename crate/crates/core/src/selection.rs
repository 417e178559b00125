//! Grid scoring and confident-region selection.
//!
//! The target image is split into `rows x cols` equal, half-open cells. Each
//! detection votes for the cell containing its box center; a cell's score
//! is the mean confidence of its votes. The best cell is cropped and every
//! detection overlapping it is trimmed into crop-local coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BBox, Detection, Dims, Image, PixelRect};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("grid must have at least one row and one column, got {rows}x{cols}")]
    EmptyGrid { rows: u32, cols: u32 },
    #[error("image {dims} is not divisible into a {rows}x{cols} grid")]
    NonDivisibleGrid { dims: Dims, rows: u32, cols: u32 },
    #[error("no detection to score any grid cell")]
    NoConfidentRegion,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("min_visibility {0} outside [0, 1]")]
    InvalidVisibility(f64),
}

/// `rows x cols` partition of an image into equal cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridLayout {
    rows: u32,
    cols: u32,
}

impl GridLayout {
    pub fn new(rows: u32, cols: u32) -> Result<Self, SelectionError> {
        if rows == 0 || cols == 0 {
            return Err(SelectionError::EmptyGrid { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn cell_count(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    /// Size of one cell for an image of `dims`.
    pub fn cell_dims(&self, dims: Dims) -> Result<Dims, SelectionError> {
        if !dims.width.is_multiple_of(self.cols) || !dims.height.is_multiple_of(self.rows) {
            return Err(SelectionError::NonDivisibleGrid {
                dims,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(Dims::new(dims.width / self.cols, dims.height / self.rows))
    }

    pub fn cell_rect(&self, row: u32, col: u32, dims: Dims) -> Result<PixelRect, SelectionError> {
        let cell = self.cell_dims(dims)?;
        Ok(PixelRect::new(
            col * cell.width,
            row * cell.height,
            cell.width,
            cell.height,
        ))
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| (r, c)))
    }
}

impl std::fmt::Display for GridLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl std::str::FromStr for GridLayout {
    type Err = String;

    /// Parses `ROWSxCOLS`, e.g. `2x3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
        let rows = r.trim().parse().map_err(|_| format!("bad row count {r:?}"))?;
        let cols = c.trim().parse().map_err(|_| format!("bad column count {c:?}"))?;
        GridLayout::new(rows, cols).map_err(|e| e.to_string())
    }
}

/// Cell `(row, col)` containing the center of `bbox`. Centers on an interior
/// boundary go to the higher-index cell; indices are clamped to the grid.
pub fn assign_cell(bbox: &BBox, grid: GridLayout, dims: Dims) -> Result<(u32, u32), SelectionError> {
    let cell = grid.cell_dims(dims)?;
    let (cx, cy) = bbox.center();
    let index = |v: f64, size: u32, count: u32| -> u32 {
        let i = (v / size as f64).floor();
        i.clamp(0.0, (count - 1) as f64) as u32
    };
    Ok((index(cy, cell.height, grid.rows), index(cx, cell.width, grid.cols)))
}

/// Mean confidence per cell, row-major; `None` for cells with no votes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceGrid {
    grid: GridLayout,
    means: Vec<Option<f64>>,
    counts: Vec<usize>,
}

impl ConfidenceGrid {
    pub fn get(&self, row: u32, col: u32) -> Option<f64> {
        self.means[(row * self.grid.cols + col) as usize]
    }

    pub fn count(&self, row: u32, col: u32) -> usize {
        self.counts[(row * self.grid.cols + col) as usize]
    }

    pub fn as_rows(&self) -> Vec<Vec<Option<f64>>> {
        self.means.chunks(self.grid.cols as usize).map(<[_]>::to_vec).collect()
    }

    /// Highest-scoring populated cell; ties go to the first in row-major order.
    pub fn best(&self) -> Option<((u32, u32), f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, mean) in self.means.iter().enumerate() {
            if let Some(m) = *mean {
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((i, m));
                }
            }
        }
        best.map(|(i, m)| {
            let i = i as u32;
            ((i / self.grid.cols, i % self.grid.cols), m)
        })
    }
}

pub fn cell_confidences(
    detections: &[Detection],
    grid: GridLayout,
    dims: Dims,
) -> Result<ConfidenceGrid, SelectionError> {
    grid.cell_dims(dims)?;
    let n = grid.cell_count();
    let mut sums = vec![0.0f64; n];
    let mut counts = vec![0usize; n];
    for det in detections {
        let (r, c) = assign_cell(&det.bbox, grid, dims)?;
        let i = (r * grid.cols + c) as usize;
        sums[i] += det.confidence;
        counts[i] += 1;
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &k)| (k > 0).then(|| s / k as f64))
        .collect();
    Ok(ConfidenceGrid { grid, means, counts })
}

/// Clips `bbox` to `rect` and expresses it in rect-local coordinates.
///
/// Returns `None` when the overlap is empty, narrower or shorter than one
/// pixel, or covers less than `min_visibility` of the original area.
pub fn trim_box(bbox: &BBox, rect: PixelRect, min_visibility: f64) -> Option<BBox> {
    let x0 = bbox.x_min().max(rect.x as f64);
    let y0 = bbox.y_min().max(rect.y as f64);
    let x1 = bbox.x_max().min(rect.x_end() as f64);
    let y1 = bbox.y_max().min(rect.y_end() as f64);
    if x1 - x0 < 1.0 || y1 - y0 < 1.0 {
        return None;
    }
    if (x1 - x0) * (y1 - y0) < min_visibility * bbox.area() {
        return None;
    }
    let (ox, oy) = (rect.x as f64, rect.y as f64);
    BBox::new(x0 - ox, y0 - oy, x1 - ox, y1 - oy).ok()
}

/// Trims every detection to `rect`, keeping class and confidence.
pub fn trim_detections(detections: &[Detection], rect: PixelRect, min_visibility: f64) -> Vec<Detection> {
    detections
        .iter()
        .filter_map(|d| trim_box(&d.bbox, rect, min_visibility).map(|b| d.with_bbox(b)))
        .collect()
}

/// Keeps detections with `confidence >= threshold`, in input order.
pub fn filter_confidence(detections: &[Detection], threshold: f64) -> Result<Vec<Detection>, SelectionError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(SelectionError::InvalidThreshold(threshold));
    }
    Ok(detections
        .iter()
        .filter(|d| d.confidence >= threshold)
        .copied()
        .collect())
}

/// The chosen cell, its pixels and its trimmed pseudo-labels.
#[derive(Debug, Clone)]
pub struct RegionSelection {
    pub cell: (u32, u32),
    pub rect: PixelRect,
    pub crop: Image,
    pub pseudo_labels: Vec<Detection>,
    pub mean_confidence: f64,
    /// Detections whose center fell in the chosen cell.
    pub voters: usize,
}

pub fn select_region(
    image: &Image,
    detections: &[Detection],
    grid: GridLayout,
    min_visibility: f64,
) -> Result<RegionSelection, SelectionError> {
    if !(0.0..=1.0).contains(&min_visibility) {
        return Err(SelectionError::InvalidVisibility(min_visibility));
    }
    let dims = image.dims();
    let scores = cell_confidences(detections, grid, dims)?;
    let ((row, col), mean_confidence) = scores.best().ok_or(SelectionError::NoConfidentRegion)?;
    let rect = grid.cell_rect(row, col, dims)?;
    Ok(RegionSelection {
        cell: (row, col),
        rect,
        crop: image.crop(rect),
        pseudo_labels: trim_detections(detections, rect, min_visibility),
        mean_confidence,
        voters: scores.count(row, col),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const D600: Dims = Dims::new(600, 600);

    fn det_at(cx: f64, cy: f64, conf: f64) -> Detection {
        Detection::new(BBox::from_center(cx, cy, 20.0, 20.0).unwrap(), 0, conf).unwrap()
    }

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn assigns_by_center_floor() {
        let g = GridLayout::new(2, 2).unwrap();
        let bx = BBox::from_center(450.0, 120.0, 10.0, 10.0).unwrap();
        assert_eq!(assign_cell(&bx, g, D600).unwrap(), (0, 1));
        let on_edge = BBox::from_center(300.0, 300.0, 10.0, 10.0).unwrap();
        assert_eq!(assign_cell(&on_edge, g, D600).unwrap(), (1, 1));
        // center on the far image edge is clamped into the last cell
        let far = b(590.0, 590.0, 610.0, 610.0);
        assert_eq!(assign_cell(&far, g, D600).unwrap(), (1, 1));
        let near = b(-10.0, -10.0, 6.0, 6.0);
        assert_eq!(assign_cell(&near, g, D600).unwrap(), (0, 0));
    }

    #[test]
    fn non_divisible_dims_are_rejected() {
        let g = GridLayout::new(3, 3).unwrap();
        let err = assign_cell(&b(0.0, 0.0, 5.0, 5.0), g, Dims::new(640, 600)).unwrap_err();
        assert!(matches!(err, SelectionError::NonDivisibleGrid { .. }));
        assert!(GridLayout::new(0, 2).is_err());
    }

    #[test]
    fn standard_grid_layouts_fit_600() {
        for (r, c) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            assert!(GridLayout::new(r, c).unwrap().cell_dims(D600).is_ok());
        }
    }

    #[test]
    fn confidences_mean_per_cell() {
        let g = GridLayout::new(2, 2).unwrap();
        let empty = cell_confidences(&[], g, D600).unwrap();
        assert!(empty.as_rows().iter().flatten().all(Option::is_none));

        let one = cell_confidences(&[det_at(100.0, 100.0, 0.8)], g, D600).unwrap();
        assert_eq!(one.as_rows(), vec![vec![Some(0.8), None], vec![None, None]]);

        let three = [
            det_at(100.0, 100.0, 0.2),
            det_at(120.0, 90.0, 0.4),
            det_at(50.0, 250.0, 0.9),
        ];
        assert_eq!(cell_confidences(&three, g, D600).unwrap().get(0, 0), Some(0.5));
    }

    #[test]
    fn selects_unique_argmax_and_breaks_ties_row_major() {
        let g = GridLayout::new(2, 2).unwrap();
        let img = Image::filled(600, 600, [0, 0, 0]);
        let dets = [
            det_at(150.0, 150.0, 0.5),
            det_at(450.0, 150.0, 0.5),
            det_at(150.0, 450.0, 0.5),
            det_at(450.0, 450.0, 0.7),
        ];
        assert_eq!(select_region(&img, &dets, g, 0.0).unwrap().cell, (1, 1));

        let tie = [
            det_at(150.0, 150.0, 0.6),
            det_at(450.0, 150.0, 0.6),
            det_at(450.0, 450.0, 0.3),
        ];
        assert_eq!(select_region(&img, &tie, g, 0.0).unwrap().cell, (0, 0));
    }

    #[test]
    fn single_detection_selection() {
        let g = GridLayout::new(2, 2).unwrap();
        let img = Image::filled(600, 600, [0, 0, 0]);
        let sel = select_region(&img, &[det_at(150.0, 150.0, 0.9)], g, 0.0).unwrap();
        assert_eq!(sel.cell, (0, 0));
        assert_eq!(sel.mean_confidence, 0.9);
        assert_eq!(sel.pseudo_labels.len(), 1);
        assert_eq!(sel.crop.dims(), Dims::new(300, 300));
        assert_eq!(sel.pseudo_labels[0].bbox.corners(), [140.0, 140.0, 160.0, 160.0]);
    }

    #[test]
    fn empty_detections_mean_no_region() {
        let g = GridLayout::new(2, 2).unwrap();
        let img = Image::filled(600, 600, [0, 0, 0]);
        assert!(matches!(
            select_region(&img, &[], g, 0.0),
            Err(SelectionError::NoConfidentRegion)
        ));
    }

    #[test]
    fn straddling_box_is_trimmed_into_winner() {
        let g = GridLayout::new(2, 2).unwrap();
        let img = Image::filled(600, 600, [0, 0, 0]);
        // center in (0,0), low confidence; winner is (0,1)
        let straddler = Detection::new(b(150.0, 50.0, 400.0, 150.0), 1, 0.3).unwrap();
        let winner = det_at(500.0, 100.0, 0.9);
        let sel = select_region(&img, &[straddler, winner], g, 0.0).unwrap();
        assert_eq!(sel.cell, (0, 1));
        assert_eq!(sel.voters, 1);
        assert_eq!(sel.pseudo_labels.len(), 2);
        assert_eq!(sel.pseudo_labels[0].bbox.corners(), [0.0, 50.0, 100.0, 150.0]);
        assert_eq!(sel.pseudo_labels[0].confidence, 0.3);
    }

    #[test]
    fn trim_cases() {
        let rect = PixelRect::new(300, 0, 300, 300);
        assert_eq!(
            trim_box(&b(250.0, 50.0, 400.0, 150.0), rect, 0.0).unwrap().corners(),
            [0.0, 50.0, 100.0, 150.0]
        );
        assert_eq!(
            trim_box(&b(310.0, 10.0, 320.0, 30.0), rect, 0.0).unwrap().corners(),
            [10.0, 10.0, 20.0, 30.0]
        );
        assert!(trim_box(&b(0.0, 0.0, 100.0, 100.0), PixelRect::new(300, 300, 300, 300), 0.0).is_none());
        // 0.5 px sliver
        assert!(trim_box(&b(299.5, 10.0, 400.0, 30.0), PixelRect::new(0, 0, 300, 300), 0.0).is_none());
        // visibility 100/150 of the original width
        let bx = b(250.0, 50.0, 400.0, 150.0);
        assert!(trim_box(&bx, rect, 0.6).is_some());
        assert!(trim_box(&bx, rect, 0.7).is_none());
    }

    #[test]
    fn threshold_filter() {
        let dets: Vec<_> = [0.1, 0.25, 0.9].iter().map(|&c| det_at(10.0, 10.0, c)).collect();
        let kept = filter_confidence(&dets, 0.25).unwrap();
        assert_eq!(kept.iter().map(|d| d.confidence).collect::<Vec<_>>(), vec![0.25, 0.9]);
        assert_eq!(filter_confidence(&dets, 0.0).unwrap(), dets);
        let low: Vec<_> = (1..80).map(|i| det_at(10.0, 10.0, i as f64 / 100.0)).collect();
        assert!(filter_confidence(&low, 0.8).unwrap().is_empty());
        assert!(matches!(
            filter_confidence(&dets, 1.5),
            Err(SelectionError::InvalidThreshold(_))
        ));
    }

    #[test]
    fn grid_from_str() {
        assert_eq!("2x3".parse::<GridLayout>().unwrap(), GridLayout::new(2, 3).unwrap());
        assert!("2by3".parse::<GridLayout>().is_err());
        assert!("0x3".parse::<GridLayout>().is_err());
    }
}
