//! Composite construction: tile augmented copies of the confident crop into
//! a target-sized image, carrying the pseudo-labels along.

use serde::Serialize;
use thiserror::Error;

use crate::augment::{apply_pipeline_traced, sample_pipeline, AugOp, AugmentError, GeometryTrace, SampledPipeline};
use crate::model::{Detection, Dims, Image};
use crate::par::Parallelism;
use crate::rng::Substream;
use crate::selection::{GridLayout, SelectionError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error("crop is {crop}, expected {expected} for a {grid} grid over {target}")]
    DimensionMismatch {
        crop: Dims,
        expected: Dims,
        grid: GridLayout,
        target: Dims,
    },
    #[error("augmented region count {regions} must be in 1..={cells}")]
    InvalidRegions { regions: usize, cells: usize },
    #[error(transparent)]
    Grid(#[from] SelectionError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

/// What to build: target size, tiling, augmentation ops and how many of the
/// row-major cells receive augmented copies.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositePlan {
    pub target_dims: Dims,
    pub grid: GridLayout,
    pub ops: Vec<AugOp>,
    pub regions: usize,
}

impl CompositePlan {
    /// A plan that augments every cell.
    pub fn new(target_dims: Dims, grid: GridLayout, ops: Vec<AugOp>) -> Self {
        Self {
            target_dims,
            grid,
            ops,
            regions: grid.cell_count(),
        }
    }

    pub fn with_regions(mut self, regions: usize) -> Self {
        self.regions = regions;
        self
    }

    pub fn cell_dims(&self) -> Result<Dims, ComposeError> {
        Ok(self.grid.cell_dims(self.target_dims)?)
    }

    pub fn validate(&self) -> Result<(), ComposeError> {
        self.cell_dims()?;
        let cells = self.grid.cell_count();
        if self.regions == 0 || self.regions > cells {
            return Err(ComposeError::InvalidRegions {
                regions: self.regions,
                cells,
            });
        }
        for op in &self.ops {
            op.validate()?;
        }
        Ok(())
    }
}

/// Per-cell record of what was drawn and how many labels landed there.
#[derive(Debug, Clone, Serialize)]
pub struct CellOutcome {
    pub index: usize,
    pub cell: (u32, u32),
    pub augmented: bool,
    pub pipeline: SampledPipeline,
    pub trace: GeometryTrace,
    pub label_count: usize,
}

#[derive(Debug, Clone)]
pub struct CompositeResult {
    pub image: Image,
    pub pseudo_labels: Vec<Detection>,
    pub per_cell: Vec<CellOutcome>,
    pub cell_dims: Dims,
}

impl CompositeResult {
    /// Carries another crop-local box set through the same per-cell
    /// transforms and offsets used to build the composite.
    pub fn project(&self, crop_labels: &[Detection]) -> Vec<Detection> {
        self.per_cell
            .iter()
            .flat_map(|cell| {
                let (dx, dy) = self.offset(cell.cell);
                cell.trace
                    .project(crop_labels)
                    .into_iter()
                    .map(move |d| d.with_bbox(d.bbox.translate(dx, dy)))
            })
            .collect()
    }

    fn offset(&self, (row, col): (u32, u32)) -> (f64, f64) {
        (
            (col * self.cell_dims.width) as f64,
            (row * self.cell_dims.height) as f64,
        )
    }
}

/// Builds the composite for one crop. Cell `i` (row-major) draws its
/// pipeline from substream `(base_seed, image_id, i)`; cells at or beyond
/// `plan.regions` get the unaugmented crop.
pub fn compose(
    crop: &Image,
    boxes: &[Detection],
    plan: &CompositePlan,
    base_seed: u64,
    image_id: &str,
    parallelism: Parallelism,
) -> Result<CompositeResult, ComposeError> {
    plan.validate()?;
    let cell_dims = plan.cell_dims()?;
    if crop.dims() != cell_dims {
        return Err(ComposeError::DimensionMismatch {
            crop: crop.dims(),
            expected: cell_dims,
            grid: plan.grid,
            target: plan.target_dims,
        });
    }

    let cols = plan.grid.cols();
    let tiles = parallelism.map_range(plan.grid.cell_count(), |index| {
        let substream = Substream::new(base_seed, image_id, index as u64);
        let augmented = index < plan.regions;
        let pipeline = if augmented {
            sample_pipeline(&plan.ops, substream)
        } else {
            SampledPipeline::identity(substream)
        };
        let (image, labels, trace) = apply_pipeline_traced(crop, boxes, &pipeline);
        (index, augmented, pipeline, trace, image, labels)
    });

    let mut canvas = Image::filled(plan.target_dims.width, plan.target_dims.height, [0, 0, 0]);
    let mut pseudo_labels = Vec::new();
    let mut per_cell = Vec::with_capacity(tiles.len());
    for (index, augmented, pipeline, trace, image, labels) in tiles {
        let cell = (index as u32 / cols, index as u32 % cols);
        let (x, y) = (cell.1 * cell_dims.width, cell.0 * cell_dims.height);
        canvas.blit(&image, x, y);
        pseudo_labels.extend(labels.iter().map(|d| d.with_bbox(d.bbox.translate(x as f64, y as f64))));
        per_cell.push(CellOutcome {
            index,
            cell,
            augmented,
            pipeline,
            trace,
            label_count: labels.len(),
        });
    }

    Ok(CompositeResult {
        image: canvas,
        pseudo_labels,
        per_cell,
        cell_dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{default_ops, AugKind};
    use crate::model::{BBox, PixelRect};

    fn crop(w: u32, h: u32) -> Image {
        let pixels = (0..w * h * 3).map(|i| (i % 251) as u8).collect();
        Image::new(w, h, pixels).unwrap()
    }

    fn det(x0: f64, y0: f64, x1: f64, y1: f64) -> Detection {
        Detection::new(BBox::new(x0, y0, x1, y1).unwrap(), 1, 0.9).unwrap()
    }

    #[test]
    fn identity_tiling_2x2() {
        let c = crop(300, 300);
        let plan = CompositePlan::new(Dims::new(600, 600), GridLayout::new(2, 2).unwrap(), vec![]);
        let out = compose(
            &c,
            &[det(10.0, 20.0, 100.0, 200.0)],
            &plan,
            1,
            "a",
            Parallelism::Sequential,
        )
        .unwrap();
        assert_eq!(out.image.dims(), Dims::new(600, 600));
        for (r, col) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(out.image.crop(PixelRect::new(col * 300, r * 300, 300, 300)), c);
        }
        assert_eq!(out.pseudo_labels.len(), 4);
        assert_eq!(out.pseudo_labels[2].bbox.corners(), [10.0, 320.0, 100.0, 500.0]);
        assert_eq!(out.pseudo_labels[3].bbox.corners(), [310.0, 320.0, 400.0, 500.0]);
    }

    #[test]
    fn degenerate_grid_returns_crop() {
        let c = crop(50, 40);
        let boxes = [det(1.0, 2.0, 30.0, 20.0)];
        let plan = CompositePlan::new(Dims::new(50, 40), GridLayout::new(1, 1).unwrap(), vec![]);
        let out = compose(&c, &boxes, &plan, 0, "z", Parallelism::Parallel).unwrap();
        assert_eq!(out.image, c);
        assert_eq!(out.pseudo_labels, boxes.to_vec());
    }

    #[test]
    fn rejects_wrong_crop_and_regions() {
        let plan = CompositePlan::new(Dims::new(600, 600), GridLayout::new(2, 2).unwrap(), vec![]);
        assert!(matches!(
            compose(&crop(200, 300), &[], &plan, 0, "a", Parallelism::Sequential),
            Err(ComposeError::DimensionMismatch { .. })
        ));
        let bad = plan.clone().with_regions(5);
        assert!(matches!(
            compose(&crop(300, 300), &[], &bad, 0, "a", Parallelism::Sequential),
            Err(ComposeError::InvalidRegions { .. })
        ));
    }

    #[test]
    fn partial_regions_fill_with_plain_crop() {
        let c = crop(300, 300);
        let ops: Vec<_> = default_ops().into_iter().map(|o| o.with_probability(1.0)).collect();
        let plan = CompositePlan::new(Dims::new(600, 600), GridLayout::new(2, 2).unwrap(), ops).with_regions(1);
        let out = compose(
            &c,
            &[det(10.0, 20.0, 100.0, 200.0)],
            &plan,
            3,
            "p",
            Parallelism::Sequential,
        )
        .unwrap();
        assert!(out.per_cell[0].augmented);
        assert_eq!(out.per_cell[0].pipeline.fired_kinds().len(), AugKind::ALL.len());
        for cell in &out.per_cell[1..] {
            assert!(!cell.augmented);
            let (r, col) = cell.cell;
            assert_eq!(out.image.crop(PixelRect::new(col * 300, r * 300, 300, 300)), c);
        }
        assert_eq!(out.pseudo_labels.len(), 4);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let c = crop(200, 200);
        let plan = CompositePlan::new(Dims::new(600, 600), GridLayout::new(3, 3).unwrap(), default_ops());
        let boxes = [det(10.0, 20.0, 100.0, 150.0), det(120.0, 30.0, 190.0, 90.0)];
        let a = compose(&c, &boxes, &plan, 77, "q", Parallelism::Sequential).unwrap();
        let b = compose(&c, &boxes, &plan, 77, "q", Parallelism::Parallel).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.pseudo_labels, b.pseudo_labels);
    }

    #[test]
    fn projection_reproduces_composite_labels() {
        let c = crop(300, 300);
        let plan = CompositePlan::new(Dims::new(600, 600), GridLayout::new(2, 2).unwrap(), default_ops());
        let boxes = [det(10.0, 20.0, 100.0, 200.0), det(150.0, 150.0, 290.0, 260.0)];
        for seed in 0..10 {
            let out = compose(&c, &boxes, &plan, seed, "r", Parallelism::Sequential).unwrap();
            assert_eq!(out.project(&boxes), out.pseudo_labels);
        }
    }
}
