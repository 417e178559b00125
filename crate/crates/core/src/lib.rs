//! Confident-region composite augmentation for self-training object
//! detectors on an unlabeled target domain.
//!
//! The pipeline runs in four stages:
//! [`selection`] picks the grid cell where the detector is most confident,
//! [`augment`] perturbs copies of that crop, [`compose`] tiles the copies
//! back into a full-size training image with projected pseudo-labels, and
//! [`harness`] drives the training loop against pluggable detector and
//! trainer traits. [`eval`] scores detections with all-point AP.
//!
//! Data-parallel work goes through [`par::Parallelism`]; building without
//! the default `parallel` feature removes rayon and runs everything
//! sequentially.

pub mod augment;
pub mod cli;
pub mod compose;
pub mod config;
pub mod eval;
pub mod harness;
pub mod io;
pub mod model;
pub mod par;
pub mod raster;
pub mod rng;
pub mod selection;
pub mod synthetic;
pub mod visualize;

pub use model::{BBox, DatasetSample, Detection, Dims, GroundTruth, Image, Label, PixelRect};
pub use par::Parallelism;
pub use rng::Substream;
