//! synthforge: synthetic concrete-defect dataset tooling.
//!
//! The crate covers the whole data-engineering side of multi-label bridge-defect
//! segmentation:
//!
//! - [`texture`], [`noise`]: procedural concrete surfaces with weathering and pore masks.
//! - [`compositor`]: cut-and-paste of real defect shapes onto synthetic surfaces, with
//!   class-demand driven allocation.
//! - [`crackgen`]: fractal crack synthesis calibrated to pixel and shape budgets.
//! - [`cavitygen`]: layered Perlin cavity maps with small-region filtering.
//! - [`finecrack`]: coarse polygon to fine crack mask refinement via Multi-Otsu.
//! - [`perturb`]: a 15-kind image corruption suite for robustness testing.
//! - [`evalmetrics`]: image-level multi-label IoU/F1/Precision/Recall, robustness change
//!   reports and dataset statistics.
//! - [`pipeline`]: resumable, order-independent sample generation on disk.

pub mod error;
pub mod types;

pub mod components;
pub mod io;
pub mod morph;
pub mod raster;
pub mod seed;

pub mod dataset;
pub mod noise;
pub mod texture;

pub mod cavitygen;
pub mod compositor;
pub mod crackgen;
pub mod finecrack;

pub mod evalmetrics;
pub mod perturb;

pub mod config;
pub mod pipeline;
pub mod preview;

pub use error::{Error, Result};
pub use types::{Annotation, BBox, ClassId, ImageBuffer, LabelMask, MaskSet, Polygon, ScalarField, Shape};

pub use components::{connected_components, label_components, remove_small_components, Component};
pub use io::{load_annotation, load_maskset, save_annotation, save_maskset};
pub use morph::dilate;
pub use raster::rasterize_polygon;
pub use seed::{derive_seed, SeedSpec};

/// Version string recorded in every manifest.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
