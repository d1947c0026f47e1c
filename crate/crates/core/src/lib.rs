//! Topological-consistency losses and quality metrics for generated map tiles.
//!
//! The crate is organized bottom-up:
//!
//! - [`tile`]: the pixel-grid model, luminance conversion, crop/resize/stitch and PNG IO.
//! - [`imagemath`]: forward-difference gradient maps, Canny edge maps and the
//!   stabilized correlation statistics shared by the losses and the edge metric.
//! - [`losses`]: pixel L1, gradient L1, gradient structure, adversarial and identity
//!   losses with analytic image-space gradients.
//! - [`metrics`]: MSE, global SSIM and the edge structural similarity index (ESSI).
//! - [`dataset`]: manifests, seeded paired/unpaired splitting and large-image tiling.
//! - [`trainer`]: the two-stage semi-supervised schedule, the first-step freeze rule,
//!   Adam, and small reference models that make the loop runnable.

pub mod dataset;
pub mod error;
pub mod imagemath;
pub mod losses;
pub mod metrics;
pub mod tile;
pub mod trainer;

pub use error::{Error, Result};
pub use imagemath::{CorrelationTerms, EdgeMap, GradientMap};
pub use losses::{LossBreakdown, LossId, LossKind, LossWeights};
pub use metrics::{MetricConfig, MetricMode, MetricReport};
pub use tile::{ImageTile, TileGrid};
