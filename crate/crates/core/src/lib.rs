//! Hypercone-assisted contour generation for out-of-distribution detection.
//!
//! Each in-distribution class is described by a union of hypercones whose apex
//! is the class centroid and whose axes are the (centered) training
//! observations. A cone's opening angle comes from the angular distance to the
//! axis' k-th nearest neighbour, and its radial boundary from the spread of
//! the member distances. A sample is scored by its smallest normalized
//! distance over all cones that contain it, and called in-distribution when
//! that score is at most the calibrated threshold `lambda`.
//!
//! The crate is organised as:
//!
//! - [`geometry`]: embedding sets and angular primitives
//! - [`contour`]: cone construction and threshold calibration
//! - [`adaptive_k`]: per-class neighbour count heuristic
//! - [`scoring`]: scores and decisions for new embeddings
//! - [`metrics`]: FPR at a target TPR, AUROC and a k-NN baseline
//! - [`sweep`]: fixed-k sweeps for choosing and checking k
//! - [`synth`]: seeded synthetic data generators
//! - [`io`]: NPY/CSV embeddings, score CSVs and the binary model file

pub mod adaptive_k;
pub mod contour;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod scoring;
pub mod sweep;
pub mod synth;

pub use adaptive_k::{AdaptiveKReport, ClassKRecord};
pub use contour::{
    build_model, AxisMode, BuildConfig, ClassContour, ContourModel, Hypercone, KMode, LambdaMode,
};
pub use error::{Error, Result};
pub use geometry::EmbeddingSet;
pub use metrics::EvalReport;
pub use scoring::ScoreResult;
