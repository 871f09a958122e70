//! Pose alignment from matched attachment features, and pose-quality metrics.

mod metrics;
mod solver;

pub use metrics::{pose_metrics, PoseMetrics, DEFAULT_PA_THRESHOLD};
pub use solver::{solve_alignment, AlignmentResult, Degeneracy, MatchedPairs, DEFAULT_ALPHA};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("no matched pairs")]
    Empty,
    #[error("alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("pair {index}: {source}")]
    Feature {
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("rotation is unconstrained: all positions coincide and no normal term applies")]
    DegenerateInput,
    #[error("length mismatch: {predicted} predicted, {truth} truth, {clouds} clouds")]
    LengthMismatch {
        predicted: usize,
        truth: usize,
        clouds: usize,
    },
    #[error("cloud {index} has {len} points, need at least 3")]
    SparseCloud { index: usize, len: usize },
}
