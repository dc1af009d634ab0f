//! Evaluation: conditional-entropy privacy metric, per-entity timing and the
//! analytical memory model.

mod entropy;
mod ks;
mod memory;
mod timing;

pub use entropy::{conditional_entropy, entropy, nce, nce_from_joint, write_nce_csv, Histogram2D};
pub use ks::{ks_critical, ks_statistic};
pub use memory::{estimate_memory, write_memory_csv, MemoryEstimate, SizeTable};
pub use timing::{benchmark_round, median, write_timing_csv, TimingBreakdown, TimingSample};

use thiserror::Error;

use crate::protocol::ProtocolError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("histogram has no mass")]
    EmptyHistogram,
    #[error("original series has zero entropy; the normalized metric is undefined (use a non-constant dataset or more bins)")]
    UndefinedMetric,
    #[error("paired series differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bin count must be positive")]
    InvalidBins,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("histogram shape mismatch: {0}")]
    Shape(String),
    #[error("benchmark needs at least 3 repetitions, got {0}")]
    TooFewRepetitions(usize),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;
