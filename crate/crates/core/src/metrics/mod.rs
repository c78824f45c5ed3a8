//! Evaluation metrics for generated layouts: layout FID, MaxIoU (closed and
//! open label sets), failure rate, and extraction precision/recall/F-score.

mod assignment;
mod embedding;
mod eval;
mod features;
mod fid;
mod linalg;
mod matching;
mod prf;

pub use assignment::{hungarian_max, Assignment};
pub use embedding::{cosine, EmbeddingProvider, ProviderError, TrigramEmbedder};
pub use eval::{
    align, evaluate_corpus, score_item, summarize, EvalError, EvalReport, GenItem, ItemDiagnostics, ItemScore, RefItem,
};
pub use features::{featurize_layout, FEATURE_DIM, GEOMETRY_SLOTS, TEXT_SLOTS};
pub use fid::{fit_gaussian, frechet_distance, FidStats, COVARIANCE_EPSILON};
pub use linalg::{symmetric_eigen, SymmetricEigen};
pub use matching::{max_iou_closed, max_iou_open, max_iou_open_with, MatchConfig, MatchMode, MatchResult, MatchedPair};
pub use prf::{extraction_prf, failure_rate, format_percent, harmonic_mean, LabelMatcher, Prf};

use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("input is empty")]
    EmptyInput,
    #[error("need at least two samples, got {0}")]
    InsufficientSamples(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Pairwise (cascade) summation. The grouping depends only on the length of
/// the slice, so identical inputs always give bit-identical sums.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Sum that does not depend on the order of the inputs.
pub(crate) fn order_free_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    pairwise_sum(&values)
}
