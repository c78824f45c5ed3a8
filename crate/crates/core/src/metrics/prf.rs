//! Failure rate and element-extraction precision/recall/F-score.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::embedding::{cosine, EmbeddingProvider, ProviderError};
use super::MetricsError;
use crate::codec::ParseOutcome;
use crate::text::normalize_label;

/// Percentage of outcomes that failed to parse.
pub fn failure_rate(outcomes: &[ParseOutcome]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let failed = outcomes.iter().filter(|o| !o.is_success()).count();
    Ok(100.0 * failed as f64 / outcomes.len() as f64)
}

/// Three-decimal rendering used in reports.
pub fn format_percent(value: f64) -> String {
    alloc::format!("{value:.3}")
}

/// `2pr/(p+r)`, zero when both are zero.
pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// How two labels are judged to name the same element.
#[derive(Clone, Copy)]
pub enum LabelMatcher<'a> {
    /// Equality after lowercasing and whitespace collapsing.
    Exact,
    /// Embedding cosine at or above `threshold`.
    Embedding {
        provider: &'a dyn EmbeddingProvider,
        threshold: f64,
    },
}

/// Greedy one-to-one label matching. Generated labels are visited in order;
/// each takes the unused reference label with the highest similarity that
/// passes the matcher (lowest index on ties). Two empty lists give 1/1/1.
pub fn extraction_prf<S: AsRef<str>, T: AsRef<str>>(
    gen: &[S],
    reference: &[T],
    matcher: LabelMatcher<'_>,
) -> Result<Prf, ProviderError> {
    if gen.is_empty() && reference.is_empty() {
        return Ok(Prf {
            precision: 1.0,
            recall: 1.0,
            f_score: 1.0,
        });
    }
    let mut used = alloc::vec![false; reference.len()];
    let mut hits = 0usize;
    match matcher {
        LabelMatcher::Exact => {
            let refs: Vec<String> = reference.iter().map(|r| normalize_label(r.as_ref())).collect();
            for g in gen {
                let g = normalize_label(g.as_ref());
                if let Some(j) = (0..refs.len()).find(|&j| !used[j] && refs[j] == g) {
                    used[j] = true;
                    hits += 1;
                }
            }
        }
        LabelMatcher::Embedding { provider, threshold } => {
            let refs = reference
                .iter()
                .map(|r| provider.embed(r.as_ref()))
                .collect::<Result<Vec<_>, _>>()?;
            for g in gen {
                let ge = provider.embed(g.as_ref())?;
                let mut best: Option<(usize, f64)> = None;
                for (j, re) in refs.iter().enumerate() {
                    if used[j] {
                        continue;
                    }
                    let s = cosine(&ge, re);
                    if s >= threshold && best.is_none_or(|(_, b)| s > b) {
                        best = Some((j, s));
                    }
                }
                if let Some((j, _)) = best {
                    used[j] = true;
                    hits += 1;
                }
            }
        }
    }
    let ratio = |d: usize| if d == 0 { 0.0 } else { hits as f64 / d as f64 };
    let precision = ratio(gen.len());
    let recall = ratio(reference.len());
    Ok(Prf {
        precision,
        recall,
        f_score: harmonic_mean(precision, recall),
    })
}
