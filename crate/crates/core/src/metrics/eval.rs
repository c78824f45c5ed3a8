//! Corpus-level evaluation: alignment by prompt id, per-item scoring, and
//! aggregation into an [`EvalReport`].
//!
//! The three stages are public so callers can score items in parallel; the
//! aggregation only depends on the set of item scores, which are sorted by
//! id before summing.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::embedding::{EmbeddingProvider, ProviderError};
use super::features::featurize_layout;
use super::fid::{fit_gaussian, frechet_distance};
use super::matching::{max_iou_closed, max_iou_open_with, MatchConfig, MatchMode};
use super::pairwise_sum;
use super::prf::{extraction_prf, harmonic_mean, LabelMatcher};
use crate::codec::{FailureReason, ParseOutcome};
use crate::geometry::{BBox, Layout};

/// One generated output, keyed by the prompt it answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenItem {
    pub id: String,
    pub outcome: ParseOutcome,
}

/// One reference layout, keyed by prompt id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefItem {
    pub id: String,
    #[serde(alias = "target_layout")]
    pub layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Per-prompt scores. Metric fields are `None` for failed parses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDiagnostics {
    pub id: String,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure_reason: Option<FailureReason>,
    pub n_gen_elements: usize,
    pub n_ref_elements: usize,
    pub max_iou: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
}

/// Item diagnostics plus the feature vectors used for FID.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemScore {
    pub diagnostics: ItemDiagnostics,
    pub gen_features: Option<Vec<f64>>,
    pub ref_features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: MatchMode,
    pub n_generated: usize,
    pub n_reference: usize,
    pub n_success: usize,
    /// `None` when fewer than two samples exist on either side.
    pub fid: Option<f64>,
    /// Failures count as zero.
    pub max_iou: f64,
    /// Averaged over successful parses only.
    pub max_iou_success: f64,
    pub fail_percent: f64,
    pub precision: f64,
    pub recall: f64,
    /// Harmonic mean of `precision` and `recall`.
    pub f_score: f64,
    /// Mean of the per-item F-scores.
    pub mean_item_f_score: f64,
    pub items: Vec<ItemDiagnostics>,
}

/// Pairs generated and reference items by id, sorted by id. Both sides must
/// carry exactly the same set of unique ids.
pub fn align<'a>(gen: &'a [GenItem], refs: &'a [RefItem]) -> Result<Vec<(&'a GenItem, &'a RefItem)>, EvalError> {
    if refs.is_empty() {
        return Err(EvalError::Alignment("reference set is empty".into()));
    }
    let mut by_id: BTreeMap<&str, &RefItem> = BTreeMap::new();
    for r in refs {
        if by_id.insert(&r.id, r).is_some() {
            return Err(EvalError::Alignment(alloc::format!("duplicate reference id `{}`", r.id)));
        }
    }
    let mut seen: BTreeMap<&str, &GenItem> = BTreeMap::new();
    for g in gen {
        if !by_id.contains_key(g.id.as_str()) {
            return Err(EvalError::Alignment(alloc::format!("generated id `{}` has no reference", g.id)));
        }
        if seen.insert(&g.id, g).is_some() {
            return Err(EvalError::Alignment(alloc::format!("duplicate generated id `{}`", g.id)));
        }
    }
    if let Some(missing) = by_id.keys().find(|k| !seen.contains_key(*k)) {
        return Err(EvalError::Alignment(alloc::format!("reference id `{missing}` has no generation")));
    }
    Ok(seen.into_iter().map(|(id, g)| (g, by_id[id])).collect())
}

/// Rescales `layout` onto the given canvas.
fn rescale(layout: &Layout, w: f64, h: f64) -> Layout {
    if layout.canvas_w == w && layout.canvas_h == h {
        return layout.clone();
    }
    let (sx, sy) = (w / layout.canvas_w, h / layout.canvas_h);
    let mut out = layout.clone();
    out.canvas_w = w;
    out.canvas_h = h;
    for e in &mut out.elements {
        let b = e.bbox;
        e.bbox = BBox::new(b.left * sx, b.top * sy, b.right * sx, b.bottom * sy);
    }
    out
}

pub fn score_item(
    gen: &GenItem,
    reference: &RefItem,
    mode: MatchMode,
    provider: &dyn EmbeddingProvider,
    cfg: &MatchConfig,
) -> Result<ItemScore, EvalError> {
    let ref_layout = &reference.layout;
    let ref_features = featurize_layout(ref_layout, provider)?;
    let mut diagnostics = ItemDiagnostics {
        id: gen.id.clone(),
        success: gen.outcome.is_success(),
        failure_reason: gen.outcome.failure_reason(),
        n_gen_elements: 0,
        n_ref_elements: ref_layout.len(),
        max_iou: None,
        precision: None,
        recall: None,
        f_score: None,
    };
    let Some(parsed) = gen.outcome.layout() else {
        return Ok(ItemScore {
            diagnostics,
            gen_features: None,
            ref_features,
        });
    };
    let layout = rescale(parsed, ref_layout.canvas_w, ref_layout.canvas_h);
    let (m, matcher) = match mode {
        MatchMode::Closed => (max_iou_closed(&layout, ref_layout), LabelMatcher::Exact),
        MatchMode::Open => (
            max_iou_open_with(&layout, ref_layout, provider, cfg)?,
            LabelMatcher::Embedding {
                provider,
                threshold: cfg.prf_threshold,
            },
        ),
    };
    let prf = extraction_prf(&layout.labels(), &ref_layout.labels(), matcher)?;
    diagnostics.n_gen_elements = layout.len();
    diagnostics.max_iou = Some(m.max_iou);
    diagnostics.precision = Some(prf.precision);
    diagnostics.recall = Some(prf.recall);
    diagnostics.f_score = Some(prf.f_score);
    Ok(ItemScore {
        diagnostics,
        gen_features: Some(featurize_layout(&layout, provider)?),
        ref_features,
    })
}

/// Aggregates item scores. Order of `scores` does not matter.
pub fn summarize(mut scores: Vec<ItemScore>, mode: MatchMode) -> Result<EvalReport, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Alignment("reference set is empty".into()));
    }
    scores.sort_by(|a, b| a.diagnostics.id.cmp(&b.diagnostics.id));
    let n = scores.len();
    let ok: Vec<&ItemDiagnostics> = scores.iter().map(|s| &s.diagnostics).filter(|d| d.success).collect();
    let ns = ok.len();
    let sum = |f: &dyn Fn(&ItemDiagnostics) -> Option<f64>| {
        let v: Vec<f64> = ok.iter().filter_map(|d| f(d)).collect();
        pairwise_sum(&v)
    };
    let avg = |total: f64, d: usize| if d == 0 { 0.0 } else { total / d as f64 };
    let iou_total = sum(&|d| d.max_iou);
    let precision = avg(sum(&|d| d.precision), ns);
    let recall = avg(sum(&|d| d.recall), ns);

    let gen_feats: Vec<Vec<f64>> = scores.iter().filter_map(|s| s.gen_features.clone()).collect();
    let ref_feats: Vec<Vec<f64>> = scores.iter().map(|s| s.ref_features.clone()).collect();
    let fid = match (fit_gaussian(&gen_feats), fit_gaussian(&ref_feats)) {
        (Ok(a), Ok(b)) => frechet_distance(&a, &b).ok(),
        _ => None,
    };

    Ok(EvalReport {
        mode,
        n_generated: n,
        n_reference: n,
        n_success: ns,
        fid,
        max_iou: avg(iou_total, n),
        max_iou_success: avg(iou_total, ns),
        fail_percent: 100.0 * (n - ns) as f64 / n as f64,
        precision,
        recall,
        f_score: harmonic_mean(precision, recall),
        mean_item_f_score: avg(sum(&|d| d.f_score), ns),
        items: scores.into_iter().map(|s| s.diagnostics).collect(),
    })
}

/// Sequential convenience wrapper over [`align`], [`score_item`] and
/// [`summarize`].
pub fn evaluate_corpus(
    gen: &[GenItem],
    refs: &[RefItem],
    mode: MatchMode,
    provider: &dyn EmbeddingProvider,
    cfg: &MatchConfig,
) -> Result<EvalReport, EvalError> {
    let pairs = align(gen, refs)?;
    let scores = pairs
        .into_iter()
        .map(|(g, r)| score_item(g, r, mode, provider, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    summarize(scores, mode)
}
