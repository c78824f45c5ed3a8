//! Demonstration retrieval by prompt-embedding cosine similarity.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{serialize, LayoutFormat};
use crate::geometry::{BBox, Element, Layout};
use crate::metrics::{cosine, EmbeddingProvider, ProviderError};
use crate::pipeline::InstructionRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub source_id: String,
    pub prompt_text: String,
    /// Layout rendered in the session format.
    pub layout_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub prompt: String,
    pub layout: Layout,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalIndex {
    pub entries: Vec<IndexEntry>,
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

pub fn embed_corpus(corpus: &[InstructionRecord], provider: &dyn EmbeddingProvider) -> Result<RetrievalIndex, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let entries = corpus
        .iter()
        .map(|r| {
            Ok(IndexEntry {
                id: r.id.clone(),
                prompt: r.prompt.clone(),
                layout: r.target_layout.clone(),
                vector: provider.embed(&r.prompt)?,
            })
        })
        .collect::<Result<Vec<_>, ProviderError>>()?;
    Ok(RetrievalIndex { entries })
}

/// Top `k` entries by cosine similarity to `query` (ties by id). `k = 0`
/// returns the three fixed demonstrations.
pub fn retrieve_demonstrations(
    query: &str,
    index: &RetrievalIndex,
    k: usize,
    format: LayoutFormat,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Demonstration>, ProviderError> {
    if k == 0 {
        return Ok(fixed_demonstrations(format));
    }
    let q = provider.embed(query)?;
    let mut scored: Vec<(f64, &IndexEntry)> = index.entries.iter().map(|e| (cosine(&q, &e.vector), e)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(_, e)| Demonstration {
            source_id: e.id.clone(),
            prompt_text: e.prompt.clone(),
            layout_text: serialize(&e.layout, format),
        })
        .collect())
}

fn fixed_layouts() -> [(&'static str, &'static str, Layout); 3] {
    let o = |id: &str, label: &str, b: [f64; 4]| Element::object(id, label, BBox::new(b[0], b[1], b[2], b[3]));
    [
        (
            "fixed-1",
            "A dog sits next to a parked bicycle on a sunny street.",
            Layout::with_elements(
                128.,
                128.,
                vec![o("e0", "dog", [8., 60., 52., 120.]), o("e1", "bicycle", [64., 44., 124., 118.])],
            ),
        ),
        (
            "fixed-2",
            "A laptop on a desk with a cup of coffee to its right.",
            Layout::with_elements(
                128.,
                128.,
                vec![o("e0", "laptop", [16., 40., 84., 96.]), o("e1", "cup", [96., 68., 120., 100.])],
            ),
        ),
        (
            "fixed-3",
            "A beach poster with the words SUMMER SALE above an umbrella.",
            Layout::with_elements(
                128.,
                128.,
                vec![
                    Element::text("e0", "SUMMER SALE", BBox::new(16., 8., 112., 32.)),
                    o("e1", "umbrella", [34., 48., 94., 120.]),
                ],
            ),
        ),
    ]
}

/// The three demonstrations used when no retrieval corpus is consulted.
pub fn fixed_demonstrations(format: LayoutFormat) -> Vec<Demonstration> {
    fixed_layouts()
        .into_iter()
        .map(|(id, prompt, layout)| Demonstration {
            source_id: id.into(),
            prompt_text: prompt.into(),
            layout_text: serialize(&layout, format),
        })
        .collect()
}
