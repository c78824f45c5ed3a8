//! Model outputs awaiting evaluation.
//!
//! One JSON object per line: `{"id", "text", "format"?, "canvas_w"?,
//! "canvas_h"?}`. `text` is the raw reply. Missing `format` falls back to
//! the caller's default; a missing canvas falls back to the reference
//! canvas with the same id. Unparsable replies become failure outcomes.

use std::collections::HashMap;

use layplan_core::codec::{parse_named, LayoutFormat};
use layplan_core::metrics::{GenItem, RefItem};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenLine {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canvas_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canvas_h: Option<f64>,
}

pub fn decode_generations(lines: &[GenLine], default_format: LayoutFormat, refs: &[RefItem]) -> Vec<GenItem> {
    let canvases: HashMap<&str, (f64, f64)> = refs
        .iter()
        .map(|r| (r.id.as_str(), (r.layout.canvas_w, r.layout.canvas_h)))
        .collect();
    lines
        .iter()
        .map(|g| {
            let (rw, rh) = canvases.get(g.id.as_str()).copied().unwrap_or((128.0, 128.0));
            let fmt = g.format.as_deref().unwrap_or(default_format.name());
            GenItem {
                id: g.id.clone(),
                outcome: parse_named(&g.text, fmt, g.canvas_w.unwrap_or(rw), g.canvas_h.unwrap_or(rh)),
            }
        })
        .collect()
}
