//! The text-to-layout loop.
//!
//! [`build_prompt`] turns a [`PromptSpec`] and retrieved demonstrations into
//! one prompt, [`plan_layout`] sends it through a [`ChatBackend`] and parses
//! the reply strictly, and [`Session`] keeps an append-only revision history
//! where messages are either applied as deterministic edits or routed to the
//! backend.

mod backend;
mod edit;
mod prompt;
mod retrieval;
mod session;
mod svg;

pub use backend::{plan_layout, BackendConfig, BackendError, ChatBackend, ChatMessage, PlanResult, Role, ScriptedBackend};
pub use edit::{apply_edit, parse_edit_command, Edge, EditCommand, EditError, EditOutcome, EditParse, Magnitude};
pub use prompt::{build_edit_prompt, build_prompt, format_instructions, PROMPT_VERSION, SYSTEM_PROMPT};
pub use retrieval::{
    embed_corpus, fixed_demonstrations, retrieve_demonstrations, Demonstration, IndexEntry, RetrievalError, RetrievalIndex,
};
pub use session::{step_session, Origin, Revision, Route, Session, SessionError, StepConfig};
pub use svg::render_svg;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::LayoutFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Closed,
    Open,
    VisualText,
    Graphic,
}

impl PlanMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlanMode::Closed => "closed",
            PlanMode::Open => "open",
            PlanMode::VisualText => "visual_text",
            PlanMode::Graphic => "graphic",
        }
    }
}

impl fmt::Display for PlanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for PlanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "closed" => Ok(PlanMode::Closed),
            "open" => Ok(PlanMode::Open),
            "visual_text" => Ok(PlanMode::VisualText),
            "graphic" => Ok(PlanMode::Graphic),
            other => Err(alloc::format!("unknown plan mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub caption: String,
    /// Present when the user lists the elements to place.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_elements: Option<Vec<String>>,
    pub format: LayoutFormat,
    pub mode: PlanMode,
    pub canvas_w: f64,
    pub canvas_h: f64,
}

impl PromptSpec {
    pub fn new(caption: impl Into<String>, format: LayoutFormat, mode: PlanMode) -> Self {
        Self {
            caption: caption.into(),
            target_elements: None,
            format,
            mode,
            canvas_w: 128.0,
            canvas_h: 128.0,
        }
    }

    pub fn with_targets<S: Into<String>>(mut self, targets: impl IntoIterator<Item = S>) -> Self {
        self.target_elements = Some(targets.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_canvas(mut self, w: f64, h: f64) -> Self {
        self.canvas_w = w;
        self.canvas_h = h;
        self
    }

    pub fn canvas_ok(&self) -> bool {
        self.canvas_w.is_finite() && self.canvas_h.is_finite() && self.canvas_w > 0.0 && self.canvas_h > 0.0
    }
}
