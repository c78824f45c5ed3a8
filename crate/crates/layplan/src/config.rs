//! Run configuration from an optional TOML file. Command-line flags
//! override file values, which override built-in defaults.
//!
//! ```toml
//! seed = 7
//! workers = 4
//! formats = ["int128", "json"]
//!
//! [filter]
//! tau_a = 0.1
//!
//! [backend]
//! model = "my-model"
//! timeout_ms = 30000
//!
//! [eval]
//! similarity_floor = 0.2
//! ```
//!
//! Endpoints and credentials are rejected here; they come from the
//! environment.

use std::path::Path;

use clap::Args;
use layplan_core::codec::LayoutFormat;
use layplan_core::metrics::MatchConfig;
use layplan_core::pipeline::FilterConfig;
use layplan_core::planner::BackendConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub formats: Option<Vec<LayoutFormat>>,
    pub filter: FilterOverrides,
    pub backend: BackendOverrides,
    pub eval: EvalOverrides,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigFileError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigFileError::Read {
            path: p.clone(),
            message: e.to_string(),
        })?;
        Self::parse(&text).map_err(|message| ConfigFileError::Parse { path: p, message })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Filter thresholds; unset fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct FilterOverrides {
    /// Minimum object area relative to the largest box [default: 0.1]
    #[arg(long)]
    pub tau_a: Option<f64>,
    /// Minimum longer side relative to the longer canvas side [default: 0.2]
    #[arg(long)]
    pub tau_l: Option<f64>,
    /// Maximum pairwise IoU among kept objects [default: 0.01]
    #[arg(long)]
    pub tau_o: Option<f64>,
    /// Graphic elements below this area fraction merge into the background [default: 0.01]
    #[arg(long)]
    pub crello_min_area: Option<f64>,
    /// Graphic elements above this transparent fraction merge into the background [default: 0.7]
    #[arg(long)]
    pub crello_max_transparent: Option<f64>,
    /// Graphic designs with more remaining elements are dropped [default: 10]
    #[arg(long)]
    pub crello_max_elements: Option<usize>,
    /// Images with more OCR words are dropped [default: 10]
    #[arg(long)]
    pub max_ocr_words: Option<usize>,
}

impl FilterOverrides {
    /// `self` wins over `base`.
    pub fn or(&self, base: &FilterOverrides) -> FilterOverrides {
        FilterOverrides {
            tau_a: self.tau_a.or(base.tau_a),
            tau_l: self.tau_l.or(base.tau_l),
            tau_o: self.tau_o.or(base.tau_o),
            crello_min_area: self.crello_min_area.or(base.crello_min_area),
            crello_max_transparent: self.crello_max_transparent.or(base.crello_max_transparent),
            crello_max_elements: self.crello_max_elements.or(base.crello_max_elements),
            max_ocr_words: self.max_ocr_words.or(base.max_ocr_words),
        }
    }

    pub fn resolve(&self) -> FilterConfig {
        let d = FilterConfig::default();
        FilterConfig {
            tau_a: self.tau_a.unwrap_or(d.tau_a),
            tau_l: self.tau_l.unwrap_or(d.tau_l),
            tau_o: self.tau_o.unwrap_or(d.tau_o),
            crello_min_area: self.crello_min_area.unwrap_or(d.crello_min_area),
            crello_max_transparent: self.crello_max_transparent.unwrap_or(d.crello_max_transparent),
            crello_max_elements: self.crello_max_elements.unwrap_or(d.crello_max_elements),
            max_ocr_words: self.max_ocr_words.unwrap_or(d.max_ocr_words),
            canvas_side: d.canvas_side,
        }
    }
}

/// Generation settings for the chat backend.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct BackendOverrides {
    /// Model name sent to the backend [default: "default"]
    #[arg(long)]
    pub model: Option<String>,
    /// Sampling temperature [default: 0]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Reply token limit [default: 1024]
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Per-request timeout in milliseconds [default: 60000]
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Repair turns after an unparsable reply [default: 0 for `plan`, 1 for `serve`]
    #[arg(long)]
    pub retries: Option<u32>,
}

impl BackendOverrides {
    pub fn or(&self, base: &BackendOverrides) -> BackendOverrides {
        BackendOverrides {
            model: self.model.clone().or_else(|| base.model.clone()),
            temperature: self.temperature.or(base.temperature),
            max_tokens: self.max_tokens.or(base.max_tokens),
            timeout_ms: self.timeout_ms.or(base.timeout_ms),
            retries: self.retries.or(base.retries),
        }
    }

    pub fn resolve(&self, default_retries: u32) -> BackendConfig {
        let d = BackendConfig::default();
        BackendConfig {
            model: self.model.clone().unwrap_or(d.model),
            temperature: self.temperature.unwrap_or(d.temperature),
            max_tokens: self.max_tokens.unwrap_or(d.max_tokens),
            timeout_ms: self.timeout_ms.unwrap_or(d.timeout_ms),
            retries: self.retries.unwrap_or(default_retries),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOverrides {
    /// Open-set pairs below this label similarity are not matched [default: 0.2]
    #[arg(long)]
    pub similarity_floor: Option<f64>,
    /// Label similarity at or above which open-set labels count as extracted [default: 0.9]
    #[arg(long)]
    pub prf_threshold: Option<f64>,
}

impl EvalOverrides {
    pub fn or(&self, base: &EvalOverrides) -> EvalOverrides {
        EvalOverrides {
            similarity_floor: self.similarity_floor.or(base.similarity_floor),
            prf_threshold: self.prf_threshold.or(base.prf_threshold),
        }
    }

    pub fn resolve(&self) -> MatchConfig {
        let d = MatchConfig::default();
        MatchConfig {
            similarity_floor: self.similarity_floor.unwrap_or(d.similarity_floor),
            prf_threshold: self.prf_threshold.unwrap_or(d.prf_threshold),
        }
    }
}
