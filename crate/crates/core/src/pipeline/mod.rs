//! Dataset construction: source records in, instruction records out.
//!
//! Per source kind:
//!
//! - `coco`: normalize to the square canvas, select objects, reject on
//!   overlap, reject crowd annotations; emit layout planning, keyword
//!   augmentation (when augmented labels are supplied) and layout shift.
//! - `crello`: merge tiny or mostly transparent elements into the
//!   background, reject designs with too many elements; emit layout planning
//!   and layout shift on the original canvas.
//! - `visual_text`: reject on too many OCR words; emit the explicit keyword
//!   split prompt and the free segmentation prompt over one target.
//!
//! Every record is expanded once per requested format.

mod shift;

pub use shift::{render_template, shift_augment, ShiftError, ShiftInstruction, MIN_SHIFT_FRACTION, SHIFT_TEMPLATES};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{serialize, LayoutFormat};
use crate::geometry::{max_pairwise_iou, normalize_to_square, validate, Element, ElementKind, Layout};
use crate::seed::derive_seed;

/// Side of the square canvas source layouts are normalized onto.
pub const CANONICAL_SIDE: f64 = 128.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Coco,
    Crello,
    VisualText,
}

impl SourceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceKind::Coco => "coco",
            SourceKind::Crello => "crello",
            SourceKind::VisualText => "visual_text",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "coco" => Ok(SourceKind::Coco),
            "crello" => Ok(SourceKind::Crello),
            "visual_text" => Ok(SourceKind::VisualText),
            other => Err(format!("unknown source kind `{other}`")),
        }
    }
}

/// One annotated image or design before any filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    pub source: SourceKind,
    pub image_w: f64,
    pub image_h: f64,
    pub elements: Vec<Element>,
    #[serde(default)]
    pub captions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_words: Option<Vec<String>>,
    /// Element id to open-vocabulary phrase, supplied by an annotator.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub augmented_labels: BTreeMap<String, String>,
}

impl SourceRecord {
    pub fn layout(&self) -> Layout {
        Layout::with_elements(self.image_w, self.image_h, self.elements.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Minimum area relative to the largest box.
    pub tau_a: f64,
    /// Minimum longer side relative to the canvas side.
    pub tau_l: f64,
    /// Maximum pairwise IoU.
    pub tau_o: f64,
    pub crello_min_area: f64,
    pub crello_max_transparent: f64,
    pub crello_max_elements: usize,
    pub max_ocr_words: usize,
    pub canvas_side: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            tau_a: 0.1,
            tau_l: 0.2,
            tau_o: 0.01,
            crello_min_area: 0.01,
            crello_max_transparent: 0.70,
            crello_max_elements: 10,
            max_ocr_words: 10,
            canvas_side: CANONICAL_SIDE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid filter configuration: {0}")]
pub struct ConfigError(pub String);

impl FilterConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        let unit = [
            ("tau_a", self.tau_a),
            ("tau_l", self.tau_l),
            ("tau_o", self.tau_o),
            ("crello_min_area", self.crello_min_area),
            ("crello_max_transparent", self.crello_max_transparent),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ConfigError(format!("{name} = {v} is outside (0, 1]")));
            }
        }
        if self.crello_max_elements == 0 || self.max_ocr_words == 0 {
            return Err(ConfigError("element and word limits must be positive".into()));
        }
        if !(self.canvas_side.is_finite() && self.canvas_side > 0.0) {
            return Err(ConfigError(format!("canvas_side = {} must be positive", self.canvas_side)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    LayoutPlanning,
    KeywordsAug,
    LayoutShift,
    TextSplit,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::LayoutPlanning => "layout_planning",
            Task::KeywordsAug => "keywords_aug",
            Task::LayoutShift => "layout_shift",
            Task::TextSplit => "text_split",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub source_id: String,
    pub source: SourceKind,
    /// Seed of the per-record generator; present for augmented records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftInstruction>,
    /// Ids of elements merged into the background.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merged_into_background: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub task: Task,
    pub prompt: String,
    pub target_layout: Layout,
    pub format: LayoutFormat,
    /// `target_layout` rendered in `format`.
    pub target_text: String,
    pub metadata: RecordMetadata,
}

/// The rule that removed a source record, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropRule {
    InvalidSource,
    EmptyAfterSelection,
    Overlap,
    Crowd,
    CrelloTooManyElements,
    TooManyOcrWords,
}

impl DropRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropRule::InvalidSource => "invalid_source",
            DropRule::EmptyAfterSelection => "empty_after_selection",
            DropRule::Overlap => "overlap",
            DropRule::Crowd => "crowd",
            DropRule::CrelloTooManyElements => "crello_too_many_elements",
            DropRule::TooManyOcrWords => "too_many_ocr_words",
        }
    }
}

// ---- filters -------------------------------------------------------------

/// Keeps elements whose area is at least `tau_a` of the largest area and
/// whose longer side is at least `tau_l` of the canvas side. Order is kept.
pub fn select_objects(layout: &Layout, cfg: &FilterConfig) -> Layout {
    let largest = layout.elements.iter().map(|e| e.bbox.area()).fold(0.0, f64::max);
    let side = layout.canvas_w.max(layout.canvas_h);
    let elements = layout
        .elements
        .iter()
        .filter(|e| {
            let b = &e.bbox;
            b.area() >= cfg.tau_a * largest && b.width().max(b.height()) >= cfg.tau_l * side
        })
        .cloned()
        .collect();
    Layout::with_elements(layout.canvas_w, layout.canvas_h, elements)
}

pub fn overlap_ok(layout: &Layout, cfg: &FilterConfig) -> bool {
    max_pairwise_iou(layout) <= cfg.tau_o
}

pub fn crowd_ok(record: &SourceRecord) -> bool {
    !record.elements.iter().any(|e| e.attrs.is_crowd == Some(true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrelloLayout {
    pub layout: Layout,
    pub merged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{remaining} elements remain after merging")]
pub struct Rejected {
    pub remaining: usize,
}

/// Merges background elements, tiny elements and mostly transparent
/// elements into the background; rejects designs with too many survivors.
/// A missing area fraction is computed from the box.
pub fn preprocess_crello(record: &SourceRecord, cfg: &FilterConfig) -> Result<CrelloLayout, Rejected> {
    let canvas_area = record.image_w * record.image_h;
    let mut kept = Vec::new();
    let mut merged = Vec::new();
    for e in &record.elements {
        let area = e.attrs.area_fraction.unwrap_or_else(|| {
            if canvas_area > 0.0 {
                e.bbox.area() / canvas_area
            } else {
                0.0
            }
        });
        let transparent = e.attrs.transparent_fraction.unwrap_or(0.0);
        if e.kind == ElementKind::Background || area < cfg.crello_min_area || transparent > cfg.crello_max_transparent {
            merged.push(e.id.clone());
        } else {
            kept.push(e.clone());
        }
    }
    if kept.len() > cfg.crello_max_elements {
        return Err(Rejected { remaining: kept.len() });
    }
    Ok(CrelloLayout {
        layout: Layout::with_elements(record.image_w, record.image_h, kept),
        merged,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextPairError {
    #[error("{count} OCR words exceed the limit of {limit}")]
    TooManyWords { count: usize, limit: usize },
    #[error("record is not a visual-text record")]
    WrongSource,
    #[error("source canvas is degenerate")]
    DegenerateSource,
}

// ---- prompts -------------------------------------------------------------

fn caption(record: &SourceRecord, labels: &[&str]) -> String {
    match record.captions.iter().map(|c| c.trim()).find(|c| !c.is_empty()) {
        Some(c) => c.to_string(),
        None => format!("A layout containing {}.", labels.join(", ")),
    }
}

fn quoted_list(items: &[&str]) -> String {
    items.iter().map(|s| format!("\"{s}\"")).collect::<Vec<_>>().join(", ")
}

fn planning_prompt(record: &SourceRecord, layout: &Layout) -> String {
    caption(record, &layout.labels())
}

fn keywords_prompt(record: &SourceRecord, phrases: &[&str]) -> String {
    format!("{}\nObjects: {}", caption(record, phrases), phrases.join("; "))
}

fn crello_prompt(record: &SourceRecord, layout: &Layout) -> String {
    let mut s = caption(record, &layout.labels());
    s.push_str(&format!("\nCanvas: {} x {}\nElements:", layout.canvas_w, layout.canvas_h));
    for e in &layout.elements {
        s.push_str(&format!(
            "\n- {} ({}, {} x {})",
            e.label,
            e.kind.as_str(),
            libm::round(e.bbox.width()),
            libm::round(e.bbox.height())
        ));
    }
    s
}

fn shift_prompt(instruction: &str, current: &Layout, fmt: LayoutFormat) -> String {
    format!("{instruction}\nCurrent layout:\n{}", serialize(current, fmt))
}

/// Two prompts over one target: the first lists the keyword split, the
/// second leaves segmentation to the model.
pub fn build_text_prompt_pair(record: &SourceRecord, cfg: &FilterConfig) -> Result<(String, String, Layout), TextPairError> {
    if record.source != SourceKind::VisualText {
        return Err(TextPairError::WrongSource);
    }
    let words = record.ocr_words.as_deref().unwrap_or(&[]);
    if words.len() > cfg.max_ocr_words {
        return Err(TextPairError::TooManyWords {
            count: words.len(),
            limit: cfg.max_ocr_words,
        });
    }
    let elements: Vec<Element> = record
        .elements
        .iter()
        .filter(|e| !words.is_empty() || e.kind != ElementKind::TextSpan)
        .cloned()
        .collect();
    let target = normalize_to_square(record.image_w, record.image_h, &elements, cfg.canvas_side)
        .map_err(|_| TextPairError::DegenerateSource)?;
    let spans: Vec<&str> = target
        .elements
        .iter()
        .filter(|e| e.kind == ElementKind::TextSpan)
        .map(|e| e.label.as_str())
        .collect();
    let base = caption(record, &target.labels());
    let split = if spans.is_empty() {
        format!("{base}\nText elements: none")
    } else {
        format!("{base}\nText elements: {}", quoted_list(&spans))
    };
    let free = format!("{base}\nSplit the text into separate text elements as needed.");
    Ok((split, free, target))
}

// ---- driver ---------------------------------------------------------------

/// Output of one source record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordResult {
    pub records: Vec<InstructionRecord>,
    pub dropped: Option<DropRule>,
    pub shift_failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub input_records: usize,
    pub kept_records: usize,
    pub output_records: usize,
    /// Drops attributed to the first failing rule.
    pub dropped: BTreeMap<DropRule, usize>,
    /// Kept records for which no shift was possible.
    pub shift_failures: usize,
    pub per_task: BTreeMap<Task, usize>,
    pub per_source: BTreeMap<SourceKind, usize>,
}

impl PipelineStats {
    pub fn absorb(&mut self, source: SourceKind, r: &RecordResult) {
        self.input_records += 1;
        match r.dropped {
            Some(rule) => *self.dropped.entry(rule).or_default() += 1,
            None => {
                self.kept_records += 1;
                *self.per_source.entry(source).or_default() += 1;
            }
        }
        if r.shift_failed {
            self.shift_failures += 1;
        }
        self.output_records += r.records.len();
        for rec in &r.records {
            *self.per_task.entry(rec.task).or_default() += 1;
        }
    }

    pub fn total_dropped(&self) -> usize {
        self.dropped.values().sum()
    }
}

struct Emitter<'a> {
    record: &'a SourceRecord,
    formats: &'a [LayoutFormat],
    out: Vec<InstructionRecord>,
}

impl Emitter<'_> {
    fn emit(&mut self, task: Task, prompt: &dyn Fn(LayoutFormat) -> String, target: &Layout, meta: &RecordMetadata) {
        for &fmt in self.formats {
            self.out.push(InstructionRecord {
                id: format!("{}:{}:{}", self.record.id, task.as_str(), fmt.name()),
                task,
                prompt: prompt(fmt),
                target_layout: target.clone(),
                format: fmt,
                target_text: serialize(target, fmt),
                metadata: meta.clone(),
            });
        }
    }
}

fn drop(rule: DropRule) -> RecordResult {
    RecordResult {
        records: Vec::new(),
        dropped: Some(rule),
        shift_failed: false,
    }
}

/// Runs every rule for one source record. The augmentation seed is derived
/// from `(seed, record.id)`, so results do not depend on processing order.
pub fn process_record(record: &SourceRecord, cfg: &FilterConfig, formats: &[LayoutFormat], seed: u64) -> RecordResult {
    if !validate(&record.layout()).is_empty() {
        return drop(DropRule::InvalidSource);
    }
    let aug_seed = derive_seed(seed, &record.id);
    let base_meta = RecordMetadata {
        source_id: record.id.clone(),
        source: record.source,
        augmentation_seed: None,
        shift: None,
        merged_into_background: Vec::new(),
    };
    let mut em = Emitter {
        record,
        formats,
        out: Vec::new(),
    };
    let mut shift_failed = false;

    let mut add_shift = |em: &mut Emitter<'_>, layout: &Layout, meta: &RecordMetadata| match shift_augment(layout, aug_seed) {
        Ok((ins, moved)) => {
            let mut m = meta.clone();
            m.augmentation_seed = Some(aug_seed);
            let text = ins.instruction_text.clone();
            m.shift = Some(ins);
            em.emit(Task::LayoutShift, &|fmt| shift_prompt(&text, layout, fmt), &moved, &m);
        }
        Err(_) => shift_failed = true,
    };

    match record.source {
        SourceKind::Coco => {
            let Ok(norm) = normalize_to_square(record.image_w, record.image_h, &record.elements, cfg.canvas_side) else {
                return drop(DropRule::InvalidSource);
            };
            let selected = select_objects(&norm, cfg);
            if selected.is_empty() {
                return drop(DropRule::EmptyAfterSelection);
            }
            if !overlap_ok(&selected, cfg) {
                return drop(DropRule::Overlap);
            }
            if !crowd_ok(record) {
                return drop(DropRule::Crowd);
            }
            em.emit(Task::LayoutPlanning, &|_| planning_prompt(record, &selected), &selected, &base_meta);
            let phrases: Option<Vec<&str>> = selected
                .elements
                .iter()
                .map(|e| record.augmented_labels.get(&e.id).map(|s| s.as_str()).filter(|s| !s.trim().is_empty()))
                .collect();
            if let Some(phrases) = phrases {
                let mut aug = selected.clone();
                for (e, p) in aug.elements.iter_mut().zip(&phrases) {
                    e.label = p.to_string();
                }
                em.emit(Task::KeywordsAug, &|_| keywords_prompt(record, &phrases), &aug, &base_meta);
            }
            add_shift(&mut em, &selected, &base_meta);
        }
        SourceKind::Crello => match preprocess_crello(record, cfg) {
            Err(_) => return drop(DropRule::CrelloTooManyElements),
            Ok(c) => {
                if c.layout.is_empty() {
                    return drop(DropRule::EmptyAfterSelection);
                }
                let meta = RecordMetadata {
                    merged_into_background: c.merged.clone(),
                    ..base_meta.clone()
                };
                em.emit(Task::LayoutPlanning, &|_| crello_prompt(record, &c.layout), &c.layout, &meta);
                add_shift(&mut em, &c.layout, &meta);
            }
        },
        SourceKind::VisualText => match build_text_prompt_pair(record, cfg) {
            Err(TextPairError::TooManyWords { .. }) => return drop(DropRule::TooManyOcrWords),
            Err(_) => return drop(DropRule::InvalidSource),
            Ok((split, free, target)) => {
                em.emit(Task::TextSplit, &|_| split.clone(), &target, &base_meta);
                em.emit(Task::LayoutPlanning, &|_| free.clone(), &target, &base_meta);
            }
        },
    }
    RecordResult {
        records: em.out,
        dropped: None,
        shift_failed,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no output formats requested")]
    NoFormats,
}

/// Sequential pipeline over all records, output in input order.
pub fn run_pipeline(
    records: &[SourceRecord],
    cfg: &FilterConfig,
    formats: &[LayoutFormat],
    seed: u64,
) -> Result<(Vec<InstructionRecord>, PipelineStats), PipelineError> {
    cfg.check()?;
    if formats.is_empty() {
        return Err(PipelineError::NoFormats);
    }
    let mut stats = PipelineStats::default();
    let mut out = Vec::new();
    for r in records {
        let res = process_record(r, cfg, formats, seed);
        stats.absorb(r.source, &res);
        out.extend(res.records);
    }
    Ok((out, stats))
}
