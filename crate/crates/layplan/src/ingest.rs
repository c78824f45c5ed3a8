//! Schema adapters for source annotations.
//!
//! - COCO-style JSON: `images`, `annotations` (with `bbox` as
//!   `[x, y, width, height]` and `iscrowd`), `categories`, plus optional
//!   `captions` and `augmented_labels` arrays.
//! - Line-delimited source records for Crello-style designs and
//!   visual-text images.
//!
//! Unknown fields are ignored. Records missing mandatory fields are skipped
//! and counted; malformed JSON is a [`SchemaError`] with its locus.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use layplan_core::geometry::{Attrs, BBox, Element, ElementKind};
use layplan_core::pipeline::{SourceKind, SourceRecord};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::io::{read_lines, read_to_string, IoError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{locus}: {message}")]
pub struct SchemaError {
    /// `line N` for line-delimited input, a JSON path for documents.
    pub locus: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    #[serde(skip)]
    pub records: Vec<SourceRecord>,
    pub record_count: usize,
    pub skipped_records: usize,
    pub skipped_annotations: usize,
    pub warnings: Vec<String>,
}

pub fn ingest(path: &Path, kind: SourceKind) -> Result<IngestReport, IngestError> {
    let mut report = match kind {
        SourceKind::Coco => ingest_coco(&read_to_string(path)?)?,
        SourceKind::Crello | SourceKind::VisualText => {
            let lines = read_lines(path)?;
            ingest_records(lines.iter().map(|(n, l)| (*n, l.as_str())), kind)?
        }
    };
    report.record_count = report.records.len();
    Ok(report)
}

fn schema(locus: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError {
        locus: locus.into(),
        message: message.into(),
    }
}

// ---- COCO -------------------------------------------------------------

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    width: f64,
    height: f64,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: Option<u8>,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

#[derive(Deserialize)]
struct CocoCaption {
    image_id: u64,
    caption: String,
}

#[derive(Deserialize)]
struct CocoAugmented {
    annotation_id: u64,
    label: String,
}

fn typed<T: for<'de> Deserialize<'de>>(v: &Value) -> Option<T> {
    serde_json::from_value(v.clone()).ok()
}

fn array<'a>(doc: &'a Value, key: &str, required: bool) -> Result<&'a [Value], SchemaError> {
    match doc.get(key) {
        Some(Value::Array(a)) => Ok(a),
        None if !required => Ok(&[]),
        Some(_) => Err(schema(format!("$.{key}"), "expected an array")),
        None => Err(schema(format!("$.{key}"), "missing mandatory array")),
    }
}

pub fn ingest_coco(text: &str) -> Result<IngestReport, SchemaError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| schema(format!("line {}", e.line()), e.to_string()))?;
    let mut report = IngestReport::default();

    let mut categories = HashMap::new();
    for (i, v) in array(&doc, "categories", true)?.iter().enumerate() {
        match typed::<CocoCategory>(v) {
            Some(c) => {
                categories.insert(c.id, c.name);
            }
            None => report.warnings.push(format!("$.categories[{i}]: skipped")),
        }
    }

    let mut images: Vec<CocoImage> = Vec::new();
    for (i, v) in array(&doc, "images", true)?.iter().enumerate() {
        match typed::<CocoImage>(v) {
            Some(img) => images.push(img),
            None => {
                report.skipped_records += 1;
                report.warnings.push(format!("$.images[{i}]: missing id, width or height"));
            }
        }
    }

    let mut captions: HashMap<u64, Vec<String>> = HashMap::new();
    for v in array(&doc, "captions", false)? {
        if let Some(c) = typed::<CocoCaption>(v) {
            captions.entry(c.image_id).or_default().push(c.caption);
        }
    }
    let mut augmented: HashMap<u64, String> = HashMap::new();
    for v in array(&doc, "augmented_labels", false)? {
        if let Some(a) = typed::<CocoAugmented>(v) {
            augmented.insert(a.annotation_id, a.label);
        }
    }

    let sizes: HashMap<u64, (f64, f64)> = images.iter().map(|i| (i.id, (i.width, i.height))).collect();
    let mut per_image: HashMap<u64, Vec<(u64, Element)>> = HashMap::new();
    for (i, v) in array(&doc, "annotations", true)?.iter().enumerate() {
        let ann = typed::<CocoAnnotation>(v);
        let Some(ann) = ann.filter(|a| a.bbox.iter().all(|x| x.is_finite()) && a.bbox[2] >= 0.0 && a.bbox[3] >= 0.0) else {
            report.skipped_annotations += 1;
            report.warnings.push(format!("$.annotations[{i}]: malformed"));
            continue;
        };
        let (Some(&(w, h)), Some(name)) = (sizes.get(&ann.image_id), categories.get(&ann.category_id)) else {
            report.skipped_annotations += 1;
            report.warnings.push(format!("$.annotations[{i}]: unknown image or category"));
            continue;
        };
        let [x, y, bw, bh] = ann.bbox;
        let bbox = BBox::from_xywh(x, y, bw, bh).clamped(w, h);
        let attrs = Attrs {
            is_crowd: ann.iscrowd.map(|c| c != 0),
            ..Attrs::default()
        };
        let el = Element::new(format!("a{}", ann.id), ElementKind::VisualObject, name.clone(), bbox).with_attrs(attrs);
        per_image.entry(ann.image_id).or_default().push((ann.id, el));
    }

    images.sort_by_key(|i| i.id);
    for img in images {
        let mut anns = per_image.remove(&img.id).unwrap_or_default();
        anns.sort_by_key(|(id, _)| *id);
        let augmented_labels: BTreeMap<String, String> = anns
            .iter()
            .filter_map(|(id, e)| augmented.get(id).map(|l| (e.id.clone(), l.clone())))
            .collect();
        report.records.push(SourceRecord {
            id: format!("coco-{}", img.id),
            source: SourceKind::Coco,
            image_w: img.width,
            image_h: img.height,
            elements: anns.into_iter().map(|(_, e)| e).collect(),
            captions: captions.remove(&img.id).unwrap_or_default(),
            ocr_words: None,
            augmented_labels,
        });
    }
    report.record_count = report.records.len();
    Ok(report)
}

// ---- line-delimited records --------------------------------------------

#[derive(Deserialize)]
struct RecordLine {
    id: String,
    #[serde(default)]
    source: Option<SourceKind>,
    image_w: f64,
    image_h: f64,
    elements: Vec<Element>,
    #[serde(default)]
    captions: Vec<String>,
    #[serde(default)]
    ocr_words: Option<Vec<String>>,
    #[serde(default)]
    augmented_labels: BTreeMap<String, String>,
}

/// Parses `(line number, text)` pairs into source records of `kind`.
pub fn ingest_records<'a>(
    lines: impl Iterator<Item = (usize, &'a str)>,
    kind: SourceKind,
) -> Result<IngestReport, SchemaError> {
    let mut report = IngestReport::default();
    for (n, line) in lines {
        let value: Value = serde_json::from_str(line).map_err(|e| schema(format!("line {n}"), e.to_string()))?;
        let rec = match serde_json::from_value::<RecordLine>(value) {
            Ok(r) => r,
            Err(e) => {
                report.skipped_records += 1;
                report.warnings.push(format!("line {n}: {e}"));
                continue;
            }
        };
        if rec.source.is_some_and(|s| s != kind) {
            report.skipped_records += 1;
            report.warnings.push(format!("line {n}: source tag does not match `{kind}`"));
            continue;
        }
        report.records.push(SourceRecord {
            id: rec.id,
            source: kind,
            image_w: rec.image_w,
            image_h: rec.image_h,
            elements: rec.elements,
            captions: rec.captions,
            ocr_words: rec.ocr_words,
            augmented_labels: rec.augmented_labels,
        });
    }
    report.record_count = report.records.len();
    Ok(report)
}
