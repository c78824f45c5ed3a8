//! Textual layout representations and the strict parser behind the
//! failure-rate metric.
//!
//! Five grammars are supported (see `docs/formats.md` for the byte-level
//! definitions):
//!
//! | format    | line shape                                                          |
//! |-----------|---------------------------------------------------------------------|
//! | `int128`  | `dog: [0, 0, 64, 64]` on a 0..=128 grid                             |
//! | `int1024` | `dog: [0, 0, 512, 512]` on a 0..=1024 grid                          |
//! | `float`   | `dog: [0.000, 0.000, 0.500, 0.500]`                                 |
//! | `css128`  | `dog { left: 0px; top: 0px; width: 64px; height: 64px }`            |
//! | `json`    | array of `{"label", "left", "top", "right", "bottom"}` objects      |
//!
//! Coordinates in every format are fractions of the canvas extent, either
//! quantized to a grid or written with three decimals. Text-span elements
//! carry their label in double quotes in the line formats and a `"kind"`
//! key in the JSON format; other kinds are not representable and parse back
//! as visual objects.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{validate, BBox, Element, ElementKind, Layout, ViolationCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayoutFormat {
    #[serde(rename = "int128")]
    IntList128,
    #[serde(rename = "int1024")]
    IntList1024,
    #[serde(rename = "float")]
    FloatList,
    #[serde(rename = "css128")]
    Css128,
    #[serde(rename = "json")]
    JsonFloat,
}

impl LayoutFormat {
    pub const ALL: [LayoutFormat; 5] = [
        LayoutFormat::IntList128,
        LayoutFormat::IntList1024,
        LayoutFormat::FloatList,
        LayoutFormat::Css128,
        LayoutFormat::JsonFloat,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LayoutFormat::IntList128 => "int128",
            LayoutFormat::IntList1024 => "int1024",
            LayoutFormat::FloatList => "float",
            LayoutFormat::Css128 => "css128",
            LayoutFormat::JsonFloat => "json",
        }
    }

    /// Grid size for the integer formats.
    pub fn bins(&self) -> Option<u32> {
        match self {
            LayoutFormat::IntList128 | LayoutFormat::Css128 => Some(128),
            LayoutFormat::IntList1024 => Some(1024),
            LayoutFormat::FloatList | LayoutFormat::JsonFloat => None,
        }
    }

    /// Fixed number of decimals for the float formats.
    pub fn decimals(&self) -> Option<usize> {
        match self {
            LayoutFormat::FloatList | LayoutFormat::JsonFloat => Some(3),
            _ => None,
        }
    }

    pub fn is_integer(&self) -> bool {
        self.bins().is_some()
    }

    /// Worst-case per-coordinate error of a serialize/parse round trip, as a
    /// fraction of the canvas extent.
    pub fn roundtrip_bound(&self) -> f64 {
        match self.bins() {
            Some(bins) => 1.0 / (2.0 * f64::from(bins)),
            None => 0.0005,
        }
    }

    fn grid(&self) -> u32 {
        self.bins().unwrap_or(FLOAT_GRID)
    }
}

const FLOAT_GRID: u32 = 1000;

impl fmt::Display for LayoutFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayoutFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "int128" | "intlist128" | "d128" => Ok(LayoutFormat::IntList128),
            "int1024" | "intlist1024" | "d1024" => Ok(LayoutFormat::IntList1024),
            "float" | "floatlist" => Ok(LayoutFormat::FloatList),
            "css128" | "css" => Ok(LayoutFormat::Css128),
            "json" | "jsonfloat" => Ok(LayoutFormat::JsonFloat),
            other => Err(format!("unknown layout format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    SyntaxError,
    CoordinateOutOfRange,
    InvertedBox,
    MissingField,
    EmptyOutput,
    UnknownFormat,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::SyntaxError => "syntax_error",
            FailureReason::CoordinateOutOfRange => "coordinate_out_of_range",
            FailureReason::InvertedBox => "inverted_box",
            FailureReason::MissingField => "missing_field",
            FailureReason::EmptyOutput => "empty_output",
            FailureReason::UnknownFormat => "unknown_format",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "syntax_error" | "SyntaxError" => FailureReason::SyntaxError,
            "coordinate_out_of_range" | "CoordinateOutOfRange" => FailureReason::CoordinateOutOfRange,
            "inverted_box" | "InvertedBox" => FailureReason::InvertedBox,
            "missing_field" | "MissingField" => FailureReason::MissingField,
            "empty_output" | "EmptyOutput" => FailureReason::EmptyOutput,
            "unknown_format" | "UnknownFormat" => FailureReason::UnknownFormat,
            other => return Err(format!("unknown failure reason `{other}`")),
        })
    }
}

/// Result of parsing one model reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseOutcome {
    Success { layout: Layout, raw_text: String },
    Failure { failure_reason: FailureReason, raw_text: String },
}

impl ParseOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, ParseOutcome::Success { .. })
    }

    pub fn layout(&self) -> Option<&Layout> {
        match self {
            ParseOutcome::Success { layout, .. } => Some(layout),
            ParseOutcome::Failure { .. } => None,
        }
    }

    pub fn failure_reason(&self) -> Option<FailureReason> {
        match self {
            ParseOutcome::Success { .. } => None,
            ParseOutcome::Failure { failure_reason, .. } => Some(*failure_reason),
        }
    }

    pub fn raw_text(&self) -> &str {
        match self {
            ParseOutcome::Success { raw_text, .. } | ParseOutcome::Failure { raw_text, .. } => raw_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("value {0} is outside [0, 1]")]
    OutOfDomain(f64),
}

/// Round-half-up of `x * bins`, clamped to `[0, bins]`.
pub fn quantize(x: f64, bins: u32) -> Result<u32, CodecError> {
    const SLACK: f64 = 1e-9;
    if !x.is_finite() || !(-SLACK..=1.0 + SLACK).contains(&x) {
        return Err(CodecError::OutOfDomain(x));
    }
    Ok(quantize_clamped(x, bins))
}

fn quantize_clamped(x: f64, bins: u32) -> u32 {
    let v = libm::floor(x * f64::from(bins) + 0.5);
    v.clamp(0.0, f64::from(bins)) as u32
}

pub fn dequantize(q: u32, bins: u32) -> f64 {
    f64::from(q) / f64::from(bins)
}

/// Replace grammar delimiters and control characters so a label survives
/// every line grammar unchanged.
pub fn sanitize_label(label: &str) -> String {
    let cleaned: String = label
        .chars()
        .map(|c| match c {
            '{' | '}' | '[' | ']' | ':' => '-',
            '"' => '\'',
            c if c.is_control() => ' ',
            c => c,
        })
        .collect();
    let trimmed = cleaned.trim();
    if trimmed.is_empty() {
        "-".to_string()
    } else {
        trimmed.to_string()
    }
}

fn fractions(el: &Element, canvas_w: f64, canvas_h: f64) -> [f64; 4] {
    let b = &el.bbox;
    let fx = |v: f64| (v / canvas_w).clamp(0.0, 1.0);
    let fy = |v: f64| (v / canvas_h).clamp(0.0, 1.0);
    [fx(b.left), fy(b.top), fx(b.right), fy(b.bottom)]
}

fn push_decimal(out: &mut String, q: u32) {
    let _ = write!(out, "{}.{:03}", q / FLOAT_GRID, q % FLOAT_GRID);
}

fn line_label(el: &Element) -> String {
    let label = sanitize_label(&el.label);
    if el.kind == ElementKind::TextSpan {
        format!("\"{label}\"")
    } else {
        label
    }
}

/// Render a layout in the given format: one element per line, in element
/// order. An empty layout renders as empty text.
pub fn serialize(layout: &Layout, fmt: LayoutFormat) -> String {
    if layout.elements.is_empty() {
        return String::new();
    }
    let grid = fmt.grid();
    let mut out = String::new();
    if fmt == LayoutFormat::JsonFloat {
        out.push_str("[\n");
    }
    for (i, el) in layout.elements.iter().enumerate() {
        let q = fractions(el, layout.canvas_w, layout.canvas_h).map(|f| quantize_clamped(f, grid));
        match fmt {
            LayoutFormat::IntList128 | LayoutFormat::IntList1024 => {
                let _ = write!(out, "{}: [{}, {}, {}, {}]", line_label(el), q[0], q[1], q[2], q[3]);
            }
            LayoutFormat::FloatList => {
                let _ = write!(out, "{}: [", line_label(el));
                for (k, v) in q.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    push_decimal(&mut out, *v);
                }
                out.push(']');
            }
            LayoutFormat::Css128 => {
                let _ = write!(
                    out,
                    "{} {{ left: {}px; top: {}px; width: {}px; height: {}px }}",
                    line_label(el),
                    q[0],
                    q[1],
                    q[2].saturating_sub(q[0]),
                    q[3].saturating_sub(q[1]),
                );
            }
            LayoutFormat::JsonFloat => {
                let label = serde_json::to_string(&sanitize_label(&el.label)).unwrap_or_default();
                let _ = write!(out, "  {{\"label\": {label}, ");
                if el.kind != ElementKind::VisualObject {
                    let _ = write!(out, "\"kind\": \"{}\", ", el.kind.as_str());
                }
                for (k, key) in ["left", "top", "right", "bottom"].iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    let _ = write!(out, "\"{key}\": ");
                    push_decimal(&mut out, q[k]);
                }
                out.push('}');
                if i + 1 < layout.elements.len() {
                    out.push(',');
                }
            }
        }
        if fmt != LayoutFormat::JsonFloat && i + 1 < layout.elements.len() {
            out.push('\n');
        }
        if fmt == LayoutFormat::JsonFloat {
            out.push('\n');
        }
    }
    if fmt == LayoutFormat::JsonFloat {
        out.push(']');
    }
    out
}

/// Remove leading/trailing blank lines and a surrounding code fence.
pub fn strip_fences(text: &str) -> String {
    let mut lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    let trim_blank = |lines: &mut Vec<&str>| {
        while lines.first().is_some_and(|l| l.trim().is_empty()) {
            lines.remove(0);
        }
        while lines.last().is_some_and(|l| l.trim().is_empty()) {
            lines.pop();
        }
    };
    trim_blank(&mut lines);
    if lines.first().is_some_and(|l| l.trim_start().starts_with("```")) {
        lines.remove(0);
    }
    if lines.last().is_some_and(|l| l.trim() == "```") {
        lines.pop();
    }
    trim_blank(&mut lines);
    lines.join("\n")
}

struct ParsedItem {
    label: String,
    kind: ElementKind,
    /// Fractions of the canvas, `ltrb`.
    coords: [f64; 4],
}

/// Parse model output in the declared format. Never panics; every problem is
/// reported as a classified [`ParseOutcome::Failure`].
pub fn parse(text: &str, fmt: LayoutFormat, canvas_w: f64, canvas_h: f64) -> ParseOutcome {
    let fail = |reason| ParseOutcome::Failure {
        failure_reason: reason,
        raw_text: text.to_string(),
    };
    let body = strip_fences(text);
    if body.trim().is_empty() {
        return fail(FailureReason::EmptyOutput);
    }
    let items = match fmt {
        LayoutFormat::JsonFloat => parse_json(&body),
        _ => body.split('\n').try_fold(Vec::new(), |mut acc, line| {
            acc.push(parse_line(line, fmt)?);
            Ok(acc)
        }),
    };
    let items = match items {
        Ok(items) => items,
        Err(reason) => return fail(reason),
    };

    let elements = items
        .into_iter()
        .enumerate()
        .map(|(i, it)| {
            let [l, t, r, b] = it.coords;
            Element::new(
                format!("e{i}"),
                it.kind,
                it.label,
                BBox::new(l * canvas_w, t * canvas_h, r * canvas_w, b * canvas_h),
            )
        })
        .collect();
    let layout = Layout::with_elements(canvas_w, canvas_h, elements);
    if let Some(v) = validate(&layout).first() {
        let reason = match v.code {
            ViolationCode::InvertedBox => FailureReason::InvertedBox,
            ViolationCode::EmptyLabel => FailureReason::MissingField,
            ViolationCode::DuplicateId => FailureReason::SyntaxError,
            _ => FailureReason::CoordinateOutOfRange,
        };
        return fail(reason);
    }
    ParseOutcome::Success {
        layout,
        raw_text: text.to_string(),
    }
}

/// Parse with a format given by name; unknown names fail as
/// [`FailureReason::UnknownFormat`].
pub fn parse_named(text: &str, format_name: &str, canvas_w: f64, canvas_h: f64) -> ParseOutcome {
    match format_name.parse::<LayoutFormat>() {
        Ok(fmt) => parse(text, fmt, canvas_w, canvas_h),
        Err(_) => ParseOutcome::Failure {
            failure_reason: FailureReason::UnknownFormat,
            raw_text: text.to_string(),
        },
    }
}

fn parse_label(raw: &str) -> Result<(String, ElementKind), FailureReason> {
    let raw = raw.trim();
    let (label, kind) = if raw.len() >= 2 && raw.starts_with('"') && raw.ends_with('"') {
        (raw[1..raw.len() - 1].trim(), ElementKind::TextSpan)
    } else {
        (raw, ElementKind::VisualObject)
    };
    if label.is_empty() {
        return Err(FailureReason::MissingField);
    }
    if label.contains(['{', '}', '[', ']', ':']) {
        return Err(FailureReason::SyntaxError);
    }
    Ok((label.to_string(), kind))
}

fn is_integer_token(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn is_decimal_token(s: &str) -> bool {
    let body = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    match frac {
        None => !int.is_empty() && all_digits(int),
        Some(f) => (!int.is_empty() || !f.is_empty()) && all_digits(int) && all_digits(f) && !(int.is_empty() && f.is_empty()),
    }
}

fn number(token: &str, integer: bool) -> Result<f64, FailureReason> {
    let ok = if integer { is_integer_token(token) } else { is_decimal_token(token) };
    if !ok {
        return Err(FailureReason::SyntaxError);
    }
    token.parse::<f64>().map_err(|_| FailureReason::SyntaxError)
}

fn check_inverted(c: &[f64; 4]) -> Result<(), FailureReason> {
    if c[0] > c[2] || c[1] > c[3] {
        Err(FailureReason::InvertedBox)
    } else {
        Ok(())
    }
}

fn parse_line(line: &str, fmt: LayoutFormat) -> Result<ParsedItem, FailureReason> {
    if line.trim().is_empty() {
        return Err(FailureReason::SyntaxError);
    }
    match fmt {
        LayoutFormat::Css128 => parse_css_line(line),
        _ => parse_list_line(line, fmt),
    }
}

fn parse_list_line(line: &str, fmt: LayoutFormat) -> Result<ParsedItem, FailureReason> {
    let integer = fmt.is_integer();
    let (label_part, rest) = match line.split_once(':') {
        Some(parts) => parts,
        None if line.trim_start().starts_with('[') => return Err(FailureReason::MissingField),
        None => return Err(FailureReason::SyntaxError),
    };
    let (label, kind) = parse_label(label_part)?;
    let rest = rest.trim();
    let inner = rest
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or(FailureReason::SyntaxError)?;
    if inner.contains(['[', ']', ':']) {
        return Err(FailureReason::SyntaxError);
    }
    if inner.trim().is_empty() {
        return Err(FailureReason::MissingField);
    }
    let tokens: Vec<&str> = inner.split(',').map(str::trim).collect();
    let mut values = Vec::with_capacity(4);
    for tok in &tokens {
        values.push(number(tok, integer)?);
    }
    if values.len() < 4 {
        return Err(FailureReason::MissingField);
    }
    if values.len() > 4 {
        return Err(FailureReason::SyntaxError);
    }
    let max = f64::from(fmt.bins().unwrap_or(1));
    if values.iter().any(|v| *v < 0.0 || *v > max) {
        return Err(FailureReason::CoordinateOutOfRange);
    }
    let coords = [values[0] / max, values[1] / max, values[2] / max, values[3] / max];
    check_inverted(&coords)?;
    Ok(ParsedItem { label, kind, coords })
}

fn parse_css_line(line: &str) -> Result<ParsedItem, FailureReason> {
    let (label_part, rest) = line.split_once('{').ok_or(FailureReason::SyntaxError)?;
    let (label, kind) = parse_label(label_part)?;
    let inner = rest.trim().strip_suffix('}').ok_or(FailureReason::SyntaxError)?;
    if inner.contains(['{', '}']) {
        return Err(FailureReason::SyntaxError);
    }
    let mut slots: [Option<f64>; 4] = [None; 4];
    for decl in inner.split(';').map(str::trim).filter(|d| !d.is_empty()) {
        let (key, value) = decl.split_once(':').ok_or(FailureReason::SyntaxError)?;
        let slot = match key.trim() {
            "left" => 0,
            "top" => 1,
            "width" => 2,
            "height" => 3,
            _ => return Err(FailureReason::SyntaxError),
        };
        let value = value.trim().strip_suffix("px").ok_or(FailureReason::SyntaxError)?;
        let v = number(value.trim_end(), true)?;
        if slots[slot].replace(v).is_some() {
            return Err(FailureReason::SyntaxError);
        }
    }
    let [Some(left), Some(top), Some(width), Some(height)] = slots else {
        return Err(FailureReason::MissingField);
    };
    let bins = f64::from(LayoutFormat::Css128.bins().unwrap_or(128));
    if left < 0.0 || top < 0.0 || left > bins || top > bins {
        return Err(FailureReason::CoordinateOutOfRange);
    }
    if width < 0.0 || height < 0.0 {
        return Err(FailureReason::InvertedBox);
    }
    if left + width > bins || top + height > bins {
        return Err(FailureReason::CoordinateOutOfRange);
    }
    Ok(ParsedItem {
        label,
        kind,
        coords: [left / bins, top / bins, (left + width) / bins, (top + height) / bins],
    })
}

fn parse_json(body: &str) -> Result<Vec<ParsedItem>, FailureReason> {
    let value: Value = serde_json::from_str(body).map_err(|_| FailureReason::SyntaxError)?;
    let items = value.as_array().ok_or(FailureReason::SyntaxError)?;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let obj = item.as_object().ok_or(FailureReason::SyntaxError)?;
        let label = match obj.get("label") {
            None => return Err(FailureReason::MissingField),
            Some(Value::String(s)) => s.trim().to_string(),
            Some(_) => return Err(FailureReason::SyntaxError),
        };
        if label.is_empty() {
            return Err(FailureReason::MissingField);
        }
        let kind = match obj.get("kind") {
            None => ElementKind::VisualObject,
            Some(Value::String(s)) => s.parse().map_err(|_| FailureReason::SyntaxError)?,
            Some(_) => return Err(FailureReason::SyntaxError),
        };
        let mut coords = [0.0; 4];
        for (k, key) in ["left", "top", "right", "bottom"].iter().enumerate() {
            coords[k] = match obj.get(*key) {
                None => return Err(FailureReason::MissingField),
                Some(v) => v.as_f64().ok_or(FailureReason::SyntaxError)?,
            };
        }
        if coords.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(FailureReason::CoordinateOutOfRange);
        }
        check_inverted(&coords)?;
        out.push(ParsedItem { label, kind, coords });
    }
    Ok(out)
}

/// Largest per-coordinate deviation, as a fraction of the canvas, after a
/// serialize/parse round trip. Infinite when the round trip fails.
pub fn roundtrip_error(layout: &Layout, fmt: LayoutFormat) -> f64 {
    if layout.elements.is_empty() {
        return 0.0;
    }
    let text = serialize(layout, fmt);
    let ParseOutcome::Success { layout: back, .. } = parse(&text, fmt, layout.canvas_w, layout.canvas_h) else {
        return f64::INFINITY;
    };
    if back.elements.len() != layout.elements.len() {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for (a, b) in layout.elements.iter().zip(&back.elements) {
        let (ab, bb) = (a.bbox.to_array(), b.bbox.to_array());
        for k in 0..4 {
            let extent = if k % 2 == 0 { layout.canvas_w } else { layout.canvas_h };
            worst = worst.max((ab[k] - bb[k]).abs() / extent);
        }
    }
    worst
}
