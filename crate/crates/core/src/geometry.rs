//! Canonical layout data model and bounding-box geometry.
//!
//! Boxes are stored as `left, top, right, bottom` in canvas units. The
//! y-axis points down, so "up" means decreasing `top`/`bottom`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Axis-aligned box in `ltrb` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BBox {
    pub const fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    /// Area, treating inverted extents as empty.
    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.left + self.right) / 2.0,
            (self.top + self.bottom) / 2.0,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.left.is_finite()
            && self.top.is_finite()
            && self.right.is_finite()
            && self.bottom.is_finite()
    }

    pub fn is_inverted(&self) -> bool {
        self.left > self.right || self.top > self.bottom
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.right.min(other.right) - self.left.max(other.left);
        let h = self.bottom.min(other.bottom) - self.top.max(other.top);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.left + dx, self.top + dy, self.right + dx, self.bottom + dy)
    }

    /// Clamp every edge into `[0, w] x [0, h]`.
    pub fn clamped(&self, w: f64, h: f64) -> BBox {
        BBox::new(
            self.left.clamp(0.0, w),
            self.top.clamp(0.0, h),
            self.right.clamp(0.0, w),
            self.bottom.clamp(0.0, h),
        )
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.left, self.top, self.right, self.bottom]
    }
}

/// Intersection over union. Zero when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    VisualObject,
    TextSpan,
    ImageAsset,
    VectorAsset,
    Background,
}

impl ElementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ElementKind::VisualObject => "visual_object",
            ElementKind::TextSpan => "text_span",
            ElementKind::ImageAsset => "image_asset",
            ElementKind::VectorAsset => "vector_asset",
            ElementKind::Background => "background",
        }
    }
}

impl FromStr for ElementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "visual_object" | "object" => Ok(ElementKind::VisualObject),
            "text_span" | "text" => Ok(ElementKind::TextSpan),
            "image_asset" | "image" => Ok(ElementKind::ImageAsset),
            "vector_asset" | "svg" | "vector" => Ok(ElementKind::VectorAsset),
            "background" => Ok(ElementKind::Background),
            other => Err(format!("unknown element kind `{other}`")),
        }
    }
}

/// Optional per-element annotations carried through from the source data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Attrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transparent_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_crowd: Option<bool>,
}

impl Attrs {
    pub fn is_empty(&self) -> bool {
        self.area_fraction.is_none() && self.transparent_fraction.is_none() && self.is_crowd.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: String,
    pub kind: ElementKind,
    pub label: String,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Attrs::is_empty")]
    pub attrs: Attrs,
}

impl Element {
    pub fn new(id: impl Into<String>, kind: ElementKind, label: impl Into<String>, bbox: BBox) -> Self {
        Self {
            id: id.into(),
            kind,
            label: label.into(),
            bbox,
            attrs: Attrs::default(),
        }
    }

    pub fn object(id: impl Into<String>, label: impl Into<String>, bbox: BBox) -> Self {
        Self::new(id, ElementKind::VisualObject, label, bbox)
    }

    pub fn text(id: impl Into<String>, label: impl Into<String>, bbox: BBox) -> Self {
        Self::new(id, ElementKind::TextSpan, label, bbox)
    }

    pub fn with_attrs(mut self, attrs: Attrs) -> Self {
        self.attrs = attrs;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub canvas_w: f64,
    pub canvas_h: f64,
    #[serde(default)]
    pub elements: Vec<Element>,
}

impl Layout {
    pub fn new(canvas_w: f64, canvas_h: f64) -> Self {
        Self {
            canvas_w,
            canvas_h,
            elements: Vec::new(),
        }
    }

    pub fn with_elements(canvas_w: f64, canvas_h: f64, elements: Vec<Element>) -> Self {
        Self {
            canvas_w,
            canvas_h,
            elements,
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.elements.iter().map(|e| e.label.as_str()).collect()
    }

    /// Smallest `e<n>` id not used by any element.
    pub fn fresh_id(&self) -> String {
        let mut n = self.elements.len();
        loop {
            let candidate = format!("e{n}");
            if self.get(&candidate).is_none() {
                return candidate;
            }
            n += 1;
        }
    }

    /// Extent of the canvas along the axis a direction moves on.
    pub fn extent_along(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Left | Direction::Right => self.canvas_w,
            Direction::Up | Direction::Down => self.canvas_h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    OutOfCanvas,
    InvertedBox,
    DuplicateId,
    EmptyLabel,
    NonFinite,
    AttributeOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub element_id: Option<String>,
    pub code: ViolationCode,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.element_id {
            Some(id) => write!(f, "{:?} at `{}`: {}", self.code, id, self.message),
            None => write!(f, "{:?}: {}", self.code, self.message),
        }
    }
}

/// Absolute slack allowed on canvas bounds to absorb rounding in transforms.
pub fn canvas_slack(canvas_w: f64, canvas_h: f64) -> f64 {
    1e-9 * canvas_w.max(canvas_h).max(1.0)
}

/// Check every layout and element invariant. Violations come back ordered by
/// element index; canvas-level problems come first.
pub fn validate(layout: &Layout) -> Vec<Violation> {
    let mut out = Vec::new();
    let (w, h) = (layout.canvas_w, layout.canvas_h);
    let canvas_ok = w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0;
    if !(w.is_finite() && h.is_finite()) {
        out.push(Violation {
            element_id: None,
            code: ViolationCode::NonFinite,
            message: format!("canvas extent {w} x {h} is not finite"),
        });
    } else if !canvas_ok {
        out.push(Violation {
            element_id: None,
            code: ViolationCode::OutOfCanvas,
            message: format!("canvas extent {w} x {h} must be positive"),
        });
    }
    let slack = canvas_slack(w, h);
    let mut seen = BTreeSet::new();

    for el in &layout.elements {
        let id = Some(el.id.clone());
        let b = &el.bbox;
        if !b.is_finite() {
            out.push(Violation {
                element_id: id.clone(),
                code: ViolationCode::NonFinite,
                message: "bounding box has a non-finite coordinate".to_string(),
            });
        } else {
            if b.is_inverted() {
                out.push(Violation {
                    element_id: id.clone(),
                    code: ViolationCode::InvertedBox,
                    message: format!(
                        "left {} > right {} or top {} > bottom {}",
                        b.left, b.right, b.top, b.bottom
                    ),
                });
            }
            if canvas_ok {
                let inside = b.left >= -slack
                    && b.top >= -slack
                    && b.right <= w + slack
                    && b.bottom <= h + slack
                    && b.left <= w + slack
                    && b.top <= h + slack
                    && b.right >= -slack
                    && b.bottom >= -slack;
                if !inside {
                    out.push(Violation {
                        element_id: id.clone(),
                        code: ViolationCode::OutOfCanvas,
                        message: format!(
                            "box ({}, {}, {}, {}) leaves the {w} x {h} canvas",
                            b.left, b.top, b.right, b.bottom
                        ),
                    });
                }
            }
        }
        if el.kind != ElementKind::Background && el.label.trim().is_empty() {
            out.push(Violation {
                element_id: id.clone(),
                code: ViolationCode::EmptyLabel,
                message: "label is empty".to_string(),
            });
        }
        for (name, value) in [
            ("area_fraction", el.attrs.area_fraction),
            ("transparent_fraction", el.attrs.transparent_fraction),
        ] {
            if let Some(v) = value {
                if !(0.0..=1.0).contains(&v) {
                    out.push(Violation {
                        element_id: id.clone(),
                        code: ViolationCode::AttributeOutOfRange,
                        message: format!("{name} = {v} is outside [0, 1]"),
                    });
                }
            }
        }
        if !seen.insert(el.id.as_str()) {
            out.push(Violation {
                element_id: id,
                code: ViolationCode::DuplicateId,
                message: format!("id `{}` appears more than once", el.id),
            });
        }
    }
    out
}

/// `matrix[i][j] = iou(e_i, e_j)`.
#[allow(clippy::needless_range_loop)]
pub fn pairwise_iou(layout: &Layout) -> Vec<Vec<f64>> {
    let n = layout.elements.len();
    let mut m = alloc::vec![alloc::vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = iou(&layout.elements[i].bbox, &layout.elements[i].bbox);
        for j in (i + 1)..n {
            let v = iou(&layout.elements[i].bbox, &layout.elements[j].bbox);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// Largest off-diagonal IoU; zero for fewer than two elements.
pub fn max_pairwise_iou(layout: &Layout) -> f64 {
    let els = &layout.elements;
    let mut best = 0.0f64;
    for i in 0..els.len() {
        for j in (i + 1)..els.len() {
            best = best.max(iou(&els[i].bbox, &els[j].bbox));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate source extent {width} x {height}")]
    DegenerateSource { width: f64, height: f64 },
    #[error("layout has no elements")]
    EmptyLayout,
}

/// Scale a source image so its longest axis equals `target_side` and center
/// the short axis on a square canvas. Every box gets the same transform.
pub fn normalize_to_square(
    src_w: f64,
    src_h: f64,
    elements: &[Element],
    target_side: f64,
) -> Result<Layout, GeometryError> {
    let usable = |v: f64| v.is_finite() && v > 0.0;
    if !usable(src_w) || !usable(src_h) || !usable(target_side) {
        return Err(GeometryError::DegenerateSource {
            width: src_w,
            height: src_h,
        });
    }
    let scale = target_side / src_w.max(src_h);
    let offset_x = (target_side - src_w * scale) / 2.0;
    let offset_y = (target_side - src_h * scale) / 2.0;
    let elements = elements
        .iter()
        .map(|el| {
            let b = &el.bbox;
            let bbox = BBox::new(
                b.left * scale + offset_x,
                b.top * scale + offset_y,
                b.right * scale + offset_x,
                b.bottom * scale + offset_y,
            )
            .clamped(target_side, target_side);
            Element { bbox, ..el.clone() }
        })
        .collect();
    Ok(Layout::with_elements(target_side, target_side, elements))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Left, Direction::Right, Direction::Up, Direction::Down];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }

    pub fn is_horizontal(&self) -> bool {
        matches!(self, Direction::Left | Direction::Right)
    }

    /// Unit displacement `(dx, dy)` in canvas coordinates.
    pub fn unit(&self) -> (f64, f64) {
        match self {
            Direction::Left => (-1.0, 0.0),
            Direction::Right => (1.0, 0.0),
            Direction::Up => (0.0, -1.0),
            Direction::Down => (0.0, 1.0),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            "up" | "upward" | "upwards" => Ok(Direction::Up),
            "down" | "downward" | "downwards" => Ok(Direction::Down),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// Index of the element whose edge is most extreme in `direction`
/// (left: minimal `left`, up: minimal `top`, ...). Ties go to the earliest.
pub fn extremal_index(layout: &Layout, direction: Direction) -> Result<usize, GeometryError> {
    let edge = |b: &BBox| match direction {
        Direction::Left => -b.left,
        Direction::Right => b.right,
        Direction::Up => -b.top,
        Direction::Down => b.bottom,
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, el) in layout.elements.iter().enumerate() {
        let v = edge(&el.bbox);
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).ok_or(GeometryError::EmptyLayout)
}

pub fn extremal_element(layout: &Layout, direction: Direction) -> Result<&str, GeometryError> {
    extremal_index(layout, direction).map(|i| layout.elements[i].id.as_str())
}

/// Largest distance `s >= 0` such that moving element `index` by any amount
/// in `[0, s]` along `direction` keeps it on the canvas and keeps its IoU with
/// every other element `j` at or below `cap(j)`.
///
/// Caps must be at least the current pair IoU; otherwise the element is
/// already in violation and the result is zero.
pub fn feasible_shift(
    layout: &Layout,
    index: usize,
    direction: Direction,
    cap: &dyn Fn(usize) -> f64,
) -> f64 {
    let moving = &layout.elements[index].bbox;
    // Project onto (moving axis interval, cross axis interval).
    let project = |b: &BBox| {
        if direction.is_horizontal() {
            ((b.left, b.right), (b.top, b.bottom))
        } else {
            ((b.top, b.bottom), (b.left, b.right))
        }
    };
    let ((lo, hi), (clo, chi)) = project(moving);
    let positive = matches!(direction, Direction::Right | Direction::Down);
    let extent = layout.extent_along(direction);
    let mut limit = if positive { extent - hi } else { lo };
    limit = limit.max(0.0);

    let area_i = moving.area();
    for (j, other) in layout.elements.iter().enumerate() {
        if j == index {
            continue;
        }
        let ((ljo, hjo), (cjlo, cjhi)) = project(&other.bbox);
        let cross = chi.min(cjhi) - clo.max(cjlo);
        if cross <= 0.0 {
            continue;
        }
        let c_iou = cap(j).max(0.0);
        // Overlap length along the moving axis at which IoU reaches the cap.
        let c = c_iou * (area_i + other.bbox.area()) / ((1.0 + c_iou) * cross);
        if hi - lo <= c || hjo - ljo <= c {
            continue;
        }
        // Signed offsets in the open interval (v_lo, v_hi) break the cap.
        let v_lo = ljo - hi + c;
        let v_hi = hjo - lo - c;
        let allowed = if positive {
            if v_lo >= 0.0 {
                v_lo
            } else if v_hi <= 0.0 {
                continue;
            } else {
                0.0
            }
        } else if v_hi <= 0.0 {
            -v_hi
        } else if v_lo >= 0.0 {
            continue;
        } else {
            0.0
        };
        limit = limit.min(allowed);
    }
    limit
}

/// Move element `index` by `distance` along `direction`, in place.
pub fn shift_element(layout: &mut Layout, index: usize, direction: Direction, distance: f64) {
    let (ux, uy) = direction.unit();
    let b = layout.elements[index].bbox;
    layout.elements[index].bbox = b.translated(ux * distance, uy * distance);
}
