//! Deterministic edit commands and their closed phrase grammar.
//!
//! Recognized phrasings (case-insensitive, trailing punctuation ignored):
//!
//! - `move|shift [the] <sel> <left|right|up|down> [by <n>[%| units| px]]`
//! - `swap [the] <sel> and [the] <sel>`
//! - `make [the] <sel> larger|bigger|smaller [by <n>%]`
//! - `delete|remove [the] <sel>`
//! - `align [the] <sel>, <sel> and <sel> [to the] <left|right|top|bottom> [edge|edges]`
//! - `add [a|an|the] <label> at [l, t, r, b]`
//!
//! A selector is a label, optionally preceded by an ordinal (`first`,
//! `second`, `2nd`, `last`, ...), or an element id. Without an ordinal a
//! label must match exactly one element. Moves without a magnitude travel a
//! tenth of the canvas; resizes without one change by ten percent.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{canvas_slack, feasible_shift, iou, BBox, Direction, Element, Layout};
use crate::text::normalize_label;

const DEFAULT_MOVE_FRACTION: f64 = 0.1;
const DEFAULT_RESIZE_PERCENT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "unit", content = "value", rename_all = "snake_case")]
pub enum Magnitude {
    /// Canvas units.
    Units(f64),
    /// Percent of the canvas extent along the move axis.
    Percent(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Top,
    Bottom,
}

impl Edge {
    fn direction(self) -> Direction {
        match self {
            Edge::Left => Direction::Left,
            Edge::Right => Direction::Right,
            Edge::Top => Direction::Up,
            Edge::Bottom => Direction::Down,
        }
    }

    fn value(self, b: &BBox) -> f64 {
        match self {
            Edge::Left => b.left,
            Edge::Right => b.right,
            Edge::Top => b.top,
            Edge::Bottom => b.bottom,
        }
    }
}

/// Element references are resolved ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case")]
pub enum EditCommand {
    Move {
        target: String,
        direction: Direction,
        magnitude: Magnitude,
    },
    Swap {
        a: String,
        b: String,
    },
    Resize {
        target: String,
        /// Signed percent change of width and height; positive grows.
        percent: f64,
    },
    Delete {
        target: String,
    },
    Align {
        targets: Vec<String>,
        edge: Edge,
    },
    Add {
        label: String,
        bbox: BBox,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EditParse {
    Command(EditCommand),
    /// The message is outside the grammar; route it to the backend.
    NotDeterministic,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EditError {
    #[error("`{selector}` matches {count} elements; add an ordinal such as `first`")]
    AmbiguousSelector { selector: String, count: usize },
    #[error("no element matches `{0}`")]
    SelectorNotFound(String),
    #[error("no feasible {0} on the current layout")]
    NoFeasibleMove(&'static str),
    #[error("invalid magnitude: {0}")]
    InvalidMagnitude(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditOutcome {
    pub layout: Layout,
    /// Units moved (move), percent applied (resize); `None` otherwise.
    pub applied_magnitude: Option<f64>,
}

// ---- parsing ---------------------------------------------------------------

fn clean(text: &str) -> String {
    let t = normalize_label(text);
    t.trim_end_matches(['.', '!', '?']).trim().to_string()
}

fn strip_article(s: &str) -> &str {
    for a in ["the ", "a ", "an "] {
        if let Some(rest) = s.strip_prefix(a) {
            return rest.trim_start();
        }
    }
    s
}

fn ordinal(word: &str) -> Option<isize> {
    Some(match word {
        "first" | "1st" => 0,
        "second" | "2nd" => 1,
        "third" | "3rd" => 2,
        "fourth" | "4th" => 3,
        "fifth" | "5th" => 4,
        "last" => -1,
        _ => return None,
    })
}

/// Resolves a selector to an element id.
fn resolve(layout: &Layout, selector: &str) -> Result<String, EditError> {
    let sel = strip_article(selector.trim());
    if sel.is_empty() {
        return Err(EditError::SelectorNotFound(String::new()));
    }
    if let Some(e) = layout.elements.iter().find(|e| normalize_label(&e.id) == sel) {
        return Ok(e.id.clone());
    }
    let (ord, label) = match sel.split_once(' ') {
        Some((w, rest)) if ordinal(w).is_some() => (ordinal(w), rest.trim()),
        _ => (None, sel),
    };
    let hits: Vec<&Element> = layout.elements.iter().filter(|e| normalize_label(&e.label) == label).collect();
    if hits.is_empty() {
        return Err(EditError::SelectorNotFound(sel.to_string()));
    }
    match ord {
        None if hits.len() == 1 => Ok(hits[0].id.clone()),
        None => Err(EditError::AmbiguousSelector {
            selector: sel.to_string(),
            count: hits.len(),
        }),
        Some(-1) => Ok(hits[hits.len() - 1].id.clone()),
        Some(n) => hits
            .get(n as usize)
            .map(|e| e.id.clone())
            .ok_or_else(|| EditError::SelectorNotFound(sel.to_string())),
    }
}

fn parse_number(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// `<n>`, `<n>%`, `<n> units`, `<n>px`.
fn parse_magnitude(s: &str) -> Option<Magnitude> {
    let s = s.trim();
    if let Some(p) = s.strip_suffix('%') {
        return parse_number(p).map(Magnitude::Percent);
    }
    if let Some(p) = s.strip_suffix(" percent") {
        return parse_number(p).map(Magnitude::Percent);
    }
    let s = s
        .strip_suffix(" units")
        .or_else(|| s.strip_suffix(" unit"))
        .or_else(|| s.strip_suffix(" px"))
        .or_else(|| s.strip_suffix("px"))
        .unwrap_or(s);
    parse_number(s).map(Magnitude::Units)
}

fn parse_move(rest: &str, layout: &Layout) -> Option<Result<EditCommand, EditError>> {
    let (head, magnitude) = match rest.rsplit_once(" by ") {
        Some((h, m)) => (h, Some(parse_magnitude(m)?)),
        None => (rest, None),
    };
    let (sel, dir) = head.rsplit_once(' ')?;
    let sel = sel.strip_suffix(" to the").unwrap_or(sel);
    let direction: Direction = dir.parse().ok()?;
    let magnitude = magnitude.unwrap_or(Magnitude::Percent(DEFAULT_MOVE_FRACTION * 100.0));
    Some(resolve(layout, sel).map(|target| EditCommand::Move {
        target,
        direction,
        magnitude,
    }))
}

fn parse_swap(rest: &str, layout: &Layout) -> Option<Result<EditCommand, EditError>> {
    let mut first_err = None;
    let mut start = 0;
    while let Some(pos) = rest[start..].find(" and ") {
        let at = start + pos;
        let (a, b) = (&rest[..at], &rest[at + 5..]);
        match (resolve(layout, a), resolve(layout, b)) {
            (Ok(a), Ok(b)) => return Some(Ok(EditCommand::Swap { a, b })),
            (Err(e), _) | (_, Err(e)) => {
                first_err.get_or_insert(e);
            }
        }
        start = at + 5;
    }
    first_err.map(Err)
}

fn parse_resize(rest: &str, layout: &Layout) -> Option<Result<EditCommand, EditError>> {
    let (head, amount) = match rest.rsplit_once(" by ") {
        Some((h, m)) => match parse_magnitude(m)? {
            Magnitude::Percent(p) => (h, p),
            Magnitude::Units(_) => return None,
        },
        None => (rest, DEFAULT_RESIZE_PERCENT),
    };
    let (sel, word) = head.rsplit_once(' ')?;
    let sign = match word {
        "larger" | "bigger" => 1.0,
        "smaller" => -1.0,
        _ => return None,
    };
    Some(resolve(layout, sel).map(|target| EditCommand::Resize {
        target,
        percent: sign * amount,
    }))
}

fn parse_align(rest: &str, layout: &Layout) -> Option<Result<EditCommand, EditError>> {
    let rest = rest
        .strip_suffix(" edges")
        .or_else(|| rest.strip_suffix(" edge"))
        .or_else(|| rest.strip_suffix(" sides"))
        .unwrap_or(rest);
    let (sels, edge) = rest.rsplit_once(' ')?;
    let edge = match edge {
        "left" => Edge::Left,
        "right" => Edge::Right,
        "top" => Edge::Top,
        "bottom" => Edge::Bottom,
        _ => return None,
    };
    let sels = sels.strip_suffix(" to the").or_else(|| sels.strip_suffix(" to")).unwrap_or(sels);
    let sels = sels.strip_suffix(" on the").unwrap_or(sels);
    let parts: Vec<&str> = sels
        .split(',')
        .flat_map(|p| p.split(" and "))
        .map(|p| p.trim())
        .map(|p| p.strip_prefix("and ").unwrap_or(p))
        .filter(|p| !p.is_empty())
        .collect();
    if parts.len() < 2 {
        return None;
    }
    let targets = parts.iter().map(|p| resolve(layout, p)).collect::<Result<Vec<_>, _>>();
    Some(targets.map(|targets| EditCommand::Align { targets, edge }))
}

fn parse_add(rest: &str) -> Option<Result<EditCommand, EditError>> {
    let (label, coords) = rest.rsplit_once(" at ")?;
    let label = strip_article(label.trim());
    let coords = coords.trim().trim_start_matches('[').trim_end_matches(']');
    let nums: Vec<f64> = coords
        .split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(parse_number)
        .collect::<Option<Vec<_>>>()?;
    if label.is_empty() || nums.len() != 4 {
        return None;
    }
    Some(Ok(EditCommand::Add {
        label: label.to_string(),
        bbox: BBox::new(nums[0], nums[1], nums[2], nums[3]),
    }))
}

/// Classifies `text` as a deterministic edit on `layout`, or as a message
/// for the backend.
pub fn parse_edit_command(text: &str, layout: &Layout) -> Result<EditParse, EditError> {
    let t = clean(text);
    let (verb, rest) = t.split_once(' ').unwrap_or((t.as_str(), ""));
    let rest = rest.trim();
    let parsed = match verb {
        "move" | "shift" => parse_move(rest, layout),
        "swap" => parse_swap(rest, layout),
        "make" => parse_resize(rest, layout),
        "delete" | "remove" => (!rest.is_empty()).then(|| resolve(layout, rest).map(|target| EditCommand::Delete { target })),
        "align" => parse_align(rest, layout),
        "add" => parse_add(rest),
        _ => None,
    };
    match parsed {
        None => Ok(EditParse::NotDeterministic),
        Some(Ok(c)) => Ok(EditParse::Command(c)),
        Some(Err(e)) => Err(e),
    }
}

// ---- application -------------------------------------------------------------

fn index(layout: &Layout, id: &str) -> Result<usize, EditError> {
    layout.index_of(id).ok_or_else(|| EditError::SelectorNotFound(id.to_string()))
}

/// Per-pair overlap cap: `tau_o`, or the pair's current IoU if already above.
fn pair_caps(layout: &Layout, i: usize, tau_o: f64) -> impl Fn(usize) -> f64 + '_ {
    move |j| tau_o.max(iou(&layout.elements[i].bbox, &layout.elements[j].bbox))
}

fn within_caps(layout: &Layout, i: usize, candidate: &BBox, tau_o: f64) -> bool {
    let cap = pair_caps(layout, i, tau_o);
    layout
        .elements
        .iter()
        .enumerate()
        .all(|(j, e)| j == i || iou(candidate, &e.bbox) <= cap(j))
}

fn move_by(layout: &mut Layout, i: usize, direction: Direction, requested: f64, tau_o: f64) -> f64 {
    let limit = feasible_shift(layout, i, direction, &pair_caps(layout, i, tau_o));
    let applied = requested.min(limit).max(0.0);
    if applied > 0.0 {
        let (ux, uy) = direction.unit();
        let b = layout.elements[i].bbox.translated(ux * applied, uy * applied);
        layout.elements[i].bbox = b.clamped(layout.canvas_w, layout.canvas_h);
    }
    applied
}

fn scaled(b: &BBox, factor: f64, w: f64, h: f64) -> BBox {
    let (cx, cy) = b.center();
    let (hw, hh) = (0.5 * b.width() * factor, 0.5 * b.height() * factor);
    BBox::new(cx - hw, cy - hh, cx + hw, cy + hh).clamped(w, h)
}

/// Applies a command. Moves, resizes and alignments shrink to the largest
/// magnitude that keeps every pair IoU at or below `max(tau_o, current)`
/// and every box on the canvas.
pub fn apply_edit(layout: &Layout, cmd: &EditCommand, tau_o: f64) -> Result<EditOutcome, EditError> {
    let mut out = layout.clone();
    let mut applied_magnitude = None;
    match cmd {
        EditCommand::Move {
            target,
            direction,
            magnitude,
        } => {
            let i = index(layout, target)?;
            let requested = match *magnitude {
                Magnitude::Units(u) => u,
                Magnitude::Percent(p) => p / 100.0 * layout.extent_along(*direction),
            };
            if !(requested.is_finite() && requested > 0.0) {
                return Err(EditError::InvalidMagnitude(format!("{requested}")));
            }
            let applied = move_by(&mut out, i, *direction, requested, tau_o);
            if applied <= 0.0 {
                return Err(EditError::NoFeasibleMove("move"));
            }
            applied_magnitude = Some(applied);
        }
        EditCommand::Swap { a, b } => {
            let (i, j) = (index(layout, a)?, index(layout, b)?);
            let tmp = out.elements[i].bbox;
            out.elements[i].bbox = out.elements[j].bbox;
            out.elements[j].bbox = tmp;
        }
        EditCommand::Resize { target, percent } => {
            let i = index(layout, target)?;
            let requested = 1.0 + percent / 100.0;
            if !(requested.is_finite() && requested > 0.0) || *percent == 0.0 {
                return Err(EditError::InvalidMagnitude(format!("{percent}%")));
            }
            let b = layout.elements[i].bbox;
            // Largest feasible step from the request back toward no change.
            const STEPS: usize = 64;
            let chosen = (0..STEPS).map(|k| requested + (1.0 - requested) * k as f64 / STEPS as f64).find(|&f| {
                let cand = scaled(&b, f, layout.canvas_w, layout.canvas_h);
                cand != b && within_caps(layout, i, &cand, tau_o)
            });
            let Some(f) = chosen else {
                return Err(EditError::NoFeasibleMove("resize"));
            };
            out.elements[i].bbox = scaled(&b, f, layout.canvas_w, layout.canvas_h);
            applied_magnitude = Some((f - 1.0) * 100.0);
        }
        EditCommand::Delete { target } => {
            let i = index(layout, target)?;
            out.elements.remove(i);
        }
        EditCommand::Align { targets, edge } => {
            let idx = targets.iter().map(|t| index(layout, t)).collect::<Result<Vec<_>, _>>()?;
            let values: Vec<f64> = idx.iter().map(|&i| edge.value(&layout.elements[i].bbox)).collect();
            let goal = match edge {
                Edge::Left | Edge::Top => values.iter().copied().fold(f64::INFINITY, f64::min),
                Edge::Right | Edge::Bottom => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            let mut needed = false;
            let mut moved = 0.0;
            for (&i, v) in idx.iter().zip(&values) {
                let d = (v - goal).abs();
                if d > 0.0 {
                    needed = true;
                    moved += move_by(&mut out, i, edge.direction(), d, tau_o);
                }
            }
            if needed && moved <= 0.0 {
                return Err(EditError::NoFeasibleMove("alignment"));
            }
        }
        EditCommand::Add { label, bbox } => {
            let slack = canvas_slack(layout.canvas_w, layout.canvas_h);
            let b = bbox.clamped(layout.canvas_w, layout.canvas_h);
            if !bbox.is_finite() || bbox.is_inverted() || b.area() <= slack || label.trim().is_empty() {
                return Err(EditError::InvalidMagnitude(format!("{:?}", bbox.to_array())));
            }
            if layout.elements.iter().any(|e| iou(&b, &e.bbox) > tau_o) {
                return Err(EditError::NoFeasibleMove("placement"));
            }
            let id = layout.fresh_id();
            out.elements.push(Element::object(id, label.clone(), b));
        }
    }
    Ok(EditOutcome {
        layout: out,
        applied_magnitude,
    })
}
