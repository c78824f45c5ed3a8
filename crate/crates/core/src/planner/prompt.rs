//! Versioned prompt templates.

use alloc::format;
use alloc::string::String;

use super::retrieval::Demonstration;
use super::{PlanMode, PromptSpec};
use crate::codec::{serialize, LayoutFormat};
use crate::geometry::Layout;

/// Bumped whenever any template below changes.
pub const PROMPT_VERSION: &str = "layplan-prompt/1";

pub const SYSTEM_PROMPT: &str =
    "You are a layout planner. You place the elements of a scene or design on a canvas and reply with the layout only, without commentary.";

/// Grammar reminder for one format.
pub fn format_instructions(fmt: LayoutFormat) -> &'static str {
    match fmt {
        LayoutFormat::IntList128 => {
            "Write one element per line as `label: [left, top, right, bottom]` with integer coordinates from 0 to 128."
        }
        LayoutFormat::IntList1024 => {
            "Write one element per line as `label: [left, top, right, bottom]` with integer coordinates from 0 to 1024."
        }
        LayoutFormat::FloatList => {
            "Write one element per line as `label: [left, top, right, bottom]` with coordinates between 0 and 1 written with three decimals."
        }
        LayoutFormat::Css128 => {
            "Write one element per line as `label { left: Lpx; top: Tpx; width: Wpx; height: Hpx }` with integers from 0 to 128."
        }
        LayoutFormat::JsonFloat => {
            "Write a JSON array of objects with keys \"label\", \"left\", \"top\", \"right\" and \"bottom\"; coordinates are between 0 and 1 with three decimals."
        }
    }
}

fn task_line(mode: PlanMode) -> &'static str {
    match mode {
        PlanMode::Closed => "Plan the positions of the objects described below.",
        PlanMode::Open => "Plan the positions of the objects described below; labels may be free-form phrases.",
        PlanMode::VisualText => {
            "Plan the positions of the objects and text described below. Put each text element's words in double quotes."
        }
        PlanMode::Graphic => "Plan the positions of the design elements listed below.",
    }
}

fn show_canvas(spec: &PromptSpec) -> bool {
    spec.mode == PlanMode::Graphic && spec.format != LayoutFormat::FloatList && spec.format != LayoutFormat::JsonFloat
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Deterministic prompt: task, format, optional canvas size, optional
/// demonstrations, then the caption and the optional element list.
pub fn build_prompt(spec: &PromptSpec, demos: &[Demonstration]) -> String {
    let mut s = String::new();
    s.push_str(task_line(spec.mode));
    s.push('\n');
    s.push_str(format_instructions(spec.format));
    s.push('\n');
    if show_canvas(spec) {
        s.push_str(&format!("Canvas size: {} x {}\n", fmt_num(spec.canvas_w), fmt_num(spec.canvas_h)));
    }
    if !demos.is_empty() {
        s.push_str("\n### Examples\n");
        for d in demos {
            s.push_str(&format!("\nDescription: {}\nLayout:\n{}\n", d.prompt_text, d.layout_text));
        }
        s.push_str("\n### Task\n");
    }
    s.push_str(&format!("\nDescription: {}\n", spec.caption.trim()));
    if let Some(targets) = &spec.target_elements {
        s.push_str(&format!("Elements: {}\n", targets.join(", ")));
    }
    s.push_str("Layout:\n");
    s
}

/// Prompt for a free-form edit request against the current layout.
pub fn build_edit_prompt(spec: &PromptSpec, current: &Layout, message: &str) -> String {
    let mut s = String::new();
    s.push_str("Revise the layout below according to the request. Keep elements that the request does not mention unchanged.\n");
    s.push_str(format_instructions(spec.format));
    s.push('\n');
    if show_canvas(spec) {
        s.push_str(&format!("Canvas size: {} x {}\n", fmt_num(spec.canvas_w), fmt_num(spec.canvas_h)));
    }
    s.push_str(&format!("\nDescription: {}\n", spec.caption.trim()));
    s.push_str(&format!("Current layout:\n{}\n", serialize(current, spec.format)));
    s.push_str(&format!("\nRequest: {}\nUpdated layout:\n", message.trim()));
    s
}
