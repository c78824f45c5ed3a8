//! Layout-shift augmentation: move one element in a named direction without
//! creating new overlap, paired with an instruction sentence.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{extremal_index, feasible_shift, max_pairwise_iou, shift_element, Direction, Layout};
use crate::seed::rng;

/// Shortest move, as a fraction of the canvas extent along the move axis.
pub const MIN_SHIFT_FRACTION: f64 = 0.05;

/// Eight phrasings; `{label}`, `{dir}` and `{n}` are substituted.
pub const SHIFT_TEMPLATES: [&str; 8] = [
    "Move the {label} {dir} by {n} units.",
    "Shift the {label} {n} units {dir}.",
    "Please move the {label} {dir} by {n}.",
    "Nudge the {label} {dir} by {n} units.",
    "Can you shift the {label} {dir} by {n} units?",
    "Push the {label} {n} units {dir}.",
    "Slide the {label} {dir} by {n} units.",
    "Reposition the {label} by moving it {dir} {n} units.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftInstruction {
    pub element_id: String,
    pub label: String,
    pub direction: Direction,
    /// Canvas units, a positive integer.
    pub distance: f64,
    pub instruction_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ShiftError {
    #[error("layout has no elements")]
    EmptyLayout,
    #[error("no element can move in any direction")]
    NoFeasibleMove,
}

pub fn render_template(template: &str, label: &str, direction: Direction, distance: f64) -> String {
    template
        .replace("{label}", label)
        .replace("{dir}", direction.as_str())
        .replace("{n}", &format!("{distance}"))
}

/// Seeded layout shift.
///
/// Candidates are tried in two tiers, each in seeded random order: first the
/// extremal element of each direction moving outward, then every other
/// (element, direction) pair. The first candidate whose feasible range holds
/// an integer distance of at least `MIN_SHIFT_FRACTION` of the axis is moved
/// by a uniformly drawn integer distance in that range.
///
/// Feasibility keeps the box on the canvas and keeps each pair IoU at or
/// below the layout's current maximum pair IoU, so the maximum never grows.
pub fn shift_augment(layout: &Layout, seed: u64) -> Result<(ShiftInstruction, Layout), ShiftError> {
    if layout.is_empty() {
        return Err(ShiftError::EmptyLayout);
    }
    let mut rng = rng(seed);
    let cap = max_pairwise_iou(layout);

    let mut extremal: Vec<(usize, Direction)> = Direction::ALL
        .iter()
        .map(|&d| (extremal_index(layout, d).unwrap_or(0), d))
        .collect();
    extremal.shuffle(&mut rng);
    let mut rest: Vec<(usize, Direction)> = (0..layout.len())
        .flat_map(|i| Direction::ALL.iter().map(move |&d| (i, d)))
        .filter(|c| !extremal.contains(c))
        .collect();
    rest.shuffle(&mut rng);

    for (index, direction) in extremal.into_iter().chain(rest) {
        let lo = libm::ceil(MIN_SHIFT_FRACTION * layout.extent_along(direction)).max(1.0);
        // Back off from the exact boundary so rounding cannot cross it.
        let hi = libm::floor(feasible_shift(layout, index, direction, &|_| cap) - 1e-9);
        if hi < lo {
            continue;
        }
        let distance = rng.random_range(lo as u64..=hi as u64) as f64;
        let template = SHIFT_TEMPLATES[rng.random_range(0..SHIFT_TEMPLATES.len())];
        let mut moved = layout.clone();
        shift_element(&mut moved, index, direction, distance);
        if max_pairwise_iou(&moved) > cap {
            continue;
        }
        let el = &layout.elements[index];
        return Ok((
            ShiftInstruction {
                element_id: el.id.clone(),
                label: el.label.clone(),
                direction,
                distance,
                instruction_text: render_template(template, &el.label, direction, distance),
            },
            moved,
        ));
    }
    Err(ShiftError::NoFeasibleMove)
}
