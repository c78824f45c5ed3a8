//! Layout planning primitives.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (an allocator is required). File formats, network
//! backends, the HTTP service and the command line live in the `layplan`
//! companion crate.
//!
//! Module map:
//!
//! - [`geometry`]: boxes, elements, layouts, IoU and validation.
//! - [`codec`]: the textual layout representations and the strict parser.
//! - [`pipeline`]: dataset construction rules and layout-shift augmentation.
//! - [`metrics`]: matching, MaxIoU, precision/recall, failure rate and the
//!   Fréchet distance over layout features.
//! - [`planner`]: prompts, demonstration retrieval, the chat-backend loop,
//!   deterministic edits, sessions and SVG rendering.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod codec;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod planner;
pub mod seed;

mod text;

pub use codec::{FailureReason, LayoutFormat, ParseOutcome};
pub use geometry::{BBox, Direction, Element, ElementKind, Layout, Violation, ViolationCode};
