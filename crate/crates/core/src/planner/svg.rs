//! Inspection rendering: one outlined rectangle and one label per element.

use alloc::format;
use alloc::string::String;
use core::fmt::Write as _;

use crate::geometry::{ElementKind, Layout};

const TEXT_COLOR: &str = "#2e7d32";
const VISUAL_COLOR: &str = "#c62828";

/// Shortest decimal with at most three fraction digits.
fn num(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        String::from("0")
    } else {
        String::from(s)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

/// Text spans are drawn green, everything else red. The canvas frame is a
/// `path`, so the document holds exactly one `rect` and one `text` per
/// element.
pub fn render_svg(layout: &Layout) -> String {
    let (w, h) = (num(layout.canvas_w), num(layout.canvas_h));
    let font_size = (layout.canvas_w.min(layout.canvas_h) / 20.0).max(1.0);
    let font = num(font_size);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "  <path d=\"M0 0H{w}V{h}H0Z\" fill=\"#ffffff\" stroke=\"#9e9e9e\" stroke-width=\"1\"/>");
    for e in &layout.elements {
        let color = if e.kind == ElementKind::TextSpan {
            TEXT_COLOR
        } else {
            VISUAL_COLOR
        };
        let b = &e.bbox;
        let _ = writeln!(
            s,
            "  <rect data-id=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"/>",
            escape(&e.id),
            num(b.left),
            num(b.top),
            num(b.width()),
            num(b.height()),
        );
        let _ = writeln!(
            s,
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"{font}\" fill=\"{color}\">{}</text>",
            num(b.left + 1.0),
            // baseline one line below the top edge
            num(b.top + 1.0 + font_size),
            escape(&e.label),
        );
    }
    s.push_str("</svg>\n");
    s
}
