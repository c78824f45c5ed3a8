//! Fixed-length layout feature vectors for the Fréchet distance.
//!
//! Slots `0..32` hold geometric statistics on canvas-normalized coordinates;
//! slots `32..96` hold the mean of per-element vectors
//! `[l, t, r, b] ⊕ embed(label)[..60]`. Every aggregate is computed with
//! order-independent sums, so permuting the elements leaves the vector
//! unchanged.
//!
//! | slots | content |
//! |---|---|
//! | 0 | element count / 10 |
//! | 1 | union coverage of the canvas |
//! | 2, 3 | mean center x, y |
//! | 4, 5 | std center x, y |
//! | 6, 7 | mean width, height |
//! | 8, 9 | std width, height |
//! | 10, 11 | mean, std area |
//! | 12, 13 | mean, max pairwise IoU |
//! | 14..18 | min left, min top, max right, max bottom |
//! | 18, 19 | mean, std of w/(w+h) |
//! | 20 | fraction of text spans |
//! | 21 | fraction of image or vector assets |
//! | 22..26 | fraction of centers per quadrant (TL, TR, BL, BR) |
//! | 26..30 | union coverage per quadrant |
//! | 30, 31 | mean, std distance of centers to the canvas middle |

use alloc::vec;
use alloc::vec::Vec;

use super::embedding::{EmbeddingProvider, ProviderError};
use super::order_free_sum;
use crate::geometry::{iou, BBox, ElementKind, Layout};

pub const GEOMETRY_SLOTS: usize = 32;
pub const TEXT_SLOTS: usize = 60;
pub const FEATURE_DIM: usize = GEOMETRY_SLOTS + 4 + TEXT_SLOTS;

fn mean(v: &[f64]) -> f64 {
    order_free_sum(v.to_vec()) / v.len() as f64
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    let sq: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
    libm::sqrt(order_free_sum(sq) / v.len() as f64)
}

/// Area of the union of `boxes` clipped to `clip`, by coordinate compression.
fn union_area(boxes: &[BBox], clip: &BBox) -> f64 {
    let clipped: Vec<BBox> = boxes
        .iter()
        .map(|b| {
            BBox::new(
                b.left.max(clip.left),
                b.top.max(clip.top),
                b.right.min(clip.right),
                b.bottom.min(clip.bottom),
            )
        })
        .filter(|b| b.width() > 0.0 && b.height() > 0.0)
        .collect();
    let mut xs: Vec<f64> = clipped.iter().flat_map(|b| [b.left, b.right]).collect();
    let mut ys: Vec<f64> = clipped.iter().flat_map(|b| [b.top, b.bottom]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut cells = Vec::new();
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let (cx, cy) = (0.5 * (xw[0] + xw[1]), 0.5 * (yw[0] + yw[1]));
            if clipped
                .iter()
                .any(|b| b.left <= cx && cx <= b.right && b.top <= cy && cy <= b.bottom)
            {
                cells.push((xw[1] - xw[0]) * (yw[1] - yw[0]));
            }
        }
    }
    order_free_sum(cells)
}

/// Feature vector of length [`FEATURE_DIM`]; the empty layout maps to zeros.
pub fn featurize_layout(layout: &Layout, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>, ProviderError> {
    let mut out = vec![0.0; FEATURE_DIM];
    let n = layout.len();
    if n == 0 {
        return Ok(out);
    }
    let (w, h) = (layout.canvas_w, layout.canvas_h);
    let boxes: Vec<BBox> = layout
        .elements
        .iter()
        .map(|e| BBox::new(e.bbox.left / w, e.bbox.top / h, e.bbox.right / w, e.bbox.bottom / h))
        .collect();
    let col = |f: &dyn Fn(&BBox) -> f64| boxes.iter().map(f).collect::<Vec<f64>>();
    let cx = col(&|b| b.center().0);
    let cy = col(&|b| b.center().1);
    let bw = col(&|b| b.width());
    let bh = col(&|b| b.height());
    let area = col(&|b| b.area());
    let aspect = col(&|b| {
        let s = b.width() + b.height();
        if s > 0.0 {
            b.width() / s
        } else {
            0.5
        }
    });
    let dist: Vec<f64> = cx
        .iter()
        .zip(&cy)
        .map(|(x, y)| libm::sqrt((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)))
        .collect();
    let mut ious = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            ious.push(iou(&boxes[i], &boxes[j]));
        }
    }
    let unit = BBox::new(0.0, 0.0, 1.0, 1.0);
    let quadrants = [
        BBox::new(0.0, 0.0, 0.5, 0.5),
        BBox::new(0.5, 0.0, 1.0, 0.5),
        BBox::new(0.0, 0.5, 0.5, 1.0),
        BBox::new(0.5, 0.5, 1.0, 1.0),
    ];
    let count_frac = |p: &dyn Fn(usize) -> bool| (0..n).filter(|&i| p(i)).count() as f64 / n as f64;
    let kinds = |k: &[ElementKind]| count_frac(&|i| k.contains(&layout.elements[i].kind));

    let g = &mut out[..GEOMETRY_SLOTS];
    g[0] = n as f64 / 10.0;
    g[1] = union_area(&boxes, &unit);
    g[2] = mean(&cx);
    g[3] = mean(&cy);
    g[4] = std(&cx);
    g[5] = std(&cy);
    g[6] = mean(&bw);
    g[7] = mean(&bh);
    g[8] = std(&bw);
    g[9] = std(&bh);
    g[10] = mean(&area);
    g[11] = std(&area);
    if !ious.is_empty() {
        g[12] = mean(&ious);
        g[13] = ious.iter().copied().fold(0.0, f64::max);
    }
    g[14] = boxes.iter().map(|b| b.left).fold(f64::INFINITY, f64::min);
    g[15] = boxes.iter().map(|b| b.top).fold(f64::INFINITY, f64::min);
    g[16] = boxes.iter().map(|b| b.right).fold(f64::NEG_INFINITY, f64::max);
    g[17] = boxes.iter().map(|b| b.bottom).fold(f64::NEG_INFINITY, f64::max);
    g[18] = mean(&aspect);
    g[19] = std(&aspect);
    g[20] = kinds(&[ElementKind::TextSpan]);
    g[21] = kinds(&[ElementKind::ImageAsset, ElementKind::VectorAsset]);
    for (q, quad) in quadrants.iter().enumerate() {
        let right = q % 2 == 1;
        let lower = q >= 2;
        g[22 + q] = count_frac(&|i| (cx[i] >= 0.5) == right && (cy[i] >= 0.5) == lower);
        g[26 + q] = union_area(&boxes, quad) / 0.25;
    }
    g[30] = mean(&dist);
    g[31] = std(&dist);

    let mut pooled: Vec<Vec<f64>> = (0..4 + TEXT_SLOTS).map(|_| Vec::with_capacity(n)).collect();
    for (e, b) in layout.elements.iter().zip(&boxes) {
        let emb = provider.embed(&e.label)?;
        for (k, v) in b.to_array().into_iter().enumerate() {
            pooled[k].push(v);
        }
        for k in 0..TEXT_SLOTS {
            pooled[4 + k].push(emb.get(k).copied().unwrap_or(0.0));
        }
    }
    for (slot, values) in out[GEOMETRY_SLOTS..].iter_mut().zip(&pooled) {
        *slot = mean(values);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Element;
    use crate::metrics::TrigramEmbedder;
    use alloc::format;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn two() -> Layout {
        Layout::with_elements(
            128.,
            128.,
            vec![
                Element::object("a", "dog", BBox::new(0., 0., 32., 32.)),
                Element::text("b", "hello", BBox::new(64., 64., 128., 96.)),
            ],
        )
    }

    #[test]
    fn empty_is_zero() {
        let v = featurize_layout(&Layout::new(128., 128.), &TrigramEmbedder::default()).unwrap();
        assert_eq!(v, vec![0.0; 96]);
    }

    #[test]
    fn hand_computed_slots() {
        let v = featurize_layout(&two(), &TrigramEmbedder::default()).unwrap();
        assert_eq!(v.len(), FEATURE_DIM);
        assert_eq!(v[0], 0.2);
        // 1/16 + 1/8 of the canvas, disjoint.
        assert!((v[1] - 0.1875).abs() < 1e-15);
        // centers (0.125, 0.125) and (0.75, 0.625)
        assert!((v[2] - 0.4375).abs() < 1e-15);
        assert!((v[3] - 0.375).abs() < 1e-15);
        assert_eq!(v[12], 0.0);
        assert_eq!((v[14], v[15], v[16], v[17]), (0.0, 0.0, 1.0, 0.75));
        assert_eq!(v[20], 0.5);
        assert_eq!((v[22], v[23], v[24], v[25]), (0.5, 0.0, 0.0, 0.5));
        assert!((v[26] - 0.25).abs() < 1e-15);
        assert!((v[29] - 0.5).abs() < 1e-15);
        // pooled left = (0 + 0.5)/2
        assert_eq!(v[32], 0.25);
    }

    #[test]
    fn translation_moves_center_means() {
        let p = TrigramEmbedder::default();
        let a = two();
        let mut c = Layout::with_elements(
            128.,
            128.,
            vec![
                Element::object("a", "dog", BBox::new(10., 0., 42., 32.)),
                Element::text("b", "hello", BBox::new(54., 64., 118., 96.)),
            ],
        );
        let (va, vc) = (featurize_layout(&a, &p).unwrap(), featurize_layout(&c, &p).unwrap());
        // element a moves right by 10, b moves left by 10: mean unchanged
        assert!((va[2] - vc[2]).abs() < 1e-15);
        for e in &mut c.elements {
            e.bbox = e.bbox.translated(10.0, 0.0);
        }
        let vt = featurize_layout(&c, &p).unwrap();
        assert!((vt[2] - vc[2] - 10.0 / 128.0).abs() < 1e-12);
        assert!((vt[3] - vc[3]).abs() < 1e-15);
        assert_eq!(featurize_layout(&a, &p).unwrap(), va);
    }

    #[test]
    fn permutation_invariant() {
        let p = TrigramEmbedder::default();
        let mut rng = crate::seed::rng(4);
        for _ in 0..50 {
            let n = rng.random_range(1..8);
            let elements: Vec<Element> = (0..n)
                .map(|i| {
                    let x = rng.random_range(0.0..100.0);
                    let y = rng.random_range(0.0..100.0);
                    let b = BBox::new(x, y, x + rng.random_range(0.0..28.0), y + rng.random_range(0.0..28.0));
                    Element::object(format!("e{i}"), format!("thing {}", rng.random_range(0..5)), b)
                })
                .collect();
            let a = Layout::with_elements(128., 128., elements.clone());
            let mut shuffled = elements;
            shuffled.shuffle(&mut rng);
            let b = Layout::with_elements(128., 128., shuffled);
            assert_eq!(featurize_layout(&a, &p).unwrap(), featurize_layout(&b, &p).unwrap());
        }
    }

    #[test]
    fn union_area_counts_overlap_once() {
        let boxes = [BBox::new(0., 0., 2., 2.), BBox::new(1., 1., 3., 3.)];
        assert_eq!(union_area(&boxes, &BBox::new(0., 0., 10., 10.)), 7.0);
        assert_eq!(union_area(&boxes, &BBox::new(0., 0., 1., 1.)), 1.0);
    }
}
