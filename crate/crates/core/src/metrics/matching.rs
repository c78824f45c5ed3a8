//! MaxIoU: optimal one-to-one matching of generated and reference elements.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::assignment::hungarian_max;
use super::embedding::{cosine, EmbeddingProvider, ProviderError};
use super::pairwise_sum;
use crate::geometry::{iou, Layout};
use crate::text::normalize_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Pairs must carry the same (normalized) label.
    Closed,
    /// Pairs are chosen by label-embedding similarity.
    Open,
}

impl core::str::FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "closed" => Ok(MatchMode::Closed),
            "open" => Ok(MatchMode::Open),
            other => Err(alloc::format!("unknown match mode `{other}`")),
        }
    }
}

/// Thresholds for open-set matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Matched pairs below this label similarity are discarded for MaxIoU.
    pub similarity_floor: f64,
    /// Minimum label similarity for a precision/recall hit.
    pub prf_threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            similarity_floor: 0.2,
            prf_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub generated: usize,
    pub reference: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Sorted by generated index.
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gen: Vec<usize>,
    pub unmatched_ref: Vec<usize>,
    pub max_iou: f64,
}

fn finish(gen: &Layout, reference: &Layout, mut pairs: Vec<MatchedPair>) -> MatchResult {
    pairs.sort_by_key(|p| p.generated);
    let unmatched_gen = (0..gen.len()).filter(|i| !pairs.iter().any(|p| p.generated == *i)).collect();
    let unmatched_ref = (0..reference.len())
        .filter(|j| !pairs.iter().any(|p| p.reference == *j))
        .collect();
    let denom = gen.len().max(reference.len());
    let max_iou = if denom == 0 {
        1.0
    } else {
        let ious: Vec<f64> = pairs.iter().map(|p| p.iou).collect();
        (pairwise_sum(&ious) / denom as f64).clamp(0.0, 1.0)
    };
    MatchResult {
        pairs,
        unmatched_gen,
        unmatched_ref,
        max_iou,
    }
}

/// Closed-set MaxIoU: within each label group, maximize total IoU; divide by
/// the larger element count. Two empty layouts score 1, one empty scores 0.
pub fn max_iou_closed(gen: &Layout, reference: &Layout) -> MatchResult {
    let mut groups: BTreeMap<String, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, e) in gen.elements.iter().enumerate() {
        groups.entry(normalize_label(&e.label)).or_default().0.push(i);
    }
    for (j, e) in reference.elements.iter().enumerate() {
        groups.entry(normalize_label(&e.label)).or_default().1.push(j);
    }
    let mut pairs = Vec::new();
    for (gi, ri) in groups.values() {
        if gi.is_empty() || ri.is_empty() {
            continue;
        }
        let weights: Vec<Vec<f64>> = gi
            .iter()
            .map(|&i| ri.iter().map(|&j| iou(&gen.elements[i].bbox, &reference.elements[j].bbox)).collect())
            .collect();
        for (a, b) in hungarian_max(&weights).pairs {
            pairs.push(MatchedPair {
                generated: gi[a],
                reference: ri[b],
                iou: weights[a][b],
            });
        }
    }
    finish(gen, reference, pairs)
}

/// Open-set MaxIoU with the default similarity floor.
pub fn max_iou_open(gen: &Layout, reference: &Layout, provider: &dyn EmbeddingProvider) -> Result<MatchResult, ProviderError> {
    max_iou_open_with(gen, reference, provider, &MatchConfig::default())
}

/// Open-set MaxIoU: assignment maximizes total label cosine similarity; pairs
/// below the floor are dropped; the IoU of the kept pairs is averaged over
/// the larger element count.
pub fn max_iou_open_with(
    gen: &Layout,
    reference: &Layout,
    provider: &dyn EmbeddingProvider,
    cfg: &MatchConfig,
) -> Result<MatchResult, ProviderError> {
    let ge = embed_all(gen, provider)?;
    let re = embed_all(reference, provider)?;
    let sims: Vec<Vec<f64>> = ge.iter().map(|g| re.iter().map(|r| cosine(g, r)).collect()).collect();
    let pairs = hungarian_max(&sims)
        .pairs
        .into_iter()
        .filter(|&(i, j)| sims[i][j] >= cfg.similarity_floor)
        .map(|(i, j)| MatchedPair {
            generated: i,
            reference: j,
            iou: iou(&gen.elements[i].bbox, &reference.elements[j].bbox),
        })
        .collect();
    Ok(finish(gen, reference, pairs))
}

fn embed_all(layout: &Layout, provider: &dyn EmbeddingProvider) -> Result<Vec<Vec<f64>>, ProviderError> {
    layout.elements.iter().map(|e| provider.embed(&e.label)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, Element};
    use crate::metrics::TrigramEmbedder;
    use alloc::vec;

    fn layout(items: &[(&str, [f64; 4])]) -> Layout {
        Layout::with_elements(
            128.,
            128.,
            items
                .iter()
                .enumerate()
                .map(|(i, (l, b))| Element::object(alloc::format!("e{i}"), *l, BBox::new(b[0], b[1], b[2], b[3])))
                .collect(),
        )
    }

    /// Best total IoU over every label-respecting permutation.
    fn brute_closed(gen: &Layout, reference: &Layout) -> f64 {
        fn go(g: &Layout, r: &Layout, i: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if i == g.len() {
                *best = best.max(acc);
                return;
            }
            go(g, r, i + 1, used, acc, best);
            for j in 0..r.len() {
                if !used[j] && normalize_label(&g.elements[i].label) == normalize_label(&r.elements[j].label) {
                    used[j] = true;
                    go(g, r, i + 1, used, acc + iou(&g.elements[i].bbox, &r.elements[j].bbox), best);
                    used[j] = false;
                }
            }
        }
        let mut best = 0.0;
        go(gen, reference, 0, &mut vec![false; reference.len()], 0.0, &mut best);
        best / gen.len().max(reference.len()) as f64
    }

    #[test]
    fn closed_examples() {
        let a = layout(&[("dog", [0., 0., 20., 20.]), ("cat", [40., 40., 90., 90.])]);
        assert_eq!(max_iou_closed(&a, &a).max_iou, 1.0);

        let d = layout(&[("dog", [0., 0., 20., 20.])]);
        let c = layout(&[("cat", [0., 0., 20., 20.])]);
        let r = max_iou_closed(&d, &c);
        assert_eq!(r.max_iou, 0.0);
        assert_eq!((r.unmatched_gen.len(), r.unmatched_ref.len()), (1, 1));

        let gen = layout(&[("dog", [0., 0., 20., 20.]), ("dog", [50., 50., 80., 80.])]);
        let reference = layout(&[("Dog", [50., 50., 80., 80.]), ("dog ", [0., 0., 20., 20.])]);
        let r = max_iou_closed(&gen, &reference);
        assert_eq!(r.max_iou, 1.0);
        assert_eq!(brute_closed(&gen, &reference), 1.0);
        assert_eq!(r.pairs.iter().map(|p| (p.generated, p.reference)).collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn empty_conventions() {
        let empty = Layout::new(128., 128.);
        let one = layout(&[("dog", [0., 0., 20., 20.])]);
        assert_eq!(max_iou_closed(&empty, &empty).max_iou, 1.0);
        assert_eq!(max_iou_closed(&one, &empty).max_iou, 0.0);
        assert_eq!(max_iou_closed(&empty, &one).max_iou, 0.0);
    }

    #[test]
    fn closed_agrees_with_brute_force() {
        use rand::Rng;
        let mut rng = crate::seed::rng(5);
        let labels = ["dog", "cat", "car"];
        for _ in 0..200 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
                let items: Vec<(&str, [f64; 4])> = (0..n)
                    .map(|_| {
                        let x = rng.random_range(0.0..100.0);
                        let y = rng.random_range(0.0..100.0);
                        let w = rng.random_range(1.0..28.0);
                        let h = rng.random_range(1.0..28.0);
                        (labels[rng.random_range(0..3)], [x, y, x + w, y + h])
                    })
                    .collect();
                layout(&items)
            };
            let ng = rng.random_range(0..6);
            let g = mk(&mut rng, ng);
            let nr = rng.random_range(0..6);
            let r = mk(&mut rng, nr);
            if g.is_empty() && r.is_empty() {
                continue;
            }
            let got = max_iou_closed(&g, &r).max_iou;
            assert!((got - brute_closed(&g, &r)).abs() < 1e-12);
            assert!((got - max_iou_closed(&r, &g).max_iou).abs() < 1e-12);
        }
    }

    #[test]
    fn open_identical_scores_one() {
        let p = TrigramEmbedder::default();
        let a = layout(&[("sleepy puppy", [0., 0., 20., 20.]), ("red bike", [40., 40., 90., 90.])]);
        assert!((max_iou_open(&a, &a, &p).unwrap().max_iou - 1.0).abs() < 1e-12);
    }

    #[test]
    fn open_split_text_spans() {
        let p = TrigramEmbedder::default();
        let gen = layout(&[("hello world", [10., 10., 110., 30.])]);
        let reference = layout(&[("hello", [10., 10., 60., 30.]), ("world", [60., 10., 110., 30.])]);

        // Oracle: every injective assignment, keep pairs with similarity >= 0.2.
        let sim = |a: &str, b: &str| cosine(&p.embed(a).unwrap(), &p.embed(b).unwrap());
        let s0 = sim("hello world", "hello");
        let s1 = sim("hello world", "world");
        assert!(s0 >= 0.2 && s1 >= 0.2);
        let (pick, s) = if s0 >= s1 { (0, s0) } else { (1, s1) };
        assert!(s >= 0.2);
        let expected = iou(&gen.elements[0].bbox, &reference.elements[pick].bbox) / 2.0;

        let r = max_iou_open(&gen, &reference, &p).unwrap();
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.pairs[0].reference, pick);
        assert!((r.max_iou - expected).abs() < 1e-12);
        // Each half covers half of the phrase box.
        assert!((expected - 0.25).abs() < 1e-12);
    }

    #[test]
    fn open_floor_discards_dissimilar() {
        let p = TrigramEmbedder::default();
        let gen = layout(&[("qqq", [0., 0., 20., 20.])]);
        let reference = layout(&[("zzz", [0., 0., 20., 20.])]);
        let sim = cosine(&p.embed("qqq").unwrap(), &p.embed("zzz").unwrap());
        assert!(sim < 0.2);
        let r = max_iou_open(&gen, &reference, &p).unwrap();
        assert_eq!(r.max_iou, 0.0);
        assert!(r.pairs.is_empty());
        assert_eq!((r.unmatched_gen, r.unmatched_ref), (vec![0], vec![0]));
    }
}
