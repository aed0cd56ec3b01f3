//! Synthetic corpora: an unambiguous toy grammar for learning checks and a
//! random tree generator for property tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::inorder::InOrderModel;
use crate::tree::{ParseTree, Word};
use crate::treebank::DEFAULT_ROOT_LABEL;

const DT: &[&str] = &["the", "a", "every", "this"];
const NN: &[&str] = &["dog", "cat", "idea", "park", "telescope", "man", "garden", "letter"];
const JJ: &[&str] = &["big", "small", "red", "old", "quiet"];
const NNP: &[&str] = &["Kim", "Sandy", "Lee", "Pat", "Robin"];
const VBZ: &[&str] = &["sees", "likes", "knows", "finds", "wants"];
const VBD: &[&str] = &["left", "slept", "arrived", "laughed"];
const IN: &[&str] = &["in", "with", "near", "under"];

fn pre<R: Rng>(rng: &mut R, tag: &str, forms: &[&str]) -> ParseTree {
    ParseTree::leaf(Word::new(*forms.choose(rng).expect("non-empty"), tag).expect("valid word"))
}

fn node(label: &str, children: Vec<ParseTree>) -> ParseTree {
    ParseTree::node(label, children).expect("valid node")
}

fn np<R: Rng>(rng: &mut R) -> ParseTree {
    match rng.gen_range(0..3) {
        0 => node("NP", vec![pre(rng, "DT", DT), pre(rng, "NN", NN)]),
        1 => node("NP", vec![pre(rng, "DT", DT), pre(rng, "JJ", JJ), pre(rng, "NN", NN)]),
        _ => node("NP", vec![pre(rng, "NNP", NNP)]),
    }
}

fn vp<R: Rng>(rng: &mut R, depth: usize) -> ParseTree {
    let choice = if depth >= 2 { rng.gen_range(0..3) } else { rng.gen_range(0..4) };
    match choice {
        0 => node("VP", vec![pre(rng, "VBZ", VBZ), np(rng)]),
        1 => {
            let pp = node("PP", vec![pre(rng, "IN", IN), np(rng)]);
            node("VP", vec![pre(rng, "VBZ", VBZ), np(rng), pp])
        }
        2 => node("VP", vec![pre(rng, "VBD", VBD)]),
        _ => {
            let that = ParseTree::leaf(Word::new("that", "IN").expect("valid word"));
            node("VP", vec![pre(rng, "VBZ", VBZ), node("SBAR", vec![that, s(rng, depth + 1)])])
        }
    }
}

fn s<R: Rng>(rng: &mut R, depth: usize) -> ParseTree {
    node("S", vec![np(rng), vp(rng, depth)])
}

/// One sentence of the toy grammar, rooted in `TOP`:
///
/// ```text
/// S -> NP VP          NP -> DT NN | DT JJ NN | NNP
/// VP -> VBZ NP | VBZ NP PP | VBZ SBAR | VBD
/// PP -> IN NP         SBAR -> that/IN S
/// ```
///
/// Given the tags, every sentence has exactly one parse.
pub fn toy_sentence<R: Rng>(rng: &mut R) -> ParseTree {
    node(DEFAULT_ROOT_LABEL, vec![s(rng, 0)])
}

pub fn toy_corpus(size: usize, seed: u64) -> Vec<ParseTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size).map(|_| toy_sentence(&mut rng)).collect()
}

/// Copy of `tree` with phrasal labels renamed by `map`; other labels are kept.
pub fn rename_labels(tree: &ParseTree, map: &[(&str, &str)]) -> ParseTree {
    match tree {
        ParseTree::Leaf(_) => tree.clone(),
        ParseTree::Node(n) => {
            let label = map.iter().find(|(from, _)| *from == n.label()).map_or(n.label(), |(_, to)| *to);
            let children = n.children().iter().map(|c| rename_labels(c, map)).collect();
            node(label, children)
        }
    }
}

/// Random tree over `n` words. Phrasal nodes branch into two or three
/// children; unary chains are at most `max_unary` nodes deep, counting
/// `root` when given. Forms are `w0, w1, ...`.
pub fn random_tree<R: Rng>(
    rng: &mut R,
    n: usize,
    labels: &[&str],
    tags: &[&str],
    max_unary: usize,
    root: Option<&str>,
) -> ParseTree {
    assert!(n >= 1 && max_unary >= 1 && !labels.is_empty() && !tags.is_empty());
    assert!(root.is_none() || max_unary >= 2, "a root wrapper needs room for a chain of two");

    fn wrap<R: Rng>(rng: &mut R, mut t: ParseTree, labels: &[&str], room: usize) -> ParseTree {
        let mut depth = t.unary_depth();
        while depth < room && rng.gen_bool(0.2) {
            t = node(labels.choose(rng).expect("labels"), vec![t]);
            depth += 1;
        }
        t
    }

    fn build<R: Rng>(rng: &mut R, i: usize, j: usize, labels: &[&str], tags: &[&str], room: usize) -> ParseTree {
        let leaf = |rng: &mut R, k: usize| {
            ParseTree::leaf(Word::new(format!("w{k}"), *tags.choose(rng).expect("tags")).expect("valid word"))
        };
        let core = if j - i == 1 {
            node(labels.choose(rng).expect("labels"), vec![leaf(rng, i)])
        } else {
            let parts = rng.gen_range(2..=(j - i).min(3));
            let mut cuts: Vec<usize> = (i + 1..j).collect::<Vec<_>>();
            cuts.shuffle(rng);
            let mut cuts: Vec<usize> = cuts.into_iter().take(parts - 1).collect();
            cuts.sort_unstable();
            let mut bounds = vec![i];
            bounds.extend(cuts);
            bounds.push(j);
            let children = bounds
                .windows(2)
                .map(|w| {
                    if w[1] - w[0] == 1 && rng.gen_bool(0.6) {
                        leaf(rng, w[0])
                    } else {
                        build(rng, w[0], w[1], labels, tags, room)
                    }
                })
                .collect();
            node(labels.choose(rng).expect("labels"), children)
        };
        wrap(rng, core, labels, room)
    }

    match root {
        Some(r) => node(r, vec![build(rng, 0, n, labels, tags, max_unary - 1)]),
        None => build(rng, 0, n, labels, tags, max_unary),
    }
}

/// In-order model whose every hashed feature row is drawn uniformly from
/// `[-scale, scale)`.
pub fn random_inorder_model<R: Rng>(
    rng: &mut R,
    labels: &[String],
    hash_bits: u32,
    unary_limit: usize,
    beam_size: usize,
    scale: f32,
) -> InOrderModel {
    let mut m = InOrderModel::untrained(labels, hash_bits, unary_limit, beam_size);
    let classes = m.actions().len();
    for i in 0..(1u32 << hash_bits) {
        m.scorer.rows.insert(i, (0..classes).map(|_| rng.gen_range(-scale..scale)).collect());
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{normalize, NormalizationConfig};

    #[test]
    fn toy_corpus_is_deterministic_and_normal() {
        let a = toy_corpus(50, 9);
        assert_eq!(a, toy_corpus(50, 9));
        assert_ne!(a, toy_corpus(50, 10));
        let cfg = NormalizationConfig::default();
        for t in &a {
            assert_eq!(t.label(), "TOP");
            assert_eq!(normalize(t, &cfg).as_ref(), Some(t));
        }
    }

    #[test]
    fn random_trees_respect_unary_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..12 {
            for _ in 0..50 {
                let t = random_tree(&mut rng, n, &["A", "B", "C"], &["X", "Y"], 3, Some("TOP"));
                assert_eq!(t.num_leaves(), n);
                assert!(t.max_unary_depth() <= 3, "{t}");
                assert_eq!(t.label(), "TOP");
            }
        }
    }

    #[test]
    fn rename() {
        let t = toy_corpus(1, 1).remove(0);
        let r = rename_labels(&t, &[("NP", "NX")]);
        assert!(r.spans().iter().all(|s| s.label != "NP"));
        assert_eq!(r.sentence(), t.sentence());
    }
}
