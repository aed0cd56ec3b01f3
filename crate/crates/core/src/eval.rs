//! Evalb-style bracketing metrics and the relative-error statistics used to
//! compare parsers across corpora.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::tree::{ParseTree, Span};
use crate::treebank::DEFAULT_ROOT_LABEL;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("gold has {gold} sentences but prediction has {pred}")]
    Alignment { gold: usize, pred: usize },
    #[error("relative error is undefined for a reference F1 of 100")]
    PerfectReference,
    #[error("parameter file line {line}: {message}")]
    Params { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalConfig {
    pub root_label: String,
    /// Labels never counted as brackets. Always contains `root_label`.
    pub deleted_labels: BTreeSet<String>,
    /// Tags whose words are removed before span indices are computed.
    pub deleted_tags: BTreeSet<String>,
    /// Label rewrites applied before comparison.
    pub equivalences: BTreeMap<String, String>,
}

pub const DEFAULT_DELETED_TAGS: [&str; 7] = ["``", "''", ":", ",", ".", "-LRB-", "-RRB-"];

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig::with_root(DEFAULT_ROOT_LABEL)
    }
}

impl EvalConfig {
    pub fn with_root(root_label: &str) -> Self {
        EvalConfig {
            root_label: root_label.to_string(),
            deleted_labels: [root_label.to_string()].into(),
            deleted_tags: DEFAULT_DELETED_TAGS.iter().map(|s| s.to_string()).collect(),
            equivalences: BTreeMap::new(),
        }
    }

    /// Only the root label is deleted; every word keeps its index.
    pub fn no_deletions(root_label: &str) -> Self {
        EvalConfig { deleted_tags: BTreeSet::new(), ..EvalConfig::with_root(root_label) }
    }

    /// Parses the parameter file format:
    ///
    /// ```text
    /// # comment
    /// ROOT_LABEL TOP
    /// DELETE_LABEL TOP
    /// DELETE_TAG ,
    /// EQ_LABEL ADVP PRT
    /// ```
    ///
    /// A file that lists no `DELETE_TAG` lines deletes no tags.
    pub fn parse_params(text: &str) -> Result<Self, EvalError> {
        let mut root = DEFAULT_ROOT_LABEL.to_string();
        let mut labels = BTreeSet::new();
        let mut tags = BTreeSet::new();
        let mut eq = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| EvalError::Params { line: i + 1, message: message.to_string() };
            let fields: Vec<_> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["ROOT_LABEL", l] => root = l.to_string(),
                ["DELETE_LABEL", l] => {
                    labels.insert(l.to_string());
                }
                ["DELETE_TAG", t] => {
                    tags.insert(t.to_string());
                }
                ["EQ_LABEL", from, to] => {
                    eq.insert(from.to_string(), to.to_string());
                }
                [key, ..] if ["ROOT_LABEL", "DELETE_LABEL", "DELETE_TAG", "EQ_LABEL"].contains(key) => {
                    return Err(err("wrong number of fields"))
                }
                _ => return Err(err("unknown key")),
            }
        }
        labels.insert(root.clone());
        Ok(EvalConfig { root_label: root, deleted_labels: labels, deleted_tags: tags, equivalences: eq })
    }

    /// Renders the configuration in the parameter file format.
    pub fn to_params(&self) -> String {
        let mut out = format!("ROOT_LABEL {}\n", self.root_label);
        for l in &self.deleted_labels {
            out.push_str(&format!("DELETE_LABEL {l}\n"));
        }
        for t in &self.deleted_tags {
            out.push_str(&format!("DELETE_TAG {t}\n"));
        }
        for (a, b) in &self.equivalences {
            out.push_str(&format!("EQ_LABEL {a} {b}\n"));
        }
        out
    }

    fn canonical<'a>(&'a self, label: &'a str) -> &'a str {
        self.equivalences.get(label).map_or(label, String::as_str)
    }
}

/// A bracket multiset, kept sorted so that equality is multiset equality.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BracketSet {
    spans: Vec<Span>,
}

impl BracketSet {
    pub fn new(mut spans: Vec<Span>) -> Self {
        spans.sort();
        BracketSet { spans }
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Size of the multiset intersection.
    pub fn matched(&self, other: &BracketSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.spans.len() && j < other.spans.len() {
            match self.spans[i].cmp(&other.spans[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// Brackets spanning at least `min_len` words.
    pub fn filter_min_len(&self, min_len: usize) -> BracketSet {
        BracketSet { spans: self.spans.iter().filter(|s| s.len() >= min_len).cloned().collect() }
    }
}

/// Extracts evaluation brackets: deleted labels dropped, equivalences applied,
/// indices recomputed after removing words with deleted tags. Brackets that
/// cover only deleted words disappear.
pub fn eval_brackets(tree: &ParseTree, config: &EvalConfig) -> BracketSet {
    let leaves = tree.leaves();
    // kept[i] = number of kept words strictly before word i
    let mut kept = Vec::with_capacity(leaves.len() + 1);
    let mut count = 0;
    kept.push(0);
    for w in &leaves {
        if !config.deleted_tags.contains(w.tag()) {
            count += 1;
        }
        kept.push(count);
    }
    let spans = tree
        .spans()
        .into_iter()
        .filter(|s| !config.deleted_labels.contains(&s.label))
        .filter_map(|s| {
            let (start, end) = (kept[s.start], kept[s.end]);
            (start < end).then(|| Span::new(config.canonical(&s.label), start, end))
        })
        .collect();
    BracketSet::new(spans)
}

/// Bracketing precision/recall/F1 as percentages, with the raw counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub gold_count: usize,
    pub predicted_count: usize,
}

impl F1Score {
    /// Zero denominators yield 0 for the affected percentage.
    pub fn from_counts(matched: usize, gold_count: usize, predicted_count: usize) -> Self {
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = pct(matched, predicted_count);
        let recall = pct(matched, gold_count);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        F1Score { precision, recall, f1, matched, gold_count, predicted_count }
    }

    /// No brackets on either side, e.g. after a span-length filter removed all.
    pub fn is_empty(&self) -> bool {
        self.gold_count == 0 && self.predicted_count == 0
    }
}

impl fmt::Display for F1Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P={:.2} R={:.2} F1={:.2} (matched={} gold={} pred={})",
            self.precision, self.recall, self.f1, self.matched, self.gold_count, self.predicted_count
        )
    }
}

fn check_aligned(gold: &[BracketSet], pred: &[BracketSet]) -> Result<(), EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::Alignment { gold: gold.len(), pred: pred.len() });
    }
    Ok(())
}

/// Micro-averaged labeled bracketing score over aligned corpora.
pub fn corpus_f1(gold: &[BracketSet], pred: &[BracketSet]) -> Result<F1Score, EvalError> {
    f1_min_span_length(gold, pred, 0)
}

/// Percentage of sentences whose bracket multisets are identical.
pub fn exact_match(gold: &[BracketSet], pred: &[BracketSet]) -> Result<f64, EvalError> {
    check_aligned(gold, pred)?;
    if gold.is_empty() {
        return Ok(0.0);
    }
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(100.0 * hits as f64 / gold.len() as f64)
}

/// Corpus F1 restricted to brackets of at least `min_len` words on both sides.
pub fn f1_min_span_length(gold: &[BracketSet], pred: &[BracketSet], min_len: usize) -> Result<F1Score, EvalError> {
    check_aligned(gold, pred)?;
    let (mut matched, mut g, mut p) = (0, 0, 0);
    for (gs, ps) in gold.iter().zip(pred) {
        if min_len == 0 {
            matched += gs.matched(ps);
            g += gs.len();
            p += ps.len();
        } else {
            let (gs, ps) = (gs.filter_min_len(min_len), ps.filter_min_len(min_len));
            matched += gs.matched(&ps);
            g += gs.len();
            p += ps.len();
        }
    }
    Ok(F1Score::from_counts(matched, g, p))
}

/// Relative change in error (100 - F1) of `f1_other` against `f1_reference`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStat {
    pub f1_reference: f64,
    pub f1_other: f64,
    /// Signed percentage; positive means more error than the reference.
    pub delta_err: f64,
}

/// Generalization gap: relative increase in error from the reference corpus.
pub fn delta_err(f1_reference: f64, f1_other: f64) -> Result<GapStat, EvalError> {
    let ref_err = 100.0 - f1_reference;
    if ref_err <= 0.0 {
        return Err(EvalError::PerfectReference);
    }
    let other_err = 100.0 - f1_other;
    Ok(GapStat { f1_reference, f1_other, delta_err: 100.0 * (other_err - ref_err) / ref_err })
}

/// Error reduction of an augmented model relative to its base; negative is better.
pub fn err_reduction(f1_base: f64, f1_augmented: f64) -> Result<GapStat, EvalError> {
    delta_err(f1_base, f1_augmented)
}

/// Machine-readable metric record: `corpus metric matched gold pred P R F1`.
pub fn metric_record(corpus: &str, metric: &str, score: &F1Score) -> String {
    format!(
        "{corpus}\t{metric}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
        score.matched, score.gold_count, score.predicted_count, score.precision, score.recall, score.f1
    )
}

pub const METRIC_RECORD_HEADER: &str = "corpus\tmetric\tmatched\tgold\tpredicted\tprecision\trecall\tf1";
