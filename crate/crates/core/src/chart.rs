//! The unstructured parser: every span is labeled independently by a
//! log-linear classifier, and CKY finds the best labeling that forms a tree.

use std::collections::{BTreeSet, HashMap};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eval::{corpus_f1, eval_brackets, EvalConfig};
use crate::linear::{log_softmax, Adam, Gradient, LinearModel, Slot};
use crate::repr::{featurize_span, FeatureHasher, Projection};
use crate::train::{lr_schedule, Corpus, EpochLog, TrainConfig, TrainLog};
use crate::tree::{ParseTree, Word};
use crate::treebank::DEFAULT_ROOT_LABEL;
use crate::{par_map, ParseError};

/// Label index 0: the span is not a constituent.
pub const NULL_LABEL: usize = 0;

/// Per-(start, end, label) scores for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanScoreGrid {
    n: usize,
    labels: Vec<String>,
    scores: Vec<f64>,
}

impl SpanScoreGrid {
    /// A grid of zeros. `labels[0]` is the null label.
    pub fn zeros(n: usize, labels: Vec<String>) -> Self {
        assert!(!labels.is_empty(), "label vocabulary must contain the null label");
        let scores = vec![0.0; (n + 1) * (n + 1) * labels.len()];
        SpanScoreGrid { n, labels, scores }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn offset(&self, start: usize, end: usize) -> usize {
        debug_assert!(start < end && end <= self.n);
        (start * (self.n + 1) + end) * self.labels.len()
    }

    pub fn get(&self, start: usize, end: usize, label: usize) -> f64 {
        self.scores[self.offset(start, end) + label]
    }

    pub fn set(&mut self, start: usize, end: usize, label: usize, score: f64) {
        assert!(score.is_finite(), "span scores must be finite");
        let o = self.offset(start, end);
        self.scores[o + label] = score;
    }

    pub fn span_scores(&self, start: usize, end: usize) -> &[f64] {
        let o = self.offset(start, end);
        &self.scores[o..o + self.labels.len()]
    }

    /// Score of a labeled tree: every span contributes, spans that are not
    /// brackets of the tree with their null-label score. `brackets` are
    /// `(start, end, label)` with distinct boundaries.
    pub fn labeling_score(&self, brackets: &[(usize, usize, usize)]) -> f64 {
        let chosen: HashMap<(usize, usize), usize> = brackets.iter().map(|&(s, e, l)| ((s, e), l)).collect();
        let mut total = 0.0;
        for start in 0..self.n {
            for end in start + 1..=self.n {
                let l = chosen.get(&(start, end)).copied().unwrap_or(NULL_LABEL);
                total += self.get(start, end, l);
            }
        }
        total
    }
}

/// A decoded tree with its model score.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartParse {
    pub tree: ParseTree,
    pub score: f64,
    /// Non-null brackets as `(start, end, label index)`, pre-order.
    pub brackets: Vec<(usize, usize, usize)>,
}

/// Best-scoring binary tree over the grid. Each span of the binary tree takes
/// its best label (possibly null, except the root span); spans outside the
/// tree take the null label. Ties go to the lower label index, then to the
/// leftmost split point. Null-labeled nodes are elided and collapsed unary
/// labels expanded in the returned tree.
pub fn cky_decode(grid: &SpanScoreGrid, words: &[Word]) -> Result<ChartParse, ParseError> {
    let n = grid.n;
    if n == 0 {
        return Err(ParseError::EmptySentence);
    }
    assert_eq!(words.len(), n, "grid and sentence lengths differ");
    assert!(grid.labels.len() > 1, "grid needs at least one non-null label");
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let mut best = vec![0.0f64; (n + 1) * (n + 1)];
    let mut label = vec![NULL_LABEL; (n + 1) * (n + 1)];
    let mut split = vec![0usize; (n + 1) * (n + 1)];
    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let scores = grid.span_scores(i, j);
            let null = scores[NULL_LABEL];
            let first = if len == n { 1 } else { 0 };
            let mut arg = first;
            let mut top = scores[first] - null;
            for (l, s) in scores.iter().enumerate().skip(first + 1) {
                let d = s - null;
                if d > top {
                    top = d;
                    arg = l;
                }
            }
            let mut inside = 0.0;
            if len > 1 {
                let mut arg_k = i + 1;
                let mut top_k = best[idx(i, i + 1)] + best[idx(i + 1, j)];
                for k in i + 2..j {
                    let s = best[idx(i, k)] + best[idx(k, j)];
                    if s > top_k {
                        top_k = s;
                        arg_k = k;
                    }
                }
                split[idx(i, j)] = arg_k;
                inside = top_k;
            }
            label[idx(i, j)] = arg;
            best[idx(i, j)] = top + inside;
        }
    }
    let mut null_total = 0.0;
    for i in 0..n {
        for j in i + 1..=n {
            null_total += grid.get(i, j, NULL_LABEL);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        i: usize,
        j: usize,
        n: usize,
        grid: &SpanScoreGrid,
        words: &[Word],
        label: &[usize],
        split: &[usize],
        brackets: &mut Vec<(usize, usize, usize)>,
    ) -> Result<Vec<ParseTree>, ParseError> {
        let at = i * (n + 1) + j;
        let l = label[at];
        if l != NULL_LABEL {
            brackets.push((i, j, l));
        }
        let children = if j - i == 1 {
            vec![ParseTree::leaf(words[i].clone())]
        } else {
            let k = split[at];
            let mut c = build(i, k, n, grid, words, label, split, brackets)?;
            c.extend(build(k, j, n, grid, words, label, split, brackets)?);
            c
        };
        if l == NULL_LABEL {
            Ok(children)
        } else {
            Ok(vec![ParseTree::node(grid.labels[l].clone(), children)?])
        }
    }

    let mut brackets = Vec::new();
    let mut top = build(0, n, n, grid, words, &label, &split, &mut brackets)?;
    debug_assert_eq!(top.len(), 1);
    let tree = top.pop().expect("root span is labeled").expand_unaries()?;
    Ok(ChartParse { tree, score: null_total + best[idx(0, n)], brackets })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartModel {
    /// Collapsed labels; index 0 is the null label (empty string).
    labels: Vec<String>,
    pub(crate) scorer: LinearModel,
    hasher: FeatureHasher,
    pub seed: u64,
    pub epochs: usize,
}

impl ChartModel {
    /// An all-zero model over `labels` (non-null, collapsed).
    pub fn untrained(labels: &[String], hash_bits: u32) -> Self {
        let mut all = vec![String::new()];
        all.extend(labels.iter().cloned());
        ChartModel {
            scorer: LinearModel::new(all.len()),
            labels: all,
            hasher: FeatureHasher::new(hash_bits),
            seed: 0,
            epochs: 0,
        }
    }

    pub(crate) fn from_parts(
        labels: Vec<String>,
        scorer: LinearModel,
        hash_bits: u32,
        seed: u64,
        epochs: usize,
    ) -> Self {
        ChartModel { labels, scorer, hasher: FeatureHasher::new(hash_bits), seed, epochs }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn hasher(&self) -> &FeatureHasher {
        &self.hasher
    }

    pub fn scorer(&self) -> &LinearModel {
        &self.scorer
    }

    pub fn uses_vectors(&self) -> bool {
        self.scorer.dense().is_some()
    }

    fn label_index(&self) -> HashMap<&str, usize> {
        self.labels.iter().enumerate().skip(1).map(|(i, l)| (l.as_str(), i)).collect()
    }

    fn projected(&self, words: &[Word], vectors: Option<&[&[f32]]>) -> Result<Vec<Vec<f32>>, ParseError> {
        match (self.uses_vectors(), vectors) {
            (false, _) => Ok(Vec::new()),
            (true, None) => Err(ParseError::MissingVectors),
            (true, Some(v)) if v.len() != words.len() => {
                Err(ParseError::VectorRows { expected: words.len(), found: v.len() })
            }
            (true, Some(v)) => {
                let dim_in = self.scorer.dense().expect("dense layer").projection().dim_in();
                if let Some(bad) = v.iter().find(|r| r.len() != dim_in) {
                    return Err(crate::repr::VectorError::Dimension { expected: dim_in, found: bad.len() }.into());
                }
                Ok(self.scorer.project_tokens(v))
            }
        }
    }

    fn span_logits(&self, words: &[Word], xs: &[Vec<f32>], start: usize, end: usize) -> Vec<f64> {
        let fv = featurize_span(words, start, end, &self.hasher);
        let slots = span_slots(xs, start, end);
        self.scorer.logits(&fv, &slots)
    }

    /// Log-probabilities of every label for every span.
    pub fn score_spans(&self, words: &[Word], vectors: Option<&[&[f32]]>) -> Result<SpanScoreGrid, ParseError> {
        let xs = self.projected(words, vectors)?;
        let n = words.len();
        let mut grid = SpanScoreGrid::zeros(n, self.labels.clone());
        for start in 0..n {
            for end in start + 1..=n {
                let lp = log_softmax(&self.span_logits(words, &xs, start, end), None);
                let o = grid.offset(start, end);
                grid.scores[o..o + lp.len()].copy_from_slice(&lp);
            }
        }
        Ok(grid)
    }

    pub fn parse(&self, words: &[Word], vectors: Option<&[&[f32]]>) -> Result<ChartParse, ParseError> {
        if words.is_empty() {
            return Err(ParseError::EmptySentence);
        }
        cky_decode(&self.score_spans(words, vectors)?, words)
    }

    pub fn parse_corpus(&self, corpus: &Corpus<'_>) -> Result<Vec<ParseTree>, ParseError> {
        let indices: Vec<usize> = (0..corpus.trees.len()).collect();
        par_map(&indices, |&i| {
            let words = corpus.trees[i].sentence();
            let v = corpus.sentence_vectors(i);
            self.parse(&words, v.as_deref()).map(|p| p.tree)
        })
        .into_iter()
        .collect()
    }
}

fn span_slots(xs: &[Vec<f32>], start: usize, end: usize) -> [Slot<'_>; 2] {
    if xs.is_empty() {
        [None, None]
    } else {
        [Some((start, xs[start].as_slice())), Some((end - 1, xs[end - 1].as_slice()))]
    }
}

pub fn score_spans(words: &[Word], model: &ChartModel) -> Result<SpanScoreGrid, ParseError> {
    model.score_spans(words, None)
}

/// Gold label index for every span of the collapsed tree; spans absent from
/// the map are null. Labels outside the vocabulary map to null.
fn gold_spans(collapsed: &ParseTree, index: &HashMap<&str, usize>) -> (HashMap<(usize, usize), usize>, usize) {
    let mut unknown = 0;
    let map = collapsed
        .spans()
        .into_iter()
        .filter_map(|s| match index.get(s.label.as_str()) {
            Some(&l) => Some(((s.start, s.end), l)),
            None => {
                unknown += 1;
                None
            }
        })
        .collect();
    (map, unknown)
}

pub(crate) fn dev_f1(gold: &[ParseTree], pred: &[ParseTree]) -> f64 {
    let cfg = EvalConfig::default();
    let g: Vec<_> = gold.iter().map(|t| eval_brackets(t, &cfg)).collect();
    let p: Vec<_> = pred.iter().map(|t| eval_brackets(t, &cfg)).collect();
    corpus_f1(&g, &p).map(|s| s.f1).unwrap_or(0.0)
}

/// Trains the span classifier with per-span cross-entropy. Returns the model
/// from the epoch with the best development F1.
pub fn train_chart(
    train: &Corpus<'_>,
    dev: &Corpus<'_>,
    config: &TrainConfig,
    seed: u64,
) -> Result<(ChartModel, TrainLog), ParseError> {
    config.validate()?;
    if train.trees.is_empty() {
        return Err(ParseError::EmptyTreebank);
    }
    if dev.trees.is_empty() {
        return Err(ParseError::EmptyDev);
    }
    let collapsed: Vec<ParseTree> = train.trees.iter().map(ParseTree::collapse_unaries).collect::<Result<_, _>>()?;
    let mut vocab: BTreeSet<String> = collapsed.iter().flat_map(|t| t.spans().into_iter().map(|s| s.label)).collect();
    if vocab.is_empty() {
        vocab.insert(DEFAULT_ROOT_LABEL.to_string());
    }
    let mut labels = vec![String::new()];
    labels.extend(vocab);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scorer = match train.vectors {
        Some(table) => {
            LinearModel::with_dense(labels.len(), Projection::random(table.dim(), config.projection_dim, &mut rng), 2)
        }
        None => LinearModel::new(labels.len()),
    };
    let mut model = ChartModel::from_parts(labels, scorer, config.hash_bits, seed, 0);
    let index = model.label_index();
    let gold: Vec<_> = collapsed.iter().map(|t| gold_spans(t, &index).0).collect();
    let unknown_dev: usize =
        dev.trees.iter().filter_map(|t| t.collapse_unaries().ok()).map(|t| gold_spans(&t, &index).1).sum();
    if unknown_dev > 0 {
        warn!("{unknown_dev} development brackets carry labels unseen in training; they can only be predicted as null");
    }

    let mut adam = Adam::new(&model.scorer, config.beta1, config.beta2, config.epsilon);
    let mut order: Vec<usize> = (0..collapsed.len()).collect();
    let mut history = Vec::new();
    let mut log = TrainLog { best_dev_f1: f64::NEG_INFINITY, ..Default::default() };
    let mut best_model = model.clone();
    let mut updates = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut mult = lr_schedule(updates + 1, &history, config);
        for batch in order.chunks(config.batch_size) {
            let mut grad = Gradient::new(&model.scorer);
            for &s in batch {
                let words = train.trees[s].sentence();
                let raw = train.sentence_vectors(s);
                let xs = model.projected(&words, raw.as_deref())?;
                grad.begin_sentence(&model.scorer, words.len());
                let n = words.len();
                for start in 0..n {
                    for end in start + 1..=n {
                        let fv = featurize_span(&words, start, end, &model.hasher);
                        let slots = span_slots(&xs, start, end);
                        let lp = log_softmax(&model.scorer.logits(&fv, &slots), None);
                        let target = gold[s].get(&(start, end)).copied().unwrap_or(NULL_LABEL);
                        loss -= lp[target];
                        let d: Vec<f64> =
                            lp.iter().enumerate().map(|(c, l)| l.exp() - if c == target { 1.0 } else { 0.0 }).collect();
                        grad.add(&model.scorer, &fv, &slots, &d);
                    }
                }
                if let Some(raw) = &raw {
                    grad.end_sentence(&model.scorer, raw);
                }
            }
            updates += 1;
            mult = lr_schedule(updates, &history, config);
            adam.step(
                &mut model.scorer,
                &grad,
                config.decoder_lr * mult.decoder,
                config.representation_lr * mult.representation,
            );
        }
        model.epochs = epoch;
        let pred = model.parse_corpus(dev)?;
        let f1 = dev_f1(dev.trees, &pred);
        history.push(f1);
        info!("chart epoch {epoch}: loss {loss:.3} dev F1 {f1:.2}");
        log.epochs.push(EpochLog {
            epoch,
            updates,
            loss,
            dev_f1: f1,
            decoder_multiplier: mult.decoder,
            representation_multiplier: mult.representation,
        });
        if f1 > log.best_dev_f1 {
            log.best_dev_f1 = f1;
            log.best_epoch = epoch;
            best_model = model.clone();
        }
    }
    Ok((best_model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize) -> Vec<Word> {
        (0..n).map(|i| Word::new(format!("w{i}"), "T").unwrap()).collect()
    }

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_word_example() {
        let mut g = SpanScoreGrid::zeros(2, labels(&["", "A", "B"]));
        g.set(0, 2, 1, 1.0);
        g.set(0, 2, 2, 2.0);
        g.set(0, 1, 1, 0.5);
        g.set(1, 2, 1, -0.3);
        let p = cky_decode(&g, &words(2)).unwrap();
        assert_eq!(p.tree.to_string(), "(B (A (T w0)) (T w1))");
        assert_eq!(p.score, 2.5);
        let mut b = p.brackets.clone();
        b.sort();
        assert_eq!(b, vec![(0, 1, 1), (0, 2, 2)]);
    }

    #[test]
    fn single_word_takes_best_non_null() {
        let mut g = SpanScoreGrid::zeros(1, labels(&["", "X", "Y+Z"]));
        g.set(0, 1, 0, 5.0);
        g.set(0, 1, 1, -1.0);
        g.set(0, 1, 2, -0.5);
        let p = cky_decode(&g, &words(1)).unwrap();
        assert_eq!(p.tree.to_string(), "(Y (Z (T w0)))");
        assert_eq!(p.score, -0.5);
    }

    #[test]
    fn empty_sentence_is_error() {
        let g = SpanScoreGrid::zeros(0, labels(&["", "X"]));
        assert!(matches!(cky_decode(&g, &[]), Err(ParseError::EmptySentence)));
    }

    #[test]
    fn ties_prefer_null_then_left_split() {
        // all-zero grid: every non-root span ties at null, root ties -> label 1
        let g = SpanScoreGrid::zeros(3, labels(&["", "A", "B"]));
        let p = cky_decode(&g, &words(3)).unwrap();
        assert_eq!(p.tree.to_string(), "(A (T w0) (T w1) (T w2))");
        assert_eq!(p.brackets, vec![(0, 3, 1)]);
        let mut g = SpanScoreGrid::zeros(3, labels(&["", "A"]));
        g.set(0, 1, 1, 1.0);
        g.set(1, 2, 1, 1.0);
        g.set(0, 2, 1, 0.0);
        g.set(1, 3, 1, 0.0);
        let p = cky_decode(&g, &words(3)).unwrap();
        // both splits score equally; leftmost split point (k=1) wins
        assert_eq!(p.tree.to_string(), "(A (A (T w0)) (A (T w1)) (T w2))");
    }

    #[test]
    fn untrained_model_is_uniform() {
        let m = ChartModel::untrained(&labels(&["NP", "S", "VP"]), 10);
        let g = m.score_spans(&words(3), None).unwrap();
        for i in 0..3 {
            for j in i + 1..=3 {
                for l in 0..4 {
                    assert!((g.get(i, j, l) - (0.25f64).ln()).abs() < 1e-12);
                }
            }
        }
        let one = m.score_spans(&words(1), None).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.span_scores(0, 1).len(), 4);
    }

    #[test]
    fn permuted_vocabulary_permutes_scores() {
        let hasher_bits = 8;
        let base = labels(&["A", "B", "C"]);
        let mut m = ChartModel::untrained(&base, hasher_bits);
        let rows: Vec<(u32, Vec<f32>)> =
            (0..256u32).map(|i| (i, (0..4).map(|c| ((i * 7 + c * 13) % 11) as f32 * 0.1).collect())).collect();
        m.scorer.rows = rows.iter().cloned().collect();
        // new order: [null, C, A, B]
        let perm = [0usize, 3, 1, 2];
        let mut p = ChartModel::untrained(&labels(&["C", "A", "B"]), hasher_bits);
        p.scorer.rows = rows.iter().map(|(i, r)| (*i, perm.iter().map(|&c| r[c]).collect())).collect();
        let s = words(4);
        let (ga, gb) = (m.score_spans(&s, None).unwrap(), p.score_spans(&s, None).unwrap());
        for i in 0..4 {
            for j in i + 1..=4 {
                for (new, &old) in perm.iter().enumerate() {
                    assert!((gb.get(i, j, new) - ga.get(i, j, old)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut m = ChartModel::untrained(&labels(&["A", "B"]), 6);
        m.scorer.rows = (0..64u32).map(|i| (i, vec![i as f32 * 0.01, -0.3, 0.7])).collect();
        let g = m.score_spans(&words(5), None).unwrap();
        for i in 0..5 {
            for j in i + 1..=5 {
                let total: f64 = g.span_scores(i, j).iter().map(|l| l.exp()).sum();
                assert!((total - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn null_dominant_model_still_yields_tree() {
        let mut m = ChartModel::untrained(&labels(&["S"]), 4);
        m.scorer.rows = (0..16u32).map(|i| (i, vec![10.0, -10.0])).collect();
        let s = words(4);
        let p = m.parse(&s, None).unwrap();
        assert_eq!(p.tree.label(), "S");
        assert_eq!(p.tree.sentence(), s);
    }

    #[test]
    fn missing_vectors_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scorer = LinearModel::with_dense(2, Projection::random(4, 3, &mut rng), 2);
        let m = ChartModel::from_parts(labels(&["", "S"]), scorer, 8, 1, 0);
        assert!(matches!(m.parse(&words(2), None), Err(ParseError::MissingVectors)));
        let rows = [[0.0f32; 4]; 1];
        let v: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        assert!(matches!(m.parse(&words(2), Some(&v)), Err(ParseError::VectorRows { .. })));
        let rows = [[0.5f32; 4]; 2];
        let v: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        assert!(m.parse(&words(2), Some(&v)).is_ok());
    }
}
