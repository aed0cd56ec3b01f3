//! In-order shift-reduce parsing: each nonterminal is projected right after
//! its first child is complete, then its remaining children are built and it
//! is reduced.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chart::dev_f1;
use crate::linear::{log_softmax, Adam, Gradient, LinearModel, Slot};
use crate::repr::{featurize_state, FeatureHasher, Projection};
use crate::train::{lr_schedule, Corpus, EpochLog, TrainConfig, TrainLog, UnaryLimit};
use crate::tree::{ParseTree, Word};
use crate::treebank::DEFAULT_ROOT_LABEL;
use crate::{par_map, ParseError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Shift,
    Project(String),
    Reduce,
    Finish,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Shift => f.write_str("SHIFT"),
            Action::Project(l) => write!(f, "PJ({l})"),
            Action::Reduce => f.write_str("REDUCE"),
            Action::Finish => f.write_str("FINISH"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown action {0:?}")]
pub struct ActionParseError(pub String);

impl FromStr for Action {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SHIFT" => Ok(Action::Shift),
            "REDUCE" => Ok(Action::Reduce),
            "FINISH" => Ok(Action::Finish),
            _ => match s.strip_prefix("PJ(").and_then(|r| r.strip_suffix(')')) {
                Some(l) if !l.is_empty() && !l.contains(char::is_whitespace) => Ok(Action::Project(l.to_string())),
                _ => Err(ActionParseError(s.to_string())),
            },
        }
    }
}

/// Formats a derivation as space-separated action names.
pub fn format_actions(actions: &[Action]) -> String {
    actions.iter().map(Action::to_string).collect::<Vec<_>>().join(" ")
}

pub fn parse_actions(line: &str) -> Result<Vec<Action>, ActionParseError> {
    line.split_whitespace().map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum StackItem {
    Done(ParseTree),
    /// A projected nonterminal that already owns its first child.
    Open {
        label: String,
        first: ParseTree,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal action {action} at step {step}: {reason}")]
pub struct TransitionError {
    pub step: usize,
    pub action: String,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParserState<'a> {
    sentence: &'a [Word],
    stack: Vec<StackItem>,
    buffer_front: usize,
    open_count: usize,
    last_action: Option<Action>,
}

impl<'a> ParserState<'a> {
    pub fn initial(sentence: &'a [Word]) -> Self {
        ParserState { sentence, stack: Vec::new(), buffer_front: 0, open_count: 0, last_action: None }
    }

    pub fn sentence(&self) -> &'a [Word] {
        self.sentence
    }

    pub fn stack(&self) -> &[StackItem] {
        &self.stack
    }

    pub fn buffer_front(&self) -> usize {
        self.buffer_front
    }

    pub fn buffer_front_word(&self) -> Option<&'a Word> {
        self.sentence.get(self.buffer_front)
    }

    pub fn open_count(&self) -> usize {
        self.open_count
    }

    pub fn last_action(&self) -> Option<&Action> {
        self.last_action.as_ref()
    }

    pub fn is_terminal(&self) -> bool {
        self.last_action == Some(Action::Finish)
    }

    /// Label and current child count of the innermost open nonterminal.
    pub fn innermost_open(&self) -> Option<(&str, usize)> {
        self.stack.iter().enumerate().rev().find_map(|(i, item)| match item {
            StackItem::Open { label, .. } => Some((label.as_str(), self.stack.len() - i)),
            StackItem::Done(_) => None,
        })
    }

    /// The finished tree, once FINISH has been applied.
    pub fn tree(&self) -> Option<&ParseTree> {
        match (self.is_terminal(), self.stack.as_slice()) {
            (true, [StackItem::Done(t)]) => Some(t),
            _ => None,
        }
    }

    /// `Ok` when `action` may be applied; otherwise the violated condition.
    /// A unary chain may be built up to `unary_limit` nodes deep.
    pub fn check(&self, action: &Action, unary_limit: usize) -> Result<(), &'static str> {
        if self.is_terminal() {
            return Err("derivation already finished");
        }
        let buffer_empty = self.buffer_front >= self.sentence.len();
        match action {
            Action::Shift => {
                if buffer_empty {
                    Err("buffer is empty")
                } else if self.open_count == 0 && !self.stack.is_empty() {
                    Err("a completed constituent must be projected before shifting")
                } else {
                    Ok(())
                }
            }
            Action::Project(_) => match self.stack.last() {
                Some(StackItem::Done(t)) => {
                    if buffer_empty && t.unary_depth() >= unary_limit {
                        Err("projection would exceed the unary limit")
                    } else {
                        Ok(())
                    }
                }
                _ => Err("stack top is not a completed constituent"),
            },
            Action::Reduce => {
                if self.open_count == 0 {
                    return Err("no open nonterminal");
                }
                match self.stack.last() {
                    Some(StackItem::Open { first, .. }) if first.unary_depth() + 1 > unary_limit => {
                        Err("reduction would exceed the unary limit")
                    }
                    _ => Ok(()),
                }
            }
            Action::Finish => {
                if !buffer_empty {
                    Err("buffer is not empty")
                } else if self.open_count > 0 {
                    Err("open nonterminals remain")
                } else {
                    match self.stack.as_slice() {
                        [StackItem::Done(ParseTree::Node(_))] => Ok(()),
                        [StackItem::Done(ParseTree::Leaf(_))] => Err("a bare word is not a constituent"),
                        _ => Err("stack does not hold a single completed tree"),
                    }
                }
            }
        }
    }

    /// Applies a legal action. Legality is not re-checked.
    fn apply_unchecked(&mut self, action: &Action) {
        match action {
            Action::Shift => {
                self.stack.push(StackItem::Done(ParseTree::leaf(self.sentence[self.buffer_front].clone())));
                self.buffer_front += 1;
            }
            Action::Project(label) => {
                let Some(StackItem::Done(first)) = self.stack.pop() else { unreachable!("checked") };
                self.stack.push(StackItem::Open { label: label.clone(), first });
                self.open_count += 1;
            }
            Action::Reduce => {
                let at = self
                    .stack
                    .iter()
                    .rposition(|i| matches!(i, StackItem::Open { .. }))
                    .expect("checked: an open nonterminal exists");
                let rest = self.stack.split_off(at + 1);
                let Some(StackItem::Open { label, first }) = self.stack.pop() else { unreachable!() };
                let mut children = vec![first];
                children.extend(rest.into_iter().map(|i| match i {
                    StackItem::Done(t) => t,
                    StackItem::Open { .. } => unreachable!("innermost open marker"),
                }));
                let node = ParseTree::node(label, children).expect("labels validated on entry");
                self.stack.push(StackItem::Done(node));
                self.open_count -= 1;
            }
            Action::Finish => {}
        }
        self.last_action = Some(action.clone());
    }

    pub fn apply(&mut self, action: &Action, unary_limit: usize) -> Result<(), &'static str> {
        self.check(action, unary_limit)?;
        if let Action::Project(l) = action {
            if l.is_empty() || l.contains(char::is_whitespace) {
                return Err("invalid nonterminal label");
            }
        }
        self.apply_unchecked(action);
        Ok(())
    }

    /// Closes every open nonterminal, attaches the unread words, and wraps
    /// everything under `root_label`.
    fn force_complete(&self, root_label: &str) -> ParseTree {
        let mut s = self.clone();
        while s.open_count > 0 {
            s.apply_unchecked(&Action::Reduce);
        }
        let mut children: Vec<ParseTree> = s
            .stack
            .into_iter()
            .map(|i| match i {
                StackItem::Done(t) => t,
                StackItem::Open { .. } => unreachable!("all reduced"),
            })
            .collect();
        children.extend(self.sentence[self.buffer_front..].iter().cloned().map(ParseTree::leaf));
        ParseTree::node(root_label, children).expect("sentence is non-empty")
    }
}

/// The static oracle: the unique in-order derivation of `tree`.
pub fn oracle_actions(tree: &ParseTree) -> Vec<Action> {
    fn walk(t: &ParseTree, out: &mut Vec<Action>) {
        match t {
            ParseTree::Leaf(_) => out.push(Action::Shift),
            ParseTree::Node(n) => {
                let (first, rest) = n.children().split_first().expect("nodes have children");
                walk(first, out);
                out.push(Action::Project(n.label().to_string()));
                rest.iter().for_each(|c| walk(c, out));
                out.push(Action::Reduce);
            }
        }
    }
    let mut out = Vec::with_capacity(tree.num_leaves() + 2 * tree.num_nodes() + 1);
    walk(tree, &mut out);
    out.push(Action::Finish);
    out
}

/// Runs `actions` from the initial state with no unary limit and returns the
/// finished tree.
pub fn execute(actions: &[Action], sentence: &[Word]) -> Result<ParseTree, TransitionError> {
    execute_with_limit(actions, sentence, usize::MAX)
}

pub fn execute_with_limit(
    actions: &[Action],
    sentence: &[Word],
    unary_limit: usize,
) -> Result<ParseTree, TransitionError> {
    let mut state = ParserState::initial(sentence);
    for (step, a) in actions.iter().enumerate() {
        state.apply(a, unary_limit).map_err(|reason| TransitionError { step, action: a.to_string(), reason })?;
    }
    state.tree().cloned().ok_or(TransitionError {
        step: actions.len(),
        action: "<end>".to_string(),
        reason: "derivation did not finish",
    })
}

/// Legal actions in vocabulary order: SHIFT, REDUCE, FINISH, then one PJ per label.
pub fn legal_actions(state: &ParserState<'_>, labels: &[String], unary_limit: usize) -> Vec<Action> {
    action_vocabulary(labels).into_iter().filter(|a| state.check(a, unary_limit).is_ok()).collect()
}

fn action_vocabulary(labels: &[String]) -> Vec<Action> {
    let mut v = vec![Action::Shift, Action::Reduce, Action::Finish];
    v.extend(labels.iter().cloned().map(Action::Project));
    v
}

/// Upper bound on derivation length during decoding.
pub fn action_cap(words: usize) -> usize {
    12 * words + 24
}

#[derive(Debug, Clone, PartialEq)]
pub struct InOrderModel {
    actions: Vec<Action>,
    pub(crate) scorer: LinearModel,
    hasher: FeatureHasher,
    pub unary_limit: usize,
    pub beam_size: usize,
    pub root_label: String,
    pub seed: u64,
    pub epochs: usize,
}

/// Result of decoding one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamParse {
    pub tree: ParseTree,
    /// Total log-probability of the derivation.
    pub score: f64,
    pub actions: Vec<Action>,
    /// No derivation finished within the action cap; the tree was completed
    /// by closing all open nonterminals under the root label.
    pub forced: bool,
}

#[derive(Clone)]
struct Hypothesis<'a> {
    state: ParserState<'a>,
    score: f64,
    actions: Vec<Action>,
}

impl InOrderModel {
    /// An all-zero model over the given nonterminals.
    pub fn untrained(labels: &[String], hash_bits: u32, unary_limit: usize, beam_size: usize) -> Self {
        let actions = action_vocabulary(labels);
        InOrderModel {
            scorer: LinearModel::new(actions.len()),
            actions,
            hasher: FeatureHasher::new(hash_bits),
            unary_limit,
            beam_size,
            root_label: DEFAULT_ROOT_LABEL.to_string(),
            seed: 0,
            epochs: 0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        labels: &[String],
        scorer: LinearModel,
        hash_bits: u32,
        unary_limit: usize,
        beam_size: usize,
        root_label: String,
        seed: u64,
        epochs: usize,
    ) -> Self {
        InOrderModel {
            actions: action_vocabulary(labels),
            scorer,
            hasher: FeatureHasher::new(hash_bits),
            unary_limit,
            beam_size,
            root_label,
            seed,
            epochs,
        }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Nonterminals the model can project.
    pub fn labels(&self) -> Vec<String> {
        self.actions
            .iter()
            .filter_map(|a| match a {
                Action::Project(l) => Some(l.clone()),
                _ => None,
            })
            .collect()
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

    fn legal_mask(&self, state: &ParserState<'_>) -> Vec<bool> {
        self.actions.iter().map(|a| state.check(a, self.unary_limit).is_ok()).collect()
    }

    /// Log-probabilities over the action vocabulary, `-inf` for illegal actions.
    pub fn action_log_probs(&self, state: &ParserState<'_>, xs: &[Vec<f32>]) -> Vec<f64> {
        let fv = featurize_state(state, &self.hasher);
        let slots = state_slots(state, xs);
        log_softmax(&self.scorer.logits(&fv, &slots), Some(&self.legal_mask(state)))
    }

    /// Beam search with the model's default beam size.
    pub fn parse(&self, words: &[Word], vectors: Option<&[&[f32]]>) -> Result<BeamParse, ParseError> {
        self.beam_decode(words, vectors, self.beam_size)
    }

    /// Keeps the `beam_size` best partial derivations per step. Finished
    /// derivations leave the beam; once `beam_size` have finished, search
    /// continues only while a live derivation still outscores the best one.
    pub fn beam_decode(
        &self,
        words: &[Word],
        vectors: Option<&[&[f32]]>,
        beam_size: usize,
    ) -> Result<BeamParse, ParseError> {
        if words.is_empty() {
            return Err(ParseError::EmptySentence);
        }
        let beam_size = beam_size.max(1);
        let xs = self.projected(words, vectors)?;
        let mut beam = vec![Hypothesis { state: ParserState::initial(words), score: 0.0, actions: Vec::new() }];
        let mut done: Vec<Hypothesis<'_>> = Vec::new();
        let cap = action_cap(words.len());
        let mut steps = 0;
        let mut best_done = f64::NEG_INFINITY;
        while !beam.is_empty() && steps < cap && !(done.len() >= beam_size && best_done >= beam[0].score) {
            steps += 1;
            let mut cand: Vec<(f64, usize, usize)> = Vec::new();
            for (h, hyp) in beam.iter().enumerate() {
                let lp = self.action_log_probs(&hyp.state, &xs);
                for (a, l) in lp.iter().enumerate() {
                    if l.is_finite() {
                        cand.push((hyp.score + l, h, a));
                    }
                }
            }
            cand.sort_by(|x, y| y.0.total_cmp(&x.0));
            let mut next = Vec::with_capacity(beam_size);
            for &(score, h, a) in cand.iter().take(beam_size) {
                let mut hyp = beam[h].clone();
                let action = &self.actions[a];
                hyp.state.apply_unchecked(action);
                hyp.score = score;
                hyp.actions.push(action.clone());
                if *action == Action::Finish {
                    best_done = best_done.max(score);
                    done.push(hyp);
                } else {
                    next.push(hyp);
                }
            }
            beam = next;
        }
        let best = done.into_iter().reduce(|a, b| if b.score > a.score { b } else { a });
        match best {
            Some(h) => Ok(BeamParse {
                tree: h.state.tree().expect("finished hypothesis").clone(),
                score: h.score,
                actions: h.actions,
                forced: false,
            }),
            None => {
                let h = beam.into_iter().next().expect("beam never empties without a finished hypothesis");
                warn!("no derivation finished within {cap} actions; forcing a tree");
                Ok(BeamParse {
                    tree: h.state.force_complete(&self.root_label),
                    score: h.score,
                    actions: h.actions,
                    forced: true,
                })
            }
        }
    }

    /// Repeatedly takes the most probable legal action (lowest vocabulary
    /// index on ties).
    pub fn greedy_decode(&self, words: &[Word], vectors: Option<&[&[f32]]>) -> Result<BeamParse, ParseError> {
        if words.is_empty() {
            return Err(ParseError::EmptySentence);
        }
        let xs = self.projected(words, vectors)?;
        let mut state = ParserState::initial(words);
        let mut score = 0.0;
        let mut actions = Vec::new();
        let cap = action_cap(words.len());
        while !state.is_terminal() && actions.len() < cap {
            let lp = self.action_log_probs(&state, &xs);
            let mut best = 0;
            for (a, l) in lp.iter().enumerate() {
                if *l > lp[best] {
                    best = a;
                }
            }
            score += lp[best];
            state.apply_unchecked(&self.actions[best]);
            actions.push(self.actions[best].clone());
        }
        match state.tree() {
            Some(t) => Ok(BeamParse { tree: t.clone(), score, actions, forced: false }),
            None => Ok(BeamParse { tree: state.force_complete(&self.root_label), score, actions, forced: true }),
        }
    }

    pub fn parse_corpus(&self, corpus: &Corpus<'_>, beam_size: usize) -> Result<Vec<ParseTree>, ParseError> {
        let indices: Vec<usize> = (0..corpus.trees.len()).collect();
        par_map(&indices, |&i| {
            let words = corpus.trees[i].sentence();
            let v = corpus.sentence_vectors(i);
            self.beam_decode(&words, v.as_deref(), beam_size).map(|p| p.tree)
        })
        .into_iter()
        .collect()
    }
}

fn state_slots<'x>(state: &ParserState<'_>, xs: &'x [Vec<f32>]) -> [Slot<'x>; 1] {
    match xs.get(state.buffer_front) {
        Some(x) => [Some((state.buffer_front, x.as_slice()))],
        None => [None],
    }
}

pub fn beam_decode(words: &[Word], model: &InOrderModel, beam_size: usize) -> Result<BeamParse, ParseError> {
    model.beam_decode(words, None, beam_size)
}

/// Trains with cross-entropy over gold derivations (teacher forcing). Trees
/// whose unary chains exceed the limit are skipped with a warning.
pub fn train_inorder(
    train: &Corpus<'_>,
    dev: &Corpus<'_>,
    config: &TrainConfig,
    seed: u64,
) -> Result<(InOrderModel, TrainLog), ParseError> {
    config.validate()?;
    if train.trees.is_empty() {
        return Err(ParseError::EmptyTreebank);
    }
    if dev.trees.is_empty() {
        return Err(ParseError::EmptyDev);
    }
    let unary_limit = match config.unary_limit {
        UnaryLimit::Fixed(n) => n,
        UnaryLimit::Auto => train.trees.iter().map(ParseTree::max_unary_depth).max().unwrap_or(1).max(1),
    };
    let labels: Vec<String> = train
        .trees
        .iter()
        .flat_map(|t| t.spans().into_iter().map(|s| s.label))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let usable: Vec<usize> = (0..train.trees.len())
        .filter(|&i| {
            let ok = train.trees[i].max_unary_depth() <= unary_limit && !train.trees[i].is_leaf();
            if !ok {
                warn!("skipping training tree {i}: unary chain longer than {unary_limit} or no constituent");
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Err(ParseError::EmptyTreebank);
    }
    let root_label = train.trees[usable[0]].label().to_string();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels.len() + 3;
    let scorer = match train.vectors {
        Some(table) => {
            LinearModel::with_dense(classes, Projection::random(table.dim(), config.projection_dim, &mut rng), 1)
        }
        None => LinearModel::new(classes),
    };
    let mut model =
        InOrderModel::from_parts(&labels, scorer, config.hash_bits, unary_limit, config.beam_size, root_label, seed, 0);
    let index: std::collections::HashMap<&Action, usize> =
        model.actions.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let gold: Vec<Vec<usize>> =
        train.trees.iter().map(|t| oracle_actions(t).iter().map(|a| index[a]).collect()).collect();
    drop(index);

    let mut adam = Adam::new(&model.scorer, config.beta1, config.beta2, config.epsilon);
    let mut order = usable;
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
                let mut state = ParserState::initial(&words);
                for &target in &gold[s] {
                    let fv = featurize_state(&state, &model.hasher);
                    let slots = state_slots(&state, &xs);
                    let lp = log_softmax(&model.scorer.logits(&fv, &slots), Some(&model.legal_mask(&state)));
                    loss -= lp[target];
                    let d: Vec<f64> = lp
                        .iter()
                        .enumerate()
                        .map(|(c, l)| if l.is_finite() { l.exp() } else { 0.0 } - if c == target { 1.0 } else { 0.0 })
                        .collect();
                    grad.add(&model.scorer, &fv, &slots, &d);
                    state.apply_unchecked(&model.actions[target]);
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
        let pred = model.parse_corpus(dev, model.beam_size)?;
        let f1 = dev_f1(dev.trees, &pred);
        history.push(f1);
        info!("in-order epoch {epoch}: loss {loss:.3} dev F1 {f1:.2}");
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
    use crate::treebank::read_bracketed;

    fn tree(s: &str) -> ParseTree {
        read_bracketed(s, "t", "TOP").unwrap().trees.remove(0)
    }

    fn acts(s: &str) -> Vec<Action> {
        parse_actions(s).unwrap()
    }

    #[test]
    fn oracle_example() {
        let t = tree("(S (NP (DT the) (NN dog)) (VP (VBZ barks)))");
        assert_eq!(
            format_actions(&oracle_actions(&t)),
            "SHIFT PJ(NP) SHIFT REDUCE PJ(S) SHIFT PJ(VP) REDUCE REDUCE FINISH"
        );
        assert_eq!(format_actions(&oracle_actions(&tree("(X (A a))"))), "SHIFT PJ(X) REDUCE FINISH");
    }

    #[test]
    fn round_trip() {
        let t = tree("(TOP (S (NP (NNP Kim)) (VP (VBD left) (ADVP (RB early))) (. .)))");
        assert_eq!(execute(&oracle_actions(&t), &t.sentence()).unwrap(), t);
    }

    #[test]
    fn illegal_sequences() {
        let s = vec![Word::new("a", "A").unwrap()];
        let e = execute(&acts("SHIFT FINISH"), &s).unwrap_err();
        assert_eq!(e.step, 1);
        assert_eq!(e.reason, "a bare word is not a constituent");
        assert_eq!(execute(&acts("REDUCE"), &s).unwrap_err().step, 0);
        assert!(execute(&acts("SHIFT PJ(X)"), &s).is_err());
    }

    #[test]
    fn legality_examples() {
        let labels = vec!["NP".to_string(), "S".to_string()];
        let one = vec![Word::new("a", "A").unwrap()];
        let mut st = ParserState::initial(&one);
        assert_eq!(legal_actions(&st, &labels, 4), vec![Action::Shift]);
        st.apply(&Action::Shift, 4).unwrap();
        assert_eq!(legal_actions(&st, &labels, 4), acts("PJ(NP) PJ(S)"));
        let two = vec![Word::new("a", "A").unwrap(), Word::new("b", "B").unwrap()];
        let mut st = ParserState::initial(&two);
        for a in acts("SHIFT PJ(S) SHIFT") {
            st.apply(&a, 4).unwrap();
        }
        assert_eq!(legal_actions(&st, &labels, 4), acts("REDUCE PJ(NP) PJ(S)"));
    }

    #[test]
    fn unary_limit_blocks_long_chains() {
        let s = vec![Word::new("a", "A").unwrap()];
        let chain = acts("SHIFT PJ(X) REDUCE PJ(Y) REDUCE FINISH");
        assert!(execute_with_limit(&chain, &s, 2).is_ok());
        let e = execute_with_limit(&chain, &s, 1).unwrap_err();
        assert_eq!(e.step, 3);
    }

    #[test]
    fn action_text_round_trip() {
        for a in ["SHIFT", "PJ(NP-SBJ)", "REDUCE", "FINISH"] {
            assert_eq!(a.parse::<Action>().unwrap().to_string(), a);
        }
        assert!("PJ()".parse::<Action>().is_err());
        assert!("shift".parse::<Action>().is_err());
    }

    #[test]
    fn untrained_decode_is_well_formed() {
        let labels = vec!["NP".to_string(), "S".to_string(), "VP".to_string()];
        let m = InOrderModel::untrained(&labels, 10, 4, 10);
        let s: Vec<Word> = ["the", "dog", "barks"].iter().map(|w| Word::new(*w, "X").unwrap()).collect();
        let p = m.parse(&s, None).unwrap();
        assert_eq!(p.tree.sentence(), s);
        assert!(!p.tree.is_leaf());
        assert_eq!(execute(&p.actions, &s).unwrap(), p.tree);
        let g = m.greedy_decode(&s, None).unwrap();
        assert_eq!(m.beam_decode(&s, None, 1).unwrap(), g);
    }

    #[test]
    fn forced_completion_keeps_all_words() {
        let s: Vec<Word> = ["a", "b", "c"].iter().map(|w| Word::new(*w, "X").unwrap()).collect();
        let mut st = ParserState::initial(&s);
        for a in acts("SHIFT PJ(NP) SHIFT") {
            st.apply(&a, 4).unwrap();
        }
        let t = st.force_complete("TOP");
        assert_eq!(t.to_string(), "(TOP (NP (X a) (X b)) (X c))");
    }
}
