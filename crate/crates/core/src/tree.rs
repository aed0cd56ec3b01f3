//! Labeled constituency trees, spans and unary-chain transforms.

use std::fmt;

use thiserror::Error;

/// Joins the members of a collapsed unary chain, e.g. `S+VP`.
pub const UNARY_SEPARATOR: char = '+';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("word form is empty")]
    EmptyForm,
    #[error("word {0:?} has an empty tag")]
    EmptyTag(String),
    #[error("token {0:?} contains whitespace")]
    Whitespace(String),
    #[error("nonterminal label is empty")]
    EmptyLabel,
    #[error("node {0:?} has no children")]
    NoChildren(String),
    #[error("label {0:?} starts or ends with the unary separator '+'")]
    ReservedSeparator(String),
}

/// A token together with its part-of-speech tag. Tags are input data.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    form: String,
    tag: String,
}

impl Word {
    pub fn new(form: impl Into<String>, tag: impl Into<String>) -> Result<Self, TreeError> {
        let form = form.into();
        let tag = tag.into();
        if form.is_empty() {
            return Err(TreeError::EmptyForm);
        }
        if tag.is_empty() {
            return Err(TreeError::EmptyTag(form));
        }
        if form.chars().any(char::is_whitespace) {
            return Err(TreeError::Whitespace(form));
        }
        if tag.chars().any(char::is_whitespace) {
            return Err(TreeError::Whitespace(tag));
        }
        Ok(Word { form, tag })
    }

    pub fn form(&self) -> &str {
        &self.form
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.form, self.tag)
    }
}

/// An internal (phrasal) node. Fields are private so that every node is
/// guaranteed a non-empty label and at least one child.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    label: String,
    children: Vec<ParseTree>,
}

impl Node {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[ParseTree] {
        &self.children
    }
}

/// An n-ary constituency tree. A `Leaf` is a preterminal: a word with its tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParseTree {
    Leaf(Word),
    Node(Node),
}

/// A labeled bracket over words `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Span {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        Span { start, end, label: label.into() }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{}]", self.label, self.start, self.end)
    }
}

impl ParseTree {
    pub fn leaf(word: Word) -> Self {
        ParseTree::Leaf(word)
    }

    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Result<Self, TreeError> {
        let label = label.into();
        if label.is_empty() {
            return Err(TreeError::EmptyLabel);
        }
        if label.chars().any(char::is_whitespace) {
            return Err(TreeError::Whitespace(label));
        }
        if children.is_empty() {
            return Err(TreeError::NoChildren(label));
        }
        Ok(ParseTree::Node(Node { label, children }))
    }

    /// The node label, or the tag for a leaf.
    pub fn label(&self) -> &str {
        match self {
            ParseTree::Leaf(w) => w.tag(),
            ParseTree::Node(n) => &n.label,
        }
    }

    pub fn children(&self) -> &[ParseTree] {
        match self {
            ParseTree::Leaf(_) => &[],
            ParseTree::Node(n) => &n.children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ParseTree::Leaf(_))
    }

    /// Leaf words in left-to-right order.
    pub fn leaves(&self) -> Vec<&Word> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    /// Owned copy of the leaf words.
    pub fn sentence(&self) -> Vec<Word> {
        self.leaves().into_iter().cloned().collect()
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Word>) {
        match self {
            ParseTree::Leaf(w) => out.push(w),
            ParseTree::Node(n) => n.children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 1,
            ParseTree::Node(n) => n.children.iter().map(ParseTree::num_leaves).sum(),
        }
    }

    /// Number of phrasal (non-preterminal) nodes.
    pub fn num_nodes(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 0,
            ParseTree::Node(n) => 1 + n.children.iter().map(ParseTree::num_nodes).sum::<usize>(),
        }
    }

    /// One span per phrasal node, in pre-order. Unary chains produce one span
    /// per chain member with identical boundaries.
    pub fn spans(&self) -> Vec<Span> {
        let mut out = Vec::new();
        self.collect_spans(0, &mut out);
        out
    }

    fn collect_spans(&self, start: usize, out: &mut Vec<Span>) -> usize {
        match self {
            ParseTree::Leaf(_) => start + 1,
            ParseTree::Node(n) => {
                let slot = out.len();
                out.push(Span { start, end: start, label: n.label.clone() });
                let mut end = start;
                for child in &n.children {
                    end = child.collect_spans(end, out);
                }
                out[slot].end = end;
                end
            }
        }
    }

    /// Merges maximal chains of single-child phrasal nodes into one node whose
    /// label is the encoded [`CollapsedLabel`]. Every label is encoded, so
    /// literal separators survive the round trip through [`expand_unaries`].
    ///
    /// [`expand_unaries`]: ParseTree::expand_unaries
    pub fn collapse_unaries(&self) -> Result<ParseTree, TreeError> {
        match self {
            ParseTree::Leaf(w) => Ok(ParseTree::Leaf(w.clone())),
            ParseTree::Node(n) => {
                let mut parts = vec![n.label.clone()];
                let mut cur = n;
                while let [ParseTree::Node(only)] = cur.children.as_slice() {
                    parts.push(only.label.clone());
                    cur = only;
                }
                let label = CollapsedLabel::new(parts)?.encode();
                let children = cur.children.iter().map(ParseTree::collapse_unaries).collect::<Result<Vec<_>, _>>()?;
                Ok(ParseTree::Node(Node { label, children }))
            }
        }
    }

    /// Inverse of [`collapse_unaries`](ParseTree::collapse_unaries).
    pub fn expand_unaries(&self) -> Result<ParseTree, TreeError> {
        match self {
            ParseTree::Leaf(w) => Ok(ParseTree::Leaf(w.clone())),
            ParseTree::Node(n) => {
                let parts = CollapsedLabel::decode(&n.label)?.parts;
                let children = n.children.iter().map(ParseTree::expand_unaries).collect::<Result<Vec<_>, _>>()?;
                let mut labels = parts.into_iter().rev();
                let innermost = labels.next().expect("collapsed label has at least one part");
                let mut tree = ParseTree::Node(Node { label: innermost, children });
                for label in labels {
                    tree = ParseTree::Node(Node { label, children: vec![tree] });
                }
                Ok(tree)
            }
        }
    }

    /// Depth of the unary chain at the top of this subtree: 0 for a leaf,
    /// otherwise 1 + the child's depth when the node has exactly one phrasal child.
    pub fn unary_depth(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 0,
            ParseTree::Node(n) => match n.children.as_slice() {
                [only @ ParseTree::Node(_)] => 1 + only.unary_depth(),
                _ => 1,
            },
        }
    }

    /// Longest unary chain anywhere in the tree.
    pub fn max_unary_depth(&self) -> usize {
        let below = self.children().iter().map(ParseTree::max_unary_depth).max().unwrap_or(0);
        below.max(self.unary_depth())
    }
}

/// Writes `(LABEL children...)`, with preterminals as `(TAG form)`. Literal
/// parentheses in tokens are written as `-LRB-` / `-RRB-`.
impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseTree::Leaf(w) => write!(f, "({} {})", escape_parens(&w.tag), escape_parens(&w.form)),
            ParseTree::Node(n) => {
                write!(f, "({}", escape_parens(&n.label))?;
                for child in &n.children {
                    write!(f, " {child}")?;
                }
                f.write_str(")")
            }
        }
    }
}

pub(crate) fn escape_parens(token: &str) -> std::borrow::Cow<'_, str> {
    if token.contains(['(', ')']) {
        token.replace('(', "-LRB-").replace(')', "-RRB-").into()
    } else {
        token.into()
    }
}

/// A unary chain of nonterminals, outermost first, encoded as a single label.
///
/// Encoding joins the parts with `+`; a literal `+` inside a part is doubled.
/// Parts may not begin or end with `+`, which keeps decoding unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CollapsedLabel {
    parts: Vec<String>,
}

impl CollapsedLabel {
    pub fn new(parts: Vec<String>) -> Result<Self, TreeError> {
        if parts.is_empty() {
            return Err(TreeError::EmptyLabel);
        }
        for p in &parts {
            if p.is_empty() {
                return Err(TreeError::EmptyLabel);
            }
            if p.starts_with(UNARY_SEPARATOR) || p.ends_with(UNARY_SEPARATOR) {
                return Err(TreeError::ReservedSeparator(p.clone()));
            }
        }
        Ok(CollapsedLabel { parts })
    }

    pub fn parts(&self) -> &[String] {
        &self.parts
    }

    pub fn encode(&self) -> String {
        let doubled = format!("{UNARY_SEPARATOR}{UNARY_SEPARATOR}");
        self.parts
            .iter()
            .map(|p| p.replace(UNARY_SEPARATOR, &doubled))
            .collect::<Vec<_>>()
            .join(&UNARY_SEPARATOR.to_string())
    }

    pub fn decode(encoded: &str) -> Result<Self, TreeError> {
        let mut parts = Vec::new();
        let mut cur = String::new();
        let mut chars = encoded.chars().peekable();
        while let Some(c) = chars.next() {
            if c == UNARY_SEPARATOR {
                if chars.peek() == Some(&UNARY_SEPARATOR) {
                    chars.next();
                    cur.push(UNARY_SEPARATOR);
                } else {
                    parts.push(std::mem::take(&mut cur));
                }
            } else {
                cur.push(c);
            }
        }
        parts.push(cur);
        CollapsedLabel::new(parts)
    }
}

impl fmt::Display for CollapsedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// True when every pair of spans is nested or disjoint.
pub fn is_well_nested(spans: &[Span]) -> bool {
    spans.iter().enumerate().all(|(i, a)| {
        spans[i + 1..].iter().all(|b| {
            let disjoint = a.end <= b.start || b.end <= a.start;
            let nested = (a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end);
            disjoint || nested
        })
    })
}
