//! Bracketed treebank reading/writing and PTB-style normalization.

use std::fmt::Write as _;

use log::warn;
use thiserror::Error;

use crate::tree::{ParseTree, TreeError, Word};

pub const DEFAULT_ROOT_LABEL: &str = "TOP";

/// Tags and labels left untouched by function-tag stripping.
const PUNCT_EXCEPTIONS: [&str; 3] = ["-NONE-", "-LRB-", "-RRB-"];

const EMPTY_ELEMENT_TAG: &str = "-NONE-";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreebankError {
    #[error("{line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{line}:{column}: {source}")]
    Tree { line: usize, column: usize, source: TreeError },
    #[error("line {line}: malformed token {token:?} (expected word_tag)")]
    Token { line: usize, token: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawTreebank {
    pub source: String,
    pub trees: Vec<ParseTree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

#[derive(Debug, Clone, Copy)]
struct Located<'a> {
    tok: Tok<'a>,
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Vec<Located<'_>> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let mut chars = line.char_indices().peekable();
        while let Some(&(i, c)) = chars.peek() {
            let column = line[..i].chars().count() + 1;
            let at = |tok| Located { tok, line: li + 1, column };
            match c {
                '(' => {
                    out.push(at(Tok::Open));
                    chars.next();
                }
                ')' => {
                    out.push(at(Tok::Close));
                    chars.next();
                }
                c if c.is_whitespace() => {
                    chars.next();
                }
                _ => {
                    let mut end = line.len();
                    while let Some(&(j, d)) = chars.peek() {
                        if d == '(' || d == ')' || d.is_whitespace() {
                            end = j;
                            break;
                        }
                        chars.next();
                    }
                    out.push(at(Tok::Atom(&line[i..end])));
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    toks: Vec<Located<'a>>,
    pos: usize,
    root_label: &'a str,
}

enum Item {
    Atom(String, usize, usize),
    Tree(ParseTree),
}

impl<'a> Reader<'a> {
    fn err<T>(&self, at: Located<'_>, message: impl Into<String>) -> Result<T, TreebankError> {
        Err(TreebankError::Parse { line: at.line, column: at.column, message: message.into() })
    }

    fn eof_err<T>(&self) -> Result<T, TreebankError> {
        let (line, column) = self.toks.last().map_or((1, 1), |t| (t.line, t.column + 1));
        Err(TreebankError::Parse { line, column, message: "unexpected end of input (unbalanced parentheses)".into() })
    }

    /// Parses one parenthesized expression; the opening paren is at `self.pos`.
    fn tree(&mut self) -> Result<ParseTree, TreebankError> {
        let open = self.toks[self.pos];
        self.pos += 1;
        let label = match self.toks.get(self.pos) {
            Some(Located { tok: Tok::Atom(a), .. }) => {
                self.pos += 1;
                Some(*a)
            }
            Some(_) => None,
            None => return self.eof_err(),
        };
        let mut items = Vec::new();
        loop {
            let Some(&t) = self.toks.get(self.pos) else {
                return self.eof_err();
            };
            match t.tok {
                Tok::Close => {
                    self.pos += 1;
                    break;
                }
                Tok::Open => items.push(Item::Tree(self.tree()?)),
                Tok::Atom(a) => {
                    self.pos += 1;
                    items.push(Item::Atom(a.to_string(), t.line, t.column));
                }
            }
        }
        let tree_err = |source| TreebankError::Tree { line: open.line, column: open.column, source };
        match (label, items.as_slice()) {
            (_, []) => self.err(open, "empty bracket"),
            (Some(tag), [Item::Atom(form, ..)]) => Ok(ParseTree::leaf(Word::new(form.clone(), tag).map_err(tree_err)?)),
            (None, [Item::Atom(..)]) => self.err(open, "token without a tag"),
            (label, items) => {
                let mut children = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        Item::Tree(t) => children.push(t.clone()),
                        Item::Atom(a, line, column) => {
                            return Err(TreebankError::Parse {
                                line: *line,
                                column: *column,
                                message: format!("unexpected token {a:?} among subtrees"),
                            })
                        }
                    }
                }
                ParseTree::node(label.unwrap_or(self.root_label), children).map_err(tree_err)
            }
        }
    }
}

/// Reads whitespace-separated bracketed trees. A wrapper bracket with no label,
/// as in `( (S ...))`, becomes a node labeled `root_label`.
pub fn read_bracketed(text: &str, source: &str, root_label: &str) -> Result<RawTreebank, TreebankError> {
    let mut reader = Reader { toks: tokenize(text), pos: 0, root_label };
    let mut trees = Vec::new();
    while let Some(&t) = reader.toks.get(reader.pos) {
        match t.tok {
            Tok::Open => trees.push(reader.tree()?),
            Tok::Close => return reader.err(t, "unbalanced ')'"),
            Tok::Atom(a) => return reader.err(t, format!("token {a:?} outside of any tree")),
        }
    }
    Ok(RawTreebank { source: source.to_string(), trees })
}

/// One tree per line.
pub fn write_bracketed<'a>(trees: impl IntoIterator<Item = &'a ParseTree>) -> String {
    let mut out = String::new();
    for t in trees {
        writeln!(out, "{t}").expect("writing to a String cannot fail");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationConfig {
    pub strip_function_tags: bool,
    pub remove_empty_elements: bool,
    pub root_label: String,
    pub function_tag_separators: Vec<char>,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            strip_function_tags: true,
            remove_empty_elements: true,
            root_label: DEFAULT_ROOT_LABEL.to_string(),
            function_tag_separators: vec!['-', '='],
        }
    }
}

impl NormalizationConfig {
    /// `NP-SBJ-1` becomes `NP`; bracket/punctuation tags are kept whole.
    pub fn strip_label<'a>(&self, label: &'a str) -> &'a str {
        if !self.strip_function_tags || PUNCT_EXCEPTIONS.contains(&label) || !label.chars().any(char::is_alphanumeric) {
            return label;
        }
        match label.char_indices().skip(1).find(|(_, c)| self.function_tag_separators.contains(c)) {
            Some((i, _)) => &label[..i],
            None => label,
        }
    }
}

fn normalize_inner(tree: &ParseTree, config: &NormalizationConfig) -> Option<ParseTree> {
    match tree {
        ParseTree::Leaf(w) => {
            if config.remove_empty_elements && w.tag() == EMPTY_ELEMENT_TAG {
                return None;
            }
            let tag = config.strip_label(w.tag());
            Some(ParseTree::leaf(Word::new(w.form(), tag).expect("stripped tag is non-empty")))
        }
        ParseTree::Node(n) => {
            let children: Vec<_> = n.children().iter().filter_map(|c| normalize_inner(c, config)).collect();
            if children.is_empty() {
                return None;
            }
            Some(ParseTree::node(config.strip_label(n.label()), children).expect("non-empty label and children"))
        }
    }
}

/// Strips function tags, removes empty elements (and nodes left childless),
/// then roots the tree at `root_label`. Returns `None` when nothing remains.
pub fn normalize(tree: &ParseTree, config: &NormalizationConfig) -> Option<ParseTree> {
    let t = normalize_inner(tree, config)?;
    if !t.is_leaf() && t.label() == config.root_label {
        Some(t)
    } else {
        Some(ParseTree::node(config.root_label.clone(), vec![t]).expect("root label is non-empty"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropRecord {
    pub source: String,
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NormalizedTreebank {
    pub source: String,
    pub trees: Vec<ParseTree>,
    pub dropped: Vec<DropRecord>,
}

impl NormalizedTreebank {
    /// Sidecar report: `source<TAB>index<TAB>reason` per dropped sentence.
    pub fn drop_report(&self) -> String {
        self.dropped.iter().map(|d| format!("{}\t{}\t{}\n", d.source, d.index, d.reason)).collect()
    }

    pub fn sentences(&self) -> Vec<Vec<Word>> {
        self.trees.iter().map(ParseTree::sentence).collect()
    }
}

pub fn normalize_treebank(raw: &RawTreebank, config: &NormalizationConfig) -> NormalizedTreebank {
    let mut out = NormalizedTreebank { source: raw.source.clone(), ..Default::default() };
    for (index, tree) in raw.trees.iter().enumerate() {
        match normalize(tree, config) {
            Some(t) => out.trees.push(t),
            None => {
                warn!("{}: dropping sentence {index}: no words left after normalization", raw.source);
                out.dropped.push(DropRecord {
                    source: raw.source.clone(),
                    index,
                    reason: "no words left after normalization".into(),
                });
            }
        }
    }
    out
}

/// Reads and normalizes in one step.
pub fn load_treebank(
    text: &str,
    source: &str,
    config: &NormalizationConfig,
) -> Result<NormalizedTreebank, TreebankError> {
    let raw = read_bracketed(text, source, &config.root_label)?;
    Ok(normalize_treebank(&raw, config))
}

/// Splits a `word_tag` token at its last unescaped `_`. `\_` and `\\` are
/// literal underscore and backslash.
fn split_tagged(token: &str) -> Option<(String, String)> {
    let mut pieces: Vec<String> = vec![String::new()];
    let mut chars = token.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => pieces.last_mut()?.push(chars.next()?),
            '_' => pieces.push(String::new()),
            c => pieces.last_mut()?.push(c),
        }
    }
    if pieces.len() < 2 {
        return None;
    }
    let tag = pieces.pop()?;
    Some((pieces.join("_"), tag))
}

fn escape_tagged(s: &str) -> String {
    s.replace('\\', "\\\\").replace('_', "\\_")
}

/// One sentence per line, `word_tag` tokens separated by spaces.
pub fn read_tagged_sentences(text: &str) -> Result<Vec<Vec<Word>>, TreebankError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut words = Vec::new();
        for token in line.split_whitespace() {
            let bad = || TreebankError::Token { line: li + 1, token: token.to_string() };
            let (form, tag) = split_tagged(token).ok_or_else(bad)?;
            words.push(Word::new(form, tag).map_err(|_| bad())?);
        }
        out.push(words);
    }
    Ok(out)
}

pub fn write_tagged_sentences(sentences: &[Vec<Word>]) -> String {
    let mut out = String::new();
    for s in sentences {
        let line: Vec<_> =
            s.iter().map(|w| format!("{}_{}", escape_tagged(w.form()), escape_tagged(w.tag()))).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Vec<ParseTree> {
        read_bracketed(text, "test", DEFAULT_ROOT_LABEL).unwrap().trees
    }

    fn norm(text: &str) -> ParseTree {
        normalize(&read(text)[0], &NormalizationConfig::default()).unwrap()
    }

    #[test]
    fn smallest_tree() {
        let trees = read("(S (NN x))");
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].label(), "S");
    }

    #[test]
    fn outer_wrapper_becomes_root() {
        let trees = read("( (S (NN x)))");
        assert_eq!(trees[0].to_string(), "(TOP (S (NN x)))");
    }

    #[test]
    fn unbalanced_is_error() {
        let err = read_bracketed("((S (NN x)", "t", "TOP").unwrap_err();
        assert!(matches!(err, TreebankError::Parse { line: 1, .. }), "{err}");
        let err = read_bracketed("(S (NN x)))", "t", "TOP").unwrap_err();
        assert!(matches!(err, TreebankError::Parse { line: 1, column: 11, .. }), "{err}");
    }

    #[test]
    fn multiline_and_empty() {
        assert!(read("").is_empty());
        assert!(read("  \n\n").is_empty());
        let trees = read("(S\n  (NP (DT a) (NN b))\n  (VP (VB c)))\n(X (Y z))");
        assert_eq!(trees.len(), 2);
        assert_eq!(trees[0].num_leaves(), 3);
    }

    #[test]
    fn malformed_brackets() {
        for bad in ["(S)", "()", "(x)", "(NP dog (NN cat))", "(NN a b)", "word"] {
            assert!(read_bracketed(bad, "t", "TOP").is_err(), "{bad}");
        }
    }

    #[test]
    fn function_tags_stripped() {
        assert_eq!(norm("(NP-SBJ (NN dog))").to_string(), "(TOP (NP (NN dog)))");
        assert_eq!(norm("(S=2 (NP-SBJ-1 (NN dog)))").to_string(), "(TOP (S (NP (NN dog))))");
    }

    #[test]
    fn empty_elements_removed() {
        assert_eq!(norm("(S (NP (-NONE- *T*)) (VP (VB go)))").to_string(), "(TOP (S (VP (VB go))))");
    }

    #[test]
    fn bracket_tags_preserved() {
        assert_eq!(
            norm("(S (-LRB- -LRB-) (NN x) (, ,) (: --))").to_string(),
            "(TOP (S (-LRB- -LRB-) (NN x) (, ,) (: --)))"
        );
    }

    #[test]
    fn all_empty_is_dropped() {
        let raw = read_bracketed("(S (NN a))\n(S (-NONE- *))\n(S (NN b))", "corpus", "TOP").unwrap();
        let tb = normalize_treebank(&raw, &NormalizationConfig::default());
        assert_eq!(tb.trees.len(), 2);
        assert_eq!(tb.dropped.len(), 1);
        assert_eq!(tb.drop_report(), "corpus\t1\tno words left after normalization\n");
    }

    #[test]
    fn normalize_is_idempotent() {
        let t = norm("( (S-TPC (NP-SBJ (-NONE- *)) (VP (VB go) (NP (PRP$ his) (NN way)))))");
        assert_eq!(normalize(&t, &NormalizationConfig::default()).unwrap(), t);
    }

    #[test]
    fn write_empty() {
        assert_eq!(write_bracketed(&[]), "");
    }

    #[test]
    fn escaped_parens_round_trip() {
        let t = ParseTree::node(
            "TOP",
            vec![ParseTree::leaf(Word::new("(", "-LRB-").unwrap()), ParseTree::leaf(Word::new(":-)", "SYM").unwrap())],
        )
        .unwrap();
        let text = write_bracketed([&t]);
        assert_eq!(text, "(TOP (-LRB- -LRB-) (SYM :--RRB-))\n");
        let back = read(&text);
        assert_eq!(write_bracketed(&back), text);
    }

    #[test]
    fn tagged_sentences() {
        let s = read_tagged_sentences("the_DT dog_NN\n\nNew\\_York_NNP a\\\\b_SYM\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1][0].form(), "New_York");
        assert_eq!(s[1][1].form(), "a\\b");
        assert_eq!(read_tagged_sentences(&write_tagged_sentences(&s)).unwrap(), s);
        let err = read_tagged_sentences("ok_NN\nbad").unwrap_err();
        assert_eq!(err, TreebankError::Token { line: 2, token: "bad".into() });
        assert!(read_tagged_sentences("dog_").is_err());
    }
}
