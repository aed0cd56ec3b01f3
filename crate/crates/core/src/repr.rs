//! Word and state representations: hashed sparse features, imported
//! per-token vector tables (PTVT files) and the learned projection applied
//! to imported vectors.

use std::io::{self, Read, Write};

use rand::Rng;
use thiserror::Error;

use crate::inorder::{ParserState, StackItem};
use crate::tree::Word;

pub const DEFAULT_HASH_BITS: u32 = 22;
pub const DEFAULT_PROJECTION_DIM: usize = 128;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Sentences joined by `'\n'`, tokens by `' '`; the text whose hash aligns a
/// vector table with a corpus.
pub fn tokenized_text<S: AsRef<str>>(sentences: &[Vec<S>]) -> String {
    sentences.iter().map(|s| s.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")).collect::<Vec<_>>().join("\n")
}

pub fn sentence_forms(sentences: &[Vec<Word>]) -> Vec<Vec<&str>> {
    sentences.iter().map(|s| s.iter().map(Word::form).collect()).collect()
}

/// Sparse features: sorted, duplicate-free `(index, weight)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    entries: Vec<(u32, f32)>,
}

impl FeatureVector {
    /// Sorts by index and sums the weights of colliding indices.
    pub fn from_entries(mut entries: Vec<(u32, f32)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut out: Vec<(u32, f32)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => out.push((i, w)),
            }
        }
        FeatureVector { entries: out }
    }

    pub fn entries(&self) -> &[(u32, f32)] {
        &self.entries
    }

    pub fn contains(&self, index: u32) -> bool {
        self.entries.binary_search_by_key(&index, |e| e.0).is_ok()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Maps feature names into `2^bits` buckets with FNV-1a.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHasher {
    bits: u32,
}

impl Default for FeatureHasher {
    fn default() -> Self {
        FeatureHasher { bits: DEFAULT_HASH_BITS }
    }
}

impl FeatureHasher {
    pub fn new(bits: u32) -> Self {
        assert!((1..=32).contains(&bits), "hash bits must be in 1..=32");
        FeatureHasher { bits }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn index(&self, name: &str) -> u32 {
        let h = fnv1a64(name.as_bytes());
        (h & ((1u64 << self.bits) - 1)) as u32
    }

    pub fn vector<S: AsRef<str>>(&self, names: &[S]) -> FeatureVector {
        FeatureVector::from_entries(names.iter().map(|n| (self.index(n.as_ref()), 1.0)).collect())
    }
}

fn length_bucket(len: usize) -> &'static str {
    match len {
        0 => "0",
        1 => "1",
        2 => "2",
        3 => "3",
        4 => "4",
        5..=7 => "5-7",
        8..=15 => "8-15",
        16..=31 => "16-31",
        _ => "32+",
    }
}

const BOS: (&str, &str) = ("<s>", "<s>");
const EOS: (&str, &str) = ("</s>", "</s>");

fn word_at<'a>(sentence: &'a [Word], i: Option<usize>, outside: (&'static str, &'static str)) -> (&'a str, &'a str) {
    match i.and_then(|i| sentence.get(i)) {
        Some(w) => (w.form(), w.tag()),
        None => outside,
    }
}

/// Feature names for span `[start, end)`. Only words in `start-1 ..= end`
/// and the span length contribute.
pub fn span_feature_names(sentence: &[Word], start: usize, end: usize) -> Vec<String> {
    debug_assert!(start < end && end <= sentence.len());
    let (fw, ft) = word_at(sentence, Some(start), BOS);
    let (lw, lt) = word_at(sentence, Some(end - 1), EOS);
    let (pw, pt) = word_at(sentence, start.checked_sub(1), BOS);
    let (nw, nt) = if end < sentence.len() { word_at(sentence, Some(end), EOS) } else { EOS };
    let len = length_bucket(end - start);
    let second = if end - start > 1 { word_at(sentence, Some(start + 1), EOS).1 } else { "-" };
    let penult = if end - start > 1 { word_at(sentence, Some(end - 2), BOS).1 } else { "-" };
    vec![
        "bias".to_string(),
        format!("len={len}"),
        format!("fw={fw}"),
        format!("ft={ft}"),
        format!("lw={lw}"),
        format!("lt={lt}"),
        format!("pw={pw}"),
        format!("pt={pt}"),
        format!("nw={nw}"),
        format!("nt={nt}"),
        format!("ft|lt={ft}|{lt}"),
        format!("pt|ft={pt}|{ft}"),
        format!("lt|nt={lt}|{nt}"),
        format!("pt|nt={pt}|{nt}"),
        format!("ft|lt|len={ft}|{lt}|{len}"),
        format!("pt|ft|lt|nt={pt}|{ft}|{lt}|{nt}"),
        format!("fw|lt={fw}|{lt}"),
        format!("pw|ft={pw}|{ft}"),
        format!("ft|f2t={ft}|{second}"),
        format!("l2t|lt={penult}|{lt}"),
        format!("pt|ft|len={pt}|{ft}|{len}"),
        format!("lt|nt|len={lt}|{nt}|{len}"),
    ]
}

pub fn featurize_span(sentence: &[Word], start: usize, end: usize, hasher: &FeatureHasher) -> FeatureVector {
    hasher.vector(&span_feature_names(sentence, start, end))
}

fn item_name(item: Option<&StackItem>) -> String {
    match item {
        None => "<empty>".to_string(),
        Some(StackItem::Open { label, .. }) => format!("open:{label}"),
        Some(StackItem::Done(t)) => t.label().to_string(),
    }
}

/// Feature names for a transition state: the top two stack items, the
/// innermost open nonterminal, the front of the buffer and the last action.
pub fn state_feature_names(state: &ParserState) -> Vec<String> {
    let stack = state.stack();
    let s0 = item_name(stack.last());
    let s1 = item_name(stack.len().checked_sub(2).and_then(|i| stack.get(i)));
    let s0w = match stack.last() {
        Some(StackItem::Done(crate::tree::ParseTree::Leaf(w))) => w.form().to_string(),
        Some(StackItem::Open { first, .. }) => first.label().to_string(),
        _ => "-".to_string(),
    };
    let (open, nch) = match state.innermost_open() {
        Some((label, children)) => (label.to_string(), children.min(3)),
        None => ("<none>".to_string(), 0),
    };
    let (bw, bt) = match state.buffer_front_word() {
        Some(w) => (w.form(), w.tag()),
        None => EOS,
    };
    let last = state.last_action().map_or("<start>".to_string(), |a| a.to_string());
    let depth = match stack.last() {
        Some(StackItem::Done(t)) => t.unary_depth().min(4),
        _ => 0,
    };
    let nopen = state.open_count().min(3);
    vec![
        "bias".to_string(),
        format!("s0={s0}"),
        format!("s0w={s0w}"),
        format!("s1={s1}"),
        format!("nt={open}"),
        format!("nch={nch}"),
        format!("b0w={bw}"),
        format!("b0t={bt}"),
        format!("last={last}"),
        format!("nopen={nopen}"),
        format!("s0ud={depth}"),
        format!("s0|b0t={s0}|{bt}"),
        format!("s0|s1={s0}|{s1}"),
        format!("s0|nt={s0}|{open}"),
        format!("s0|last={s0}|{last}"),
        format!("s0|s1|b0t={s0}|{s1}|{bt}"),
        format!("nt|b0t={open}|{bt}"),
        format!("s0|nt|b0t={s0}|{open}|{bt}"),
        format!("nt|nch|b0t={open}|{nch}|{bt}"),
        format!("s0|nt|nch={s0}|{open}|{nch}"),
        format!("s0w|b0w={s0w}|{bw}"),
        format!("s0|b0w={s0}|{bw}"),
        format!("s0|ud|nt={s0}|{depth}|{open}"),
    ]
}

pub fn featurize_state(state: &ParserState, hasher: &FeatureHasher) -> FeatureVector {
    hasher.vector(&state_feature_names(state))
}

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not a PTVT file (bad magic)")]
    Magic,
    #[error("unsupported PTVT version {0}")]
    Version(u32),
    #[error("vector table is not aligned with the corpus (hash {found:#018x}, corpus hash {expected:#018x})")]
    Hash { expected: u64, found: u64 },
    #[error("vector table has {found} sentences, corpus has {expected}")]
    SentenceCount { expected: usize, found: usize },
    #[error("sentence {sentence}: {found} vectors for {expected} tokens")]
    RowCount { sentence: usize, expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("trailing bytes after the last sentence")]
    Trailing,
}

const PTVT_MAGIC: &[u8; 4] = b"PTVT";
const PTVT_VERSION: u32 = 1;

/// Per-token vectors for a corpus, one `tokens x dim` row-major matrix per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    dim: usize,
    sentences: Vec<Vec<f32>>,
    alignment_hash: u64,
}

impl VectorTable {
    /// Builds a table aligned with `sentences` (token forms).
    pub fn new<S: AsRef<str>>(dim: usize, sentences: &[Vec<S>], rows: Vec<Vec<f32>>) -> Result<Self, VectorError> {
        if rows.len() != sentences.len() {
            return Err(VectorError::SentenceCount { expected: sentences.len(), found: rows.len() });
        }
        for (i, (s, r)) in sentences.iter().zip(&rows).enumerate() {
            if r.len() != s.len() * dim {
                return Err(VectorError::RowCount { sentence: i, expected: s.len(), found: r.len() / dim.max(1) });
            }
        }
        let alignment_hash = fnv1a64(tokenized_text(sentences).as_bytes());
        Ok(VectorTable { dim, sentences: rows, alignment_hash })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn alignment_hash(&self) -> u64 {
        self.alignment_hash
    }

    pub fn rows(&self, sentence: usize) -> usize {
        self.sentences[sentence].len() / self.dim.max(1)
    }

    pub fn row(&self, sentence: usize, token: usize) -> &[f32] {
        &self.sentences[sentence][token * self.dim..(token + 1) * self.dim]
    }

    /// All rows of one sentence.
    pub fn sentence_rows(&self, sentence: usize) -> Vec<&[f32]> {
        (0..self.rows(sentence)).map(|t| self.row(sentence, t)).collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(PTVT_MAGIC)?;
        w.write_all(&PTVT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.sentences.len() as u64).to_le_bytes())?;
        w.write_all(&self.alignment_hash.to_le_bytes())?;
        for (i, s) in self.sentences.iter().enumerate() {
            w.write_all(&(self.rows(i) as u32).to_le_bytes())?;
            for v in s {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads a table without checking alignment against any corpus.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self, VectorError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PTVT_MAGIC {
            return Err(VectorError::Magic);
        }
        let version = read_u32(&mut r)?;
        if version != PTVT_VERSION {
            return Err(VectorError::Version(version));
        }
        let dim = read_u32(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        let alignment_hash = read_u64(&mut r)?;
        let mut sentences = Vec::with_capacity(n.min(1 << 20));
        let mut buf = Vec::new();
        for _ in 0..n {
            let tokens = read_u32(&mut r)? as usize;
            buf.resize(tokens * dim * 4, 0);
            r.read_exact(&mut buf)?;
            sentences.push(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect());
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(VectorError::Trailing);
        }
        Ok(VectorTable { dim, sentences, alignment_hash })
    }

    /// Checks that the table is aligned with `expected` (token forms).
    pub fn check_alignment<S: AsRef<str>>(&self, expected: &[Vec<S>]) -> Result<(), VectorError> {
        let hash = fnv1a64(tokenized_text(expected).as_bytes());
        if hash != self.alignment_hash {
            return Err(VectorError::Hash { expected: hash, found: self.alignment_hash });
        }
        if self.sentences.len() != expected.len() {
            return Err(VectorError::SentenceCount { expected: expected.len(), found: self.sentences.len() });
        }
        for (i, s) in expected.iter().enumerate() {
            if self.rows(i) != s.len() {
                return Err(VectorError::RowCount { sentence: i, expected: s.len(), found: self.rows(i) });
            }
        }
        Ok(())
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads a PTVT file and verifies it against the tokenized corpus.
pub fn load_vector_table<R: Read, S: AsRef<str>>(reader: R, expected: &[Vec<S>]) -> Result<VectorTable, VectorError> {
    let table = VectorTable::read_from(reader)?;
    table.check_alignment(expected)?;
    Ok(table)
}

/// Learned linear map from imported vectors to the parser's input size.
/// Stored as `dim_out` rows of `dim_in` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    dim_in: usize,
    dim_out: usize,
    weights: Vec<f32>,
}

impl Projection {
    pub fn new(dim_in: usize, dim_out: usize, weights: Vec<f32>) -> Result<Self, VectorError> {
        if dim_out == 0 {
            return Err(VectorError::Dimension { expected: 1, found: 0 });
        }
        if weights.len() != dim_in * dim_out {
            return Err(VectorError::Dimension { expected: dim_in * dim_out, found: weights.len() });
        }
        assert!(weights.iter().all(|w| w.is_finite()), "projection weights must be finite");
        Ok(Projection { dim_in, dim_out, weights })
    }

    /// Uniform Glorot initialization.
    pub fn random<R: Rng>(dim_in: usize, dim_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (dim_in + dim_out) as f32).sqrt();
        let weights = (0..dim_in * dim_out).map(|_| rng.gen_range(-a..a)).collect();
        Projection { dim_in, dim_out, weights }
    }

    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Projection { dim_in: dim, dim_out: dim, weights }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    pub fn project(&self, v: &[f32]) -> Result<Vec<f32>, VectorError> {
        if v.len() != self.dim_in {
            return Err(VectorError::Dimension { expected: self.dim_in, found: v.len() });
        }
        Ok(self.weights.chunks_exact(self.dim_in).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect())
    }
}
