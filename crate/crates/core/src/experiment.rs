//! Multi-seed training and cross-corpus evaluation with generalization-gap
//! and error-reduction reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Deserialize;
use thiserror::Error;

use crate::chart::train_chart;
use crate::eval::{
    delta_err, eval_brackets, exact_match, f1_min_span_length, BracketSet, EvalConfig, EvalError, F1Score,
};
use crate::inorder::train_inorder;
use crate::persist::ParserModel;
use crate::repr::{load_vector_table, sentence_forms, VectorError, VectorTable};
use crate::train::{Corpus, TrainConfig};
use crate::tree::ParseTree;
use crate::treebank::{load_treebank, NormalizationConfig, TreebankError};
use crate::{par_map, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParserKind {
    Chart,
    Inorder,
}

impl ParserKind {
    pub fn name(self) -> &'static str {
        match self {
            ParserKind::Chart => "chart",
            ParserKind::Inorder => "inorder",
        }
    }
}

impl std::str::FromStr for ParserKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chart" => Ok(ParserKind::Chart),
            "inorder" => Ok(ParserKind::Inorder),
            _ => Err(format!("unknown parser kind {s:?} (expected chart or inorder)")),
        }
    }
}

/// Trains one model of the given kind.
pub fn train_model(
    kind: ParserKind,
    train: &Corpus<'_>,
    dev: &Corpus<'_>,
    config: &TrainConfig,
    seed: u64,
) -> Result<(ParserModel, crate::train::TrainLog), ParseError> {
    match kind {
        ParserKind::Chart => train_chart(train, dev, config, seed).map(|(m, l)| (ParserModel::Chart(m), l)),
        ParserKind::Inorder => train_inorder(train, dev, config, seed).map(|(m, l)| (ParserModel::InOrder(m), l)),
    }
}

impl ParserModel {
    /// Parses every sentence of `corpus`; `beam` overrides the in-order default.
    pub fn parse_corpus(&self, corpus: &Corpus<'_>, beam: Option<usize>) -> Result<Vec<ParseTree>, ParseError> {
        match self {
            ParserModel::Chart(m) => m.parse_corpus(corpus),
            ParserModel::InOrder(m) => m.parse_corpus(corpus, beam.unwrap_or(m.beam_size)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedCorpus {
    pub name: String,
    pub trees: Vec<ParseTree>,
}

/// A representation variant: hashed features alone, or with imported vectors.
#[derive(Debug, Clone, Default)]
pub struct Variant {
    pub name: String,
    pub train_vectors: Option<VectorTable>,
    pub dev_vectors: Option<VectorTable>,
    /// Aligned with the evaluation corpora.
    pub eval_vectors: Vec<Option<VectorTable>>,
}

impl Variant {
    pub fn plain(name: &str) -> Self {
        Variant { name: name.to_string(), ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub parser: ParserKind,
    pub train: Vec<ParseTree>,
    pub dev: Vec<ParseTree>,
    pub eval: Vec<NamedCorpus>,
    pub variants: Vec<Variant>,
    /// Corpus every Δ Err is measured against.
    pub in_domain: String,
    /// Variant every error reduction is measured against.
    pub base_variant: Option<String>,
    pub config: TrainConfig,
    pub eval_config: EvalConfig,
    pub curve_lengths: Vec<usize>,
    pub concurrent_seeds: bool,
}

pub const DEFAULT_CURVE_LENGTHS: [usize; 7] = [0, 5, 10, 15, 20, 25, 30];

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub min_len: usize,
    pub score: F1Score,
}

/// F1 restricted to spans of at least each length in `lengths`.
pub fn span_length_curve(
    gold: &[BracketSet],
    pred: &[BracketSet],
    lengths: &[usize],
) -> Result<Vec<CurvePoint>, EvalError> {
    lengths.iter().map(|&l| f1_min_span_length(gold, pred, l).map(|score| CurvePoint { min_len: l, score })).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub variant: String,
    pub corpus: String,
    pub seed: u64,
    pub score: F1Score,
    pub exact_match: f64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub parser: ParserKind,
    pub variants: Vec<String>,
    pub corpora: Vec<String>,
    pub in_domain: String,
    pub base_variant: Option<String>,
    pub seeds: Vec<u64>,
    pub results: Vec<SeedResult>,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("in-domain corpus {0:?} is not among the evaluation corpora")]
    UnknownInDomain(String),
    #[error("base variant {0:?} is not among the variants")]
    UnknownBase(String),
    #[error("variant {variant:?} has {found} evaluation vector tables for {expected} corpora")]
    VectorCount { variant: String, expected: usize, found: usize },
    #[error("experiment needs at least one variant and one evaluation corpus")]
    Empty,
    #[error("variant {variant:?}, seed {seed}: {source}")]
    Seed {
        variant: String,
        seed: u64,
        #[source]
        source: ParseError,
        partial: Box<ExperimentReport>,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Treebank { path: PathBuf, source: TreebankError },
    #[error("{path}: {source}")]
    Vectors { path: PathBuf, source: VectorError },
    #[error("experiment config: {0}")]
    Config(String),
}

impl ExperimentError {
    /// Results gathered before a seed failed.
    pub fn partial_report(&self) -> Option<&ExperimentReport> {
        match self {
            ExperimentError::Seed { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

fn validate(spec: &ExperimentSpec) -> Result<(), ExperimentError> {
    if spec.variants.is_empty() || spec.eval.is_empty() {
        return Err(ExperimentError::Empty);
    }
    if !spec.eval.iter().any(|c| c.name == spec.in_domain) {
        return Err(ExperimentError::UnknownInDomain(spec.in_domain.clone()));
    }
    if let Some(b) = &spec.base_variant {
        if !spec.variants.iter().any(|v| &v.name == b) {
            return Err(ExperimentError::UnknownBase(b.clone()));
        }
    }
    for v in &spec.variants {
        if !v.eval_vectors.is_empty() && v.eval_vectors.len() != spec.eval.len() {
            return Err(ExperimentError::VectorCount {
                variant: v.name.clone(),
                expected: spec.eval.len(),
                found: v.eval_vectors.len(),
            });
        }
    }
    spec.config.validate().map_err(|e| ExperimentError::Config(e.to_string()))
}

fn run_seed(spec: &ExperimentSpec, variant: &Variant, seed: u64) -> Result<Vec<SeedResult>, ParseError> {
    let train = Corpus::with_vectors(&spec.train, variant.train_vectors.as_ref());
    let dev = Corpus::with_vectors(&spec.dev, variant.dev_vectors.as_ref());
    let (model, log) = train_model(spec.parser, &train, &dev, &spec.config, seed)?;
    info!("{} seed {seed}: best dev F1 {:.2} at epoch {}", variant.name, log.best_dev_f1, log.best_epoch);
    let mut out = Vec::with_capacity(spec.eval.len());
    for (i, corpus) in spec.eval.iter().enumerate() {
        let vectors = variant.eval_vectors.get(i).and_then(Option::as_ref);
        let pred = model.parse_corpus(&Corpus::with_vectors(&corpus.trees, vectors), None)?;
        let gold: Vec<_> = corpus.trees.iter().map(|t| eval_brackets(t, &spec.eval_config)).collect();
        let pred: Vec<_> = pred.iter().map(|t| eval_brackets(t, &spec.eval_config)).collect();
        let aligned = "gold and predicted corpora are aligned by construction";
        let curve = span_length_curve(&gold, &pred, &spec.curve_lengths).expect(aligned);
        out.push(SeedResult {
            variant: variant.name.clone(),
            corpus: corpus.name.clone(),
            seed,
            score: f1_min_span_length(&gold, &pred, 0).expect(aligned),
            exact_match: exact_match(&gold, &pred).expect(aligned),
            curve,
        });
    }
    Ok(out)
}

/// Trains one model per (variant, seed) and evaluates it on every corpus.
/// A failing seed aborts the run; the error carries the results so far.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, ExperimentError> {
    validate(spec)?;
    let mut report = ExperimentReport {
        parser: spec.parser,
        variants: spec.variants.iter().map(|v| v.name.clone()).collect(),
        corpora: spec.eval.iter().map(|c| c.name.clone()).collect(),
        in_domain: spec.in_domain.clone(),
        base_variant: spec.base_variant.clone(),
        seeds: spec.config.seeds.clone(),
        results: Vec::new(),
    };
    for variant in &spec.variants {
        let runs: Vec<Result<Vec<SeedResult>, ParseError>> = if spec.concurrent_seeds {
            par_map(&spec.config.seeds, |&seed| run_seed(spec, variant, seed))
        } else {
            spec.config.seeds.iter().map(|&seed| run_seed(spec, variant, seed)).collect()
        };
        for (run, &seed) in runs.into_iter().zip(&spec.config.seeds) {
            match run {
                Ok(r) => report.results.extend(r),
                Err(source) => {
                    warn!("variant {} seed {seed} failed: {source}", variant.name);
                    return Err(ExperimentError::Seed {
                        variant: variant.name.clone(),
                        seed,
                        source,
                        partial: Box::new(report),
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Rounds half away from zero, treating values within 1e-9 of a tie as ties.
pub fn round_half_up(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let s = x * scale;
    (s.abs() + 0.5 + 1e-9).floor().copysign(s) / scale
}

pub fn format_f1(x: f64) -> String {
    format!("{:.2}", round_half_up(x, 2))
}

/// Signed percentage with one decimal, e.g. `+54.5%`.
pub fn format_delta(x: f64) -> String {
    let r = round_half_up(x, 1);
    let r = if r == 0.0 { 0.0 } else { r };
    if r < 0.0 {
        format!("{r:.1}%")
    } else {
        format!("+{r:.1}%")
    }
}

impl ExperimentReport {
    fn seed_results<'a>(&'a self, variant: &'a str, corpus: &'a str) -> impl Iterator<Item = &'a SeedResult> + 'a {
        self.results.iter().filter(move |r| r.variant == variant && r.corpus == corpus)
    }

    fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
        let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Mean F1 over seeds.
    pub fn mean_f1(&self, variant: &str, corpus: &str) -> Option<f64> {
        Self::mean(self.seed_results(variant, corpus).map(|r| r.score.f1))
    }

    pub fn mean_exact_match(&self, variant: &str, corpus: &str) -> Option<f64> {
        Self::mean(self.seed_results(variant, corpus).map(|r| r.exact_match))
    }

    pub fn mean_curve_f1(&self, variant: &str, corpus: &str, min_len: usize) -> Option<f64> {
        Self::mean(
            self.seed_results(variant, corpus)
                .flat_map(|r| r.curve.iter().filter(|p| p.min_len == min_len).map(|p| p.score.f1)),
        )
    }

    /// Δ Err of `corpus` against the in-domain corpus. Exactly 0 for the
    /// in-domain corpus itself; `None` when the in-domain F1 is 100.
    pub fn delta_err(&self, variant: &str, corpus: &str) -> Option<f64> {
        let other = self.mean_f1(variant, corpus)?;
        if corpus == self.in_domain {
            return Some(0.0);
        }
        let reference = self.mean_f1(variant, &self.in_domain)?;
        delta_err(reference, other).ok().map(|g| g.delta_err)
    }

    /// Error reduction of `variant` relative to the base variant on `corpus`.
    pub fn err_reduction(&self, variant: &str, corpus: &str) -> Option<f64> {
        let base = self.base_variant.as_deref()?;
        let augmented = self.mean_f1(variant, corpus)?;
        if variant == base {
            return Some(0.0);
        }
        delta_err(self.mean_f1(base, corpus)?, augmented).ok().map(|g| g.delta_err)
    }

    /// Tab-separated results. `score` rows hold per-seed and mean results
    /// (mean rows also carry Δ Err and error reduction); `curve` rows hold
    /// the minimum-span-length F1 per seed.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("# span lengths are counted after deleted-tag words are removed\n");
        out.push_str(REPORT_HEADER);
        out.push('\n');
        let dash = || "-".to_string();
        let opt = |v: Option<f64>| v.map_or_else(dash, |x| format!("{x:.4}"));
        for v in &self.variants {
            for c in &self.corpora {
                for r in self.seed_results(v, c) {
                    let s = &r.score;
                    let _ = writeln!(
                        out,
                        "score\t{v}\t{c}\t{}\t-\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t-\t-",
                        r.seed, s.matched, s.gold_count, s.predicted_count, s.precision, s.recall, s.f1, r.exact_match
                    );
                }
                let _ = writeln!(
                    out,
                    "score\t{v}\t{c}\tmean\t-\t-\t-\t-\t-\t-\t{}\t{}\t{}\t{}",
                    opt(self.mean_f1(v, c)),
                    opt(self.mean_exact_match(v, c)),
                    opt(self.delta_err(v, c)),
                    opt(self.err_reduction(v, c)),
                );
            }
        }
        for v in &self.variants {
            for c in &self.corpora {
                for r in self.seed_results(v, c) {
                    for p in &r.curve {
                        let s = &p.score;
                        let _ = writeln!(
                            out,
                            "curve\t{v}\t{c}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t-\t-\t-",
                            r.seed, p.min_len, s.matched, s.gold_count, s.predicted_count, s.precision, s.recall, s.f1
                        );
                    }
                }
            }
        }
        out
    }

    /// Mean F1 and Δ Err per corpus and variant, in the layout of a
    /// cross-domain results table.
    pub fn f1_table(&self) -> String {
        let columns: Vec<(String, Vec<Option<f64>>)> = self
            .variants
            .iter()
            .map(|v| (v.clone(), self.corpora.iter().map(|c| self.mean_f1(v, c)).collect()))
            .collect();
        let reference = self.corpora.iter().position(|c| *c == self.in_domain).expect("validated");
        render_gap_table(&self.corpora, &columns, reference)
    }

    /// Mean F1 of every variant plus error reduction against the base variant.
    pub fn reduction_table(&self) -> Option<String> {
        let base = self.base_variant.as_deref()?;
        let f1 = |v: &str| self.corpora.iter().map(|c| self.mean_f1(v, c)).collect::<Vec<_>>();
        let others: Vec<(String, Vec<Option<f64>>)> =
            self.variants.iter().filter(|v| v.as_str() != base).map(|v| (v.clone(), f1(v))).collect();
        Some(render_reduction_table(&self.corpora, (base, &f1(base)), &others))
    }

    pub fn exact_match_table(&self) -> String {
        let mut rows =
            vec![std::iter::once(String::new()).chain(self.variants.iter().map(|v| format!("{v} EM"))).collect()];
        for c in &self.corpora {
            let mut row = vec![c.clone()];
            row.extend(self.variants.iter().map(|v| self.mean_exact_match(v, c).map_or("-".into(), format_f1)));
            rows.push(row);
        }
        render(&rows)
    }

    /// Mean F1 by minimum span length, one row per length.
    pub fn curve_table(&self) -> String {
        let mut lengths: Vec<usize> = self.results.iter().flat_map(|r| r.curve.iter().map(|p| p.min_len)).collect();
        lengths.sort_unstable();
        lengths.dedup();
        let mut header = vec!["min span".to_string()];
        for v in &self.variants {
            for c in &self.corpora {
                header.push(format!("{v}/{c}"));
            }
        }
        let mut rows = vec![header];
        for l in lengths {
            let mut row = vec![l.to_string()];
            for v in &self.variants {
                for c in &self.corpora {
                    row.push(self.mean_curve_f1(v, c, l).map_or("-".into(), format_f1));
                }
            }
            rows.push(row);
        }
        render(&rows)
    }
}

/// Header of [`ExperimentReport::to_tsv`].
pub const REPORT_HEADER: &str =
    "kind\tvariant\tcorpus\tseed\tmin_span\tmatched\tgold\tpredicted\tprecision\trecall\tf1\texact_match\tdelta_err\terr_reduction";

fn render(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

/// Each column gets F1 and Δ Err against row `reference`.
pub fn render_gap_table(rows: &[String], columns: &[(String, Vec<Option<f64>>)], reference: usize) -> String {
    let mut table = vec![std::iter::once(String::new())
        .chain(columns.iter().flat_map(|(name, _)| [format!("{name} F1"), "Δ Err".to_string()]))
        .collect::<Vec<_>>()];
    for (r, name) in rows.iter().enumerate() {
        let mut row = vec![name.clone()];
        for (_, f1) in columns {
            row.push(f1[r].map_or("-".into(), format_f1));
            let gap = match (f1[reference], f1[r]) {
                (Some(_), Some(_)) if r == reference => Some(0.0),
                (Some(a), Some(b)) => delta_err(a, b).ok().map(|g| g.delta_err),
                _ => None,
            };
            row.push(gap.map_or("n/a".into(), format_delta));
        }
        table.push(row);
    }
    render(&table)
}

/// Base F1, then F1 and error reduction for every other column.
pub fn render_reduction_table(
    rows: &[String],
    base: (&str, &[Option<f64>]),
    columns: &[(String, Vec<Option<f64>>)],
) -> String {
    let mut header = vec![String::new(), format!("{} F1", base.0)];
    header.extend(columns.iter().flat_map(|(name, _)| [format!("{name} F1"), "Δ Err".to_string()]));
    let mut table = vec![header];
    for (r, name) in rows.iter().enumerate() {
        let mut row = vec![name.clone(), base.1[r].map_or("-".into(), format_f1)];
        for (_, f1) in columns {
            row.push(f1[r].map_or("-".into(), format_f1));
            let red = match (base.1[r], f1[r]) {
                (Some(a), Some(b)) => delta_err(a, b).ok().map(|g| g.delta_err),
                _ => None,
            };
            row.push(red.map_or("n/a".into(), format_delta));
        }
        table.push(row);
    }
    render(&table)
}

/// Published or externally computed F1 values: a header row of column
/// names, then one row per corpus. Tab-separated; `-` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<String>,
    pub columns: Vec<(String, Vec<Option<f64>>)>,
}

impl ScoreTable {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| ExperimentError::Config("score table is empty".into()))?;
        let names: Vec<String> = header.split('\t').skip(1).map(|s| s.trim().to_string()).collect();
        if names.is_empty() {
            return Err(ExperimentError::Config("score table has no value columns".into()));
        }
        let mut table = ScoreTable { rows: Vec::new(), columns: names.into_iter().map(|n| (n, Vec::new())).collect() };
        for (i, line) in lines {
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != table.columns.len() + 1 {
                return Err(ExperimentError::Config(format!(
                    "score table line {}: expected {} fields, found {}",
                    i + 1,
                    table.columns.len() + 1,
                    fields.len()
                )));
            }
            table.rows.push(fields[0].to_string());
            for (col, f) in table.columns.iter_mut().zip(&fields[1..]) {
                let v = match *f {
                    "-" => None,
                    _ => Some(f.parse::<f64>().map_err(|_| {
                        ExperimentError::Config(format!("score table line {}: {f:?} is not a number", i + 1))
                    })?),
                };
                col.1.push(v);
            }
        }
        Ok(table)
    }

    pub fn row_index(&self, name: &str) -> Option<usize> {
        self.rows.iter().position(|r| r == name)
    }

    /// F1 and Δ Err per column against row `reference`.
    pub fn gap_table(&self, reference: usize) -> String {
        render_gap_table(&self.rows, &self.columns, reference)
    }

    /// Error reduction of every other column against column `base`.
    pub fn reduction_table(&self, base: &str) -> Option<String> {
        let (_, b) = self.columns.iter().find(|(n, _)| n == base)?;
        let others: Vec<_> = self.columns.iter().filter(|(n, _)| n != base).cloned().collect();
        Some(render_reduction_table(&self.rows, (base, b), &others))
    }
}

/// Experiment description as read from a TOML file. Relative paths are
/// resolved against the file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub parser: ParserKind,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub in_domain: String,
    #[serde(default)]
    pub base_variant: Option<String>,
    #[serde(default)]
    pub eval_params: Option<PathBuf>,
    #[serde(default)]
    pub curve_lengths: Option<Vec<usize>>,
    #[serde(default)]
    pub concurrent_seeds: bool,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub normalization: NormalizationFile,
    #[serde(rename = "corpus")]
    pub corpora: Vec<CorpusEntry>,
    #[serde(rename = "variant", default)]
    pub variants: Vec<VariantEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationFile {
    pub strip_function_tags: bool,
    pub remove_empty_elements: bool,
    pub root_label: String,
}

impl Default for NormalizationFile {
    fn default() -> Self {
        let d = NormalizationConfig::default();
        NormalizationFile {
            strip_function_tags: d.strip_function_tags,
            remove_empty_elements: d.remove_empty_elements,
            root_label: d.root_label,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantEntry {
    pub name: String,
    #[serde(default)]
    pub train_vectors: Option<PathBuf>,
    #[serde(default)]
    pub dev_vectors: Option<PathBuf>,
    /// Corpus name to vector file.
    #[serde(default)]
    pub vectors: BTreeMap<String, PathBuf>,
}

impl ExperimentFile {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let f: ExperimentFile = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        f.training.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(f)
    }

    /// Reads every referenced file and builds the in-memory experiment.
    pub fn load(&self, base_dir: &Path) -> Result<ExperimentSpec, ExperimentError> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let norm = NormalizationConfig {
            strip_function_tags: self.normalization.strip_function_tags,
            remove_empty_elements: self.normalization.remove_empty_elements,
            root_label: self.normalization.root_label.clone(),
            ..NormalizationConfig::default()
        };
        let read = |p: &Path| {
            let path = resolve(p);
            std::fs::read_to_string(&path).map_err(|source| ExperimentError::Io { path: path.clone(), source })
        };
        let trees = |p: &Path| -> Result<Vec<ParseTree>, ExperimentError> {
            let path = resolve(p);
            let tb = load_treebank(&read(p)?, &path.display().to_string(), &norm)
                .map_err(|source| ExperimentError::Treebank { path: path.clone(), source })?;
            if !tb.dropped.is_empty() {
                warn!("{}: {} trees dropped during normalization", path.display(), tb.dropped.len());
            }
            Ok(tb.trees)
        };
        let vectors = |p: &Path, data: &[ParseTree]| -> Result<VectorTable, ExperimentError> {
            let path = resolve(p);
            let file =
                std::fs::File::open(&path).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
            let sentences: Vec<_> = data.iter().map(ParseTree::sentence).collect();
            load_vector_table(std::io::BufReader::new(file), &sentence_forms(&sentences))
                .map_err(|source| ExperimentError::Vectors { path, source })
        };
        let train = trees(&self.train)?;
        let dev = trees(&self.dev)?;
        let eval: Vec<NamedCorpus> = self
            .corpora
            .iter()
            .map(|c| Ok(NamedCorpus { name: c.name.clone(), trees: trees(&c.path)? }))
            .collect::<Result<_, ExperimentError>>()?;
        let entries = if self.variants.is_empty() {
            vec![VariantEntry { name: "base".into(), train_vectors: None, dev_vectors: None, vectors: BTreeMap::new() }]
        } else {
            self.variants.clone()
        };
        let mut variants = Vec::new();
        for v in &entries {
            if let Some(unknown) = v.vectors.keys().find(|k| !eval.iter().any(|c| &c.name == *k)) {
                return Err(ExperimentError::Config(format!("variant {:?} names unknown corpus {unknown:?}", v.name)));
            }
            let eval_vectors = if v.vectors.is_empty() {
                Vec::new()
            } else {
                eval.iter()
                    .map(|c| v.vectors.get(&c.name).map(|p| vectors(p, &c.trees)).transpose())
                    .collect::<Result<_, _>>()?
            };
            variants.push(Variant {
                name: v.name.clone(),
                train_vectors: v.train_vectors.as_deref().map(|p| vectors(p, &train)).transpose()?,
                dev_vectors: v.dev_vectors.as_deref().map(|p| vectors(p, &dev)).transpose()?,
                eval_vectors,
            });
        }
        let eval_config = match &self.eval_params {
            Some(p) => EvalConfig::parse_params(&read(p)?)?,
            None => EvalConfig::with_root(&norm.root_label),
        };
        let spec = ExperimentSpec {
            parser: self.parser,
            train,
            dev,
            eval,
            variants,
            in_domain: self.in_domain.clone(),
            base_variant: self.base_variant.clone(),
            config: self.training.clone(),
            eval_config,
            curve_lengths: self.curve_lengths.clone().unwrap_or_else(|| DEFAULT_CURVE_LENGTHS.to_vec()),
            concurrent_seeds: self.concurrent_seeds,
        };
        validate(&spec)?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(54.45, 1), 54.5);
        assert_eq!(round_half_up(-54.45, 1), -54.5);
        assert_eq!(round_half_up(0.125, 2), 0.13);
        assert_eq!(format_delta(-0.01), "+0.0%");
        assert_eq!(format_delta(157.43), "+157.4%");
        assert_eq!(format_delta(-7.74), "-7.7%");
        assert_eq!(format_f1(93.265), "93.27");
    }

    #[test]
    fn gap_table_from_scores() {
        let rows: Vec<String> =
            ["WSJ Test", "Brown All", "Genia All", "EWT All"].iter().map(|s| s.to_string()).collect();
        let chart = vec![Some(93.27), Some(88.04), Some(82.68), Some(82.22)];
        let t = render_gap_table(&rows, &[("Chart".into(), chart)], 0);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[2].ends_with("+0.0%"));
        assert!(lines[3].ends_with("+77.7%"));
        assert!(lines[4].ends_with("+157.4%"));
        assert!(lines[5].ends_with("+164.2%"));
    }

    #[test]
    fn score_table() {
        let t = ScoreTable::parse("corpus\tIn-Order\t+BERT\nWSJ Test\t91.47\t95.71\nBrown All\t85.60\t-\n").unwrap();
        assert_eq!(t.row_index("Brown All"), Some(1));
        let red = t.reduction_table("In-Order").unwrap();
        assert!(red.lines().nth(2).unwrap().ends_with("-49.7%"));
        assert!(red.lines().nth(3).unwrap().ends_with("n/a"));
        assert!(ScoreTable::parse("corpus\ta\nx\t1\t2\n").is_err());
        assert!(ScoreTable::parse("corpus\ta\nx\tone\n").is_err());
    }

    #[test]
    fn experiment_file_parses() {
        let text = r#"
parser = "inorder"
train = "train.mrg"
dev = "dev.mrg"
in_domain = "test"
base_variant = "base"

[training]
seeds = [1, 2]
max_epochs = 3

[[corpus]]
name = "test"
path = "test.mrg"

[[variant]]
name = "base"

[[variant]]
name = "vectors"
train_vectors = "train.ptvt"
dev_vectors = "dev.ptvt"
vectors = { test = "test.ptvt" }
"#;
        let f = ExperimentFile::from_toml(text).unwrap();
        assert_eq!(f.parser, ParserKind::Inorder);
        assert_eq!(f.training.seeds, vec![1, 2]);
        assert_eq!(f.variants[1].vectors["test"], PathBuf::from("test.ptvt"));
        assert!(ExperimentFile::from_toml("parser = \"cky\"").is_err());
    }
}
