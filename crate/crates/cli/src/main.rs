use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use parselab::eval::{
    corpus_f1, eval_brackets, exact_match, f1_min_span_length, metric_record, EvalConfig, METRIC_RECORD_HEADER,
};
use parselab::experiment::{run_experiment, span_length_curve, train_model, ExperimentFile, ParserKind, ScoreTable};
use parselab::inorder::{execute_with_limit, format_actions, oracle_actions};
use parselab::persist::ParserModel;
use parselab::repr::{load_vector_table, sentence_forms, VectorTable};
use parselab::train::{Corpus, TrainConfig};
use parselab::treebank::{load_treebank, read_tagged_sentences, NormalizationConfig};
use parselab::{ParseTree, Word};

#[derive(Parser)]
#[command(name = "parselab", version, about = "Chart and in-order constituency parsing with cross-domain evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a parser and write the model file plus a training log.
    Train {
        #[arg(long, value_parser = parse_kind)]
        parser: ParserKind,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        /// TOML file with training settings; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Vectors for the training treebank.
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Vectors for the development treebank (required with --vectors).
        #[arg(long)]
        dev_vectors: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Training log path; defaults to MODEL.log.tsv.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Parse tagged sentences (word_TAG tokens, one sentence per line).
    Parse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Beam size for in-order models; ignored by chart models.
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted trees against gold trees.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Evaluation parameter file (ROOT_LABEL, DELETE_LABEL, DELETE_TAG, EQ_LABEL lines).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Only count brackets spanning at least this many words.
        #[arg(long)]
        min_span: Option<usize>,
        #[arg(long)]
        exact_match: bool,
        /// Comma-separated minimum span lengths for an F1 curve.
        #[arg(long, value_delimiter = ',')]
        curve: Vec<usize>,
    },
    /// Dump gold in-order derivations and check that they rebuild the trees.
    Oracle {
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        unary_limit: usize,
    },
    /// Train on one treebank over several seeds and evaluate on many.
    RunExperiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Format F1 values into Δ Err or error-reduction tables.
    Report {
        /// Tab-separated scores: header of column names, one row per corpus.
        #[arg(long)]
        scores: PathBuf,
        /// Row every Δ Err is measured against.
        #[arg(long, conflicts_with = "base", required_unless_present = "base")]
        reference: Option<String>,
        /// Column every error reduction is measured against.
        #[arg(long)]
        base: Option<String>,
    },
}

fn parse_kind(s: &str) -> Result<ParserKind, String> {
    s.parse()
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 1, error: e.into() }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { parser, train, dev, config, vectors, dev_vectors, seed, out, log } => cmd_train(
            parser,
            &train,
            &dev,
            config.as_deref(),
            vectors.as_deref(),
            dev_vectors.as_deref(),
            seed,
            &out,
            log,
        ),
        Command::Parse { model, input, beam, vectors, out } => {
            cmd_parse(&model, &input, beam, vectors.as_deref(), &out)
        }
        Command::Eval { gold, pred, params, min_span, exact_match, curve } => {
            cmd_eval(&gold, &pred, params.as_deref(), min_span, exact_match, &curve)
        }
        Command::Oracle { treebank, out, unary_limit } => cmd_oracle(&treebank, &out, unary_limit),
        Command::RunExperiment { config, out_dir } => cmd_experiment(&config, &out_dir),
        Command::Report { scores, reference, base } => cmd_report(&scores, reference, base),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(invalid)
}

fn read_trees(path: &Path) -> Result<Vec<ParseTree>, Failure> {
    let text = read_text(path)?;
    let tb = load_treebank(&text, &path.display().to_string(), &NormalizationConfig::default())
        .with_context(|| format!("cannot load treebank {}", path.display()))
        .map_err(invalid)?;
    for d in &tb.dropped {
        log::warn!("{}: tree {} dropped: {}", d.source, d.index, d.reason);
    }
    Ok(tb.trees)
}

fn read_vectors(path: &Path, sentences: &[Vec<Word>], corpus: &Path) -> Result<VectorTable, Failure> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display())).map_err(invalid)?;
    load_vector_table(BufReader::new(file), &sentence_forms(sentences))
        .with_context(|| format!("vectors {} do not match corpus {}", path.display(), corpus.display()))
        .map_err(invalid)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    kind: ParserKind,
    train_path: &Path,
    dev_path: &Path,
    config: Option<&Path>,
    vectors: Option<&Path>,
    dev_vectors: Option<&Path>,
    seed: u64,
    out: &Path,
    log: Option<PathBuf>,
) -> Outcome {
    let cfg = match config {
        Some(p) => {
            TrainConfig::from_toml(&read_text(p)?).with_context(|| format!("{}", p.display())).map_err(invalid)?
        }
        None => TrainConfig::default(),
    };
    let train = read_trees(train_path)?;
    let dev = read_trees(dev_path)?;
    if train.is_empty() {
        return Err(invalid(anyhow!("{} holds no usable trees", train_path.display())));
    }
    if dev.is_empty() {
        return Err(invalid(anyhow!("{} holds no usable trees", dev_path.display())));
    }
    let (tv, dv) = match (vectors, dev_vectors) {
        (None, None) => (None, None),
        (Some(t), Some(d)) => {
            let ts: Vec<_> = train.iter().map(ParseTree::sentence).collect();
            let ds: Vec<_> = dev.iter().map(ParseTree::sentence).collect();
            (Some(read_vectors(t, &ts, train_path)?), Some(read_vectors(d, &ds, dev_path)?))
        }
        _ => return Err(invalid(anyhow!("--vectors and --dev-vectors must be given together"))),
    };
    let (model, train_log) = train_model(
        kind,
        &Corpus::with_vectors(&train, tv.as_ref()),
        &Corpus::with_vectors(&dev, dv.as_ref()),
        &cfg,
        seed,
    )?;
    write_file(out, model.to_bytes())?;
    let log_path = log.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".log.tsv");
        PathBuf::from(p)
    });
    write_file(&log_path, train_log.to_string())?;
    eprintln!(
        "trained {} model: best dev F1 {:.2} at epoch {}; wrote {} and {}",
        kind.name(),
        train_log.best_dev_f1,
        train_log.best_epoch,
        out.display(),
        log_path.display()
    );
    Ok(())
}

fn cmd_parse(model: &Path, input: &Path, beam: Option<usize>, vectors: Option<&Path>, out: &Path) -> Outcome {
    if beam == Some(0) {
        return Err(invalid(anyhow!("--beam must be at least 1")));
    }
    let model =
        ParserModel::load(model).with_context(|| format!("cannot load model {}", model.display())).map_err(invalid)?;
    let sentences =
        read_tagged_sentences(&read_text(input)?).with_context(|| format!("{}", input.display())).map_err(invalid)?;
    if let Some(i) = sentences.iter().position(Vec::is_empty) {
        return Err(invalid(anyhow!("{}: line {} is empty", input.display(), i + 1)));
    }
    let table = vectors.map(|v| read_vectors(v, &sentences, input)).transpose()?;
    let mut lines = String::new();
    for (i, s) in sentences.iter().enumerate() {
        let rows = table.as_ref().map(|t| t.sentence_rows(i));
        let tree = match &model {
            ParserModel::Chart(m) => m.parse(s, rows.as_deref())?.tree,
            ParserModel::InOrder(m) => {
                let p = m.beam_decode(s, rows.as_deref(), beam.unwrap_or(m.beam_size))?;
                if p.forced {
                    log::warn!("sentence {}: no derivation finished; output was force-completed", i + 1);
                }
                p.tree
            }
        };
        lines.push_str(&tree.to_string());
        lines.push('\n');
    }
    write_file(out, lines)
}

fn cmd_eval(
    gold: &Path,
    pred: &Path,
    params: Option<&Path>,
    min_span: Option<usize>,
    exact: bool,
    curve: &[usize],
) -> Outcome {
    let cfg = match params {
        Some(p) => {
            EvalConfig::parse_params(&read_text(p)?).with_context(|| format!("{}", p.display())).map_err(invalid)?
        }
        None => EvalConfig::default(),
    };
    let g = read_trees(gold)?;
    let p = read_trees(pred)?;
    if g.len() != p.len() {
        return Err(invalid(anyhow!(
            "{} has {} trees but {} has {}",
            gold.display(),
            g.len(),
            pred.display(),
            p.len()
        )));
    }
    let gb: Vec<_> = g.iter().map(|t| eval_brackets(t, &cfg)).collect();
    let pb: Vec<_> = p.iter().map(|t| eval_brackets(t, &cfg)).collect();
    let name = gold.display().to_string();
    println!("{METRIC_RECORD_HEADER}");
    let score = match min_span {
        Some(l) => f1_min_span_length(&gb, &pb, l)?,
        None => corpus_f1(&gb, &pb)?,
    };
    let metric = min_span.map_or("f1".to_string(), |l| format!("f1_min_span_{l}"));
    println!("{}", metric_record(&name, &metric, &score));
    for point in span_length_curve(&gb, &pb, curve)? {
        println!("{}", metric_record(&name, &format!("f1_min_span_{}", point.min_len), &point.score));
    }
    if exact {
        println!("# exact match {:.2}", exact_match(&gb, &pb)?);
    }
    if score.is_empty() {
        println!("# no brackets to score (empty)");
    }
    Ok(())
}

fn cmd_oracle(treebank: &Path, out: &Path, unary_limit: usize) -> Outcome {
    if unary_limit == 0 {
        return Err(invalid(anyhow!("--unary-limit must be at least 1")));
    }
    let trees = read_trees(treebank)?;
    let mut dump = String::new();
    let mut violations = Vec::new();
    for (i, t) in trees.iter().enumerate() {
        let actions = oracle_actions(t);
        dump.push_str(&format_actions(&actions));
        dump.push('\n');
        if t.max_unary_depth() > unary_limit {
            violations.push(format!(
                "sentence {}: unary chain of {} exceeds limit {unary_limit}",
                i + 1,
                t.max_unary_depth()
            ));
            continue;
        }
        match execute_with_limit(&actions, &t.sentence(), unary_limit) {
            Ok(back) if &back == t => {}
            Ok(_) => violations.push(format!("sentence {}: derivation rebuilds a different tree", i + 1)),
            Err(e) => violations.push(format!("sentence {}: {e}", i + 1)),
        }
    }
    write_file(out, dump)?;
    let ok = trees.len() - violations.len();
    eprintln!("{ok}/{} derivations round-trip", trees.len());
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure { code: 1, error: anyhow!("{} sentences violate the oracle round trip", violations.len()) })
    }
}

fn cmd_experiment(config: &Path, out_dir: &Path) -> Outcome {
    let file = ExperimentFile::from_toml(&read_text(config)?)
        .with_context(|| format!("{}", config.display()))
        .map_err(invalid)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let spec = file.load(base).map_err(invalid)?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    match run_experiment(&spec) {
        Ok(report) => {
            write_file(&out_dir.join("report.tsv"), report.to_tsv())?;
            write_file(&out_dir.join("f1.txt"), report.f1_table())?;
            write_file(&out_dir.join("exact_match.txt"), report.exact_match_table())?;
            write_file(&out_dir.join("curves.txt"), report.curve_table())?;
            if let Some(t) = report.reduction_table() {
                write_file(&out_dir.join("error_reduction.txt"), t)?;
            }
            print!("{}", report.f1_table());
            Ok(())
        }
        Err(e) => {
            if let Some(partial) = e.partial_report() {
                let path = out_dir.join("partial_report.tsv");
                write_file(&path, partial.to_tsv())?;
                eprintln!("partial results written to {}", path.display());
            }
            Err(e.into())
        }
    }
}

fn cmd_report(scores: &Path, reference: Option<String>, base: Option<String>) -> Outcome {
    let table = ScoreTable::parse(&read_text(scores)?).map_err(invalid)?;
    let text = match (reference, base) {
        (Some(r), _) => {
            let i =
                table.row_index(&r).ok_or_else(|| invalid(anyhow!("no row named {r:?} in {}", scores.display())))?;
            table.gap_table(i)
        }
        (None, Some(b)) => table
            .reduction_table(&b)
            .ok_or_else(|| invalid(anyhow!("no column named {b:?} in {}", scores.display())))?,
        (None, None) => unreachable!("clap requires one of --reference or --base"),
    };
    print!("{text}");
    io::Write::flush(&mut io::stdout())?;
    Ok(())
}
