//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use parselab::chart::{cky_decode, SpanScoreGrid};
use parselab::eval::{corpus_f1, delta_err, err_reduction, eval_brackets, exact_match, f1_min_span_length, EvalConfig};
use parselab::experiment::{
    run_experiment, span_length_curve, ExperimentSpec, NamedCorpus, ParserKind, Variant, DEFAULT_CURVE_LENGTHS,
};
use parselab::inorder::{execute, oracle_actions};
use parselab::persist::ParserModel;
use parselab::synthetic::{random_inorder_model, random_tree, rename_labels, toy_corpus};
use parselab::train::{lr_schedule, Corpus, TrainConfig};
use parselab::tree::is_well_nested;
use parselab::treebank::{normalize, NormalizationConfig};
use parselab::{experiment::train_model, ParseTree, Word};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "delta-err reproduction", limit: Duration::from_secs(1), run: delta_err_reproduction },
        Criterion { name: "metric oracle equivalence", limit: Duration::from_secs(10), run: metric_oracle },
        Criterion { name: "cky optimality", limit: Duration::from_secs(30), run: cky_optimality },
        Criterion { name: "oracle round-trip", limit: Duration::from_secs(5), run: oracle_round_trip },
        Criterion { name: "beam properties", limit: Duration::from_secs(30), run: beam_properties },
        Criterion { name: "desk-scale learning", limit: Duration::from_secs(300), run: desk_scale_learning },
        Criterion { name: "protocol in miniature", limit: Duration::from_secs(300), run: protocol_miniature },
        Criterion { name: "schedule conformance", limit: Duration::from_secs(1), run: schedule_conformance },
    ];
    let mut failed = 0;
    let mut err = std::io::stderr();
    for c in &criteria {
        let t0 = Instant::now();
        let outcome = (c.run)();
        let took = t0.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > c.limit => Err(format!("{detail}; took {took:.2?}, limit {:?}", c.limit)),
            other => other,
        };
        let line = match &outcome {
            Ok(detail) => format!("PASS {} ({took:.2?}): {detail}", c.name),
            Err(detail) => {
                failed += 1;
                format!("FAIL {} ({took:.2?}): {detail}", c.name)
            }
        };
        writeln!(err, "{line}").unwrap();
    }
    writeln!(err, "acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len()).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- delta err

struct Column {
    name: &'static str,
    f1: &'static [f64],
    expected: &'static [f64],
}

fn delta_err_reproduction() -> Outcome {
    const EN: [&str; 4] = ["WSJ Test", "Brown All", "Genia All", "EWT All"];
    const ZH: [&str; 5] = ["CTB Test", "B. News", "Forums", "Blogs", "B. Conv."];
    let gap_columns = [
        (&EN[..], Column { name: "Berkeley", f1: &[90.06, 84.64, 79.11, 77.38], expected: &[0.0, 54.5, 110.2, 127.6] }),
        (&EN[..], Column { name: "BLLIP", f1: &[91.48, 85.89, 79.63, 79.91], expected: &[0.0, 65.6, 139.1, 135.8] }),
        (&EN[..], Column { name: "In-Order", f1: &[91.47, 85.60, 80.31, 79.07], expected: &[0.0, 68.9, 130.9, 145.4] }),
        (&EN[..], Column { name: "Chart", f1: &[93.27, 88.04, 82.68, 82.22], expected: &[0.0, 77.7, 157.4, 164.2] }),
        (
            &ZH[..],
            Column { name: "ZPar", f1: &[83.01, 77.22, 74.31, 73.90, 66.70], expected: &[0.0, 34.1, 51.2, 53.6, 96.0] },
        ),
        (
            &ZH[..],
            Column {
                name: "In-Order",
                f1: &[83.67, 77.83, 75.71, 74.74, 67.69],
                expected: &[0.0, 35.8, 48.7, 54.7, 97.9],
            },
        ),
    ];
    let mut cells = Vec::new();
    for (rows, col) in &gap_columns {
        for (i, row) in rows.iter().enumerate() {
            let d = delta_err(col.f1[0], col.f1[i]).map_err(|e| e.to_string())?.delta_err;
            cells.push((format!("{} / {row}", col.name), d, col.expected[i]));
        }
    }
    let base = [91.47, 85.60, 80.31, 79.07, 83.67, 77.83, 75.71, 74.74, 67.69];
    let emb = [92.13, 86.78, 81.64, 80.50, 85.69, 81.64, 79.44, 78.21, 70.34];
    let emb_pub = [-7.7, -8.2, -6.8, -6.8, -12.4, -17.2, -15.4, -13.7, -8.2];
    let bert = [95.71, 93.53, 87.75, 89.27, 91.81, 88.41, 87.04, 84.29, 75.88];
    let bert_pub = [-49.7, -55.0, -37.8, -48.7, -49.9, -47.7, -46.6, -37.8, -25.3];
    let rows: Vec<&str> = EN.iter().chain(ZH.iter()).copied().collect();
    for (i, row) in rows.iter().enumerate() {
        let e = err_reduction(base[i], emb[i]).map_err(|e| e.to_string())?.delta_err;
        cells.push((format!("+Embeddings / {row}"), e, emb_pub[i]));
        let b = err_reduction(base[i], bert[i]).map_err(|e| e.to_string())?.delta_err;
        cells.push((format!("+BERT / {row}"), b, bert_pub[i]));
    }
    let off: Vec<String> = cells
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 0.05 + 1e-9)
        .map(|(name, got, want)| format!("{name}: {got:.3} vs {want:+.1}"))
        .collect();
    check(off.is_empty(), || {
        format!("{} of {} cells off by more than 0.05: {}", off.len(), cells.len(), off.join("; "))
    })?;
    Ok(format!("{} cells", cells.len()))
}

// ------------------------------------------------------------ metric oracle

const PUNCT: &[&str] = &[",", ".", "``", "''", ":", "-LRB-", "-RRB-"];

fn oracle_brackets(tree: &ParseTree, cfg: &EvalConfig) -> Vec<(String, usize, usize)> {
    fn walk(t: &ParseTree, cfg: &EvalConfig, pos: &mut usize, out: &mut Vec<(String, usize, usize)>) {
        match t {
            ParseTree::Leaf(w) => {
                if !cfg.deleted_tags.contains(w.tag()) {
                    *pos += 1;
                }
            }
            ParseTree::Node(n) => {
                let start = *pos;
                for c in n.children() {
                    walk(c, cfg, pos, out);
                }
                if *pos > start && !cfg.deleted_labels.contains(n.label()) {
                    let label = cfg.equivalences.get(n.label()).cloned().unwrap_or_else(|| n.label().to_string());
                    out.push((label, start, *pos));
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, cfg, &mut 0, &mut out);
    out
}

fn oracle_counts(
    gold: &[Vec<(String, usize, usize)>],
    pred: &[Vec<(String, usize, usize)>],
    min_len: usize,
) -> (usize, usize, usize) {
    let (mut m, mut g, mut p) = (0, 0, 0);
    for (gs, ps) in gold.iter().zip(pred) {
        let gs: Vec<_> = gs.iter().filter(|b| b.2 - b.1 >= min_len).collect();
        let ps: Vec<_> = ps.iter().filter(|b| b.2 - b.1 >= min_len).collect();
        let mut used = vec![false; ps.len()];
        for gb in &gs {
            if let Some(k) = (0..ps.len()).find(|&k| !used[k] && ps[k] == *gb) {
                used[k] = true;
                m += 1;
            }
        }
        g += gs.len();
        p += ps.len();
    }
    (m, g, p)
}

fn oracle_f1(m: usize, g: usize, p: usize) -> f64 {
    let prec = if p == 0 { 0.0 } else { 100.0 * m as f64 / p as f64 };
    let rec = if g == 0 { 0.0 } else { 100.0 * m as f64 / g as f64 };
    if prec + rec > 0.0 {
        2.0 * prec * rec / (prec + rec)
    } else {
        0.0
    }
}

fn retag(tree: &ParseTree, tags: &[String], pos: &mut usize) -> ParseTree {
    match tree {
        ParseTree::Leaf(w) => {
            *pos += 1;
            ParseTree::leaf(Word::new(w.form(), tags[*pos - 1].clone()).unwrap())
        }
        ParseTree::Node(n) => {
            ParseTree::node(n.label(), n.children().iter().map(|c| retag(c, tags, pos)).collect()).unwrap()
        }
    }
}

fn metric_pair(rng: &mut ChaCha8Rng) -> (ParseTree, ParseTree) {
    const LABELS: &[&str] = &["S", "NP", "VP", "ADVP", "PRT"];
    let tags: Vec<&str> = ["NN", "VB", "DT"].iter().chain(PUNCT.iter().take(3)).copied().collect();
    let n = rng.gen_range(1..=12);
    let gold = random_tree(rng, n, LABELS, &tags, 3, Some("TOP"));
    let pred = match rng.gen_range(0..3) {
        0 => gold.clone(),
        1 => rename_labels(&gold, &[(*LABELS.choose(rng).unwrap(), *LABELS.choose(rng).unwrap())]),
        _ => random_tree(rng, n, LABELS, &tags, 3, Some("TOP")),
    };
    let gold_tags: Vec<String> = gold.leaves().iter().map(|w| w.tag().to_string()).collect();
    (gold, retag(&pred, &gold_tags, &mut 0))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2019);
    let mut cfg = EvalConfig::default();
    cfg.equivalences.insert("ADVP".into(), "PRT".into());
    let pairs: Vec<_> = (0..1000).map(|_| metric_pair(&mut rng)).collect();
    let gold: Vec<_> = pairs.iter().map(|(g, _)| eval_brackets(g, &cfg)).collect();
    let pred: Vec<_> = pairs.iter().map(|(_, p)| eval_brackets(p, &cfg)).collect();
    let og: Vec<_> = pairs.iter().map(|(g, _)| oracle_brackets(g, &cfg)).collect();
    let op: Vec<_> = pairs.iter().map(|(_, p)| oracle_brackets(p, &cfg)).collect();

    for min_len in 0..=13 {
        let s = if min_len == 0 { corpus_f1(&gold, &pred) } else { f1_min_span_length(&gold, &pred, min_len) }
            .map_err(|e| e.to_string())?;
        let (m, g, p) = oracle_counts(&og, &op, min_len);
        check((s.matched, s.gold_count, s.predicted_count) == (m, g, p), || {
            format!("L={min_len}: counts {:?} vs oracle {:?}", (s.matched, s.gold_count, s.predicted_count), (m, g, p))
        })?;
        check(s.f1.to_bits() == oracle_f1(m, g, p).to_bits(), || {
            format!("L={min_len}: F1 {} vs {}", s.f1, oracle_f1(m, g, p))
        })?;
    }
    let hits = og
        .iter()
        .zip(&op)
        .filter(|(g, p)| {
            let (mut g, mut p) = ((*g).clone(), (*p).clone());
            g.sort();
            p.sort();
            g == p
        })
        .count();
    let em = exact_match(&gold, &pred).map_err(|e| e.to_string())?;
    let want = 100.0 * hits as f64 / 1000.0;
    check(em.to_bits() == want.to_bits(), || format!("exact match {em} vs {want}"))?;
    let f1 = corpus_f1(&gold, &pred).map_err(|e| e.to_string())?.f1;
    Ok(format!("1000 pairs, F1 {f1:.2}, exact match {em:.1}"))
}

// -------------------------------------------------------------------- cky

fn bracketings(i: usize, j: usize) -> Vec<Vec<(usize, usize)>> {
    if j - i == 1 {
        return vec![vec![(i, j)]];
    }
    let mut out = Vec::new();
    for k in i + 1..j {
        for left in bracketings(i, k) {
            for right in bracketings(k, j) {
                let mut t = vec![(i, j)];
                t.extend(&left);
                t.extend(&right);
                out.push(t);
            }
        }
    }
    out
}

fn exhaustive_best(grid: &SpanScoreGrid) -> f64 {
    let n = grid.len();
    let nl = grid.labels().len();
    let mut best = f64::NEG_INFINITY;
    for tree in bracketings(0, n) {
        let inside: BTreeSet<_> = tree.iter().copied().collect();
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..=n {
                total += if !inside.contains(&(i, j)) {
                    grid.get(i, j, 0)
                } else {
                    let first = if (i, j) == (0, n) { 1 } else { 0 };
                    (first..nl).map(|l| grid.get(i, j, l)).fold(f64::NEG_INFINITY, f64::max)
                };
            }
        }
        best = best.max(total);
    }
    best
}

fn cky_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..500 {
        let n = rng.gen_range(1..=7);
        let nl = rng.gen_range(2..=4);
        let labels: Vec<String> = std::iter::once(String::new()).chain((1..nl).map(|l| format!("L{l}"))).collect();
        let mut grid = SpanScoreGrid::zeros(n, labels);
        for i in 0..n {
            for j in i + 1..=n {
                for l in 0..nl {
                    // quarter steps keep every sum exact
                    grid.set(i, j, l, rng.gen_range(-16..=4) as f64 / 4.0);
                }
            }
        }
        let words: Vec<Word> = (0..n).map(|i| Word::new(format!("w{i}"), "X").unwrap()).collect();
        let parse = cky_decode(&grid, &words).map_err(|e| e.to_string())?;
        let want = exhaustive_best(&grid);
        check(parse.score == want, || format!("case {case}: cky {} vs exhaustive {want}", parse.score))?;
        check(grid.labeling_score(&parse.brackets) == want, || format!("case {case}: brackets do not score {want}"))?;
        check(parse.tree.sentence() == words, || format!("case {case}: leaves differ"))?;
        check(is_well_nested(&parse.tree.spans()), || format!("case {case}: crossing spans"))?;
        check(parse.tree.spans().first().is_some_and(|s| (s.start, s.end) == (0, n)), || {
            format!("case {case}: root does not span the sentence")
        })?;
    }
    Ok("500 grids".into())
}

// ----------------------------------------------------------- oracle trips

fn oracle_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = NormalizationConfig::default();
    let raw_labels = ["S", "NP-SBJ", "VP", "PP-LOC", "SBAR", "-NONE-", "ADJP"];
    let raw_tags = ["NN", "VBZ", "DT", "-NONE-", ","];
    let mut sample = Vec::new();
    while sample.len() < 1000 {
        let n = rng.gen_range(1..=25);
        let raw = random_tree(&mut rng, n, &raw_labels, &raw_tags, 3, Some("TOP"));
        if let Some(t) = normalize(&raw, &cfg) {
            sample.push(t);
        }
    }
    for (i, t) in sample.iter().enumerate() {
        let actions = oracle_actions(t);
        check(actions.len() == t.num_leaves() + 2 * t.num_nodes() + 1, || {
            format!("tree {i}: {} actions", actions.len())
        })?;
        let back = execute(&actions, &t.sentence()).map_err(|e| format!("tree {i}: {e}"))?;
        check(&back == t, || format!("tree {i}: {back} != {t}"))?;
    }
    Ok("1000 normalized trees".into())
}

// -------------------------------------------------------------------- beam

fn beam_properties() -> Outcome {
    for case in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let labels: Vec<String> =
            ["A", "B", "C", "D"].iter().take(rng.gen_range(1..=4)).map(|s| s.to_string()).collect();
        let limit = rng.gen_range(1..=4);
        let model = random_inorder_model(&mut rng, &labels, 8, limit, 10, 2.0);
        let n = rng.gen_range(1..=8);
        let words: Vec<Word> = (0..n)
            .map(|_| Word::new(format!("w{}", rng.gen_range(0..5)), ["X", "Y"][rng.gen_range(0..2)]).unwrap())
            .collect();
        let greedy = model.greedy_decode(&words, None).map_err(|e| e.to_string())?;
        let b1 = model.beam_decode(&words, None, 1).map_err(|e| e.to_string())?;
        let b10 = model.beam_decode(&words, None, 10).map_err(|e| e.to_string())?;
        check(b1 == greedy, || format!("case {case}: beam 1 differs from greedy"))?;
        check(b10.score >= b1.score, || format!("case {case}: beam 10 {} < beam 1 {}", b10.score, b1.score))?;
    }
    Ok("200 random models".into())
}

// ---------------------------------------------------------------- learning

fn desk_config() -> TrainConfig {
    TrainConfig {
        decoder_lr: 0.05,
        batch_size: 8,
        hash_bits: 18,
        max_epochs: 8,
        seeds: vec![1],
        ..TrainConfig::default()
    }
}

fn held_out_f1(model: &ParserModel, test: &[ParseTree]) -> Result<f64, String> {
    let pred = model.parse_corpus(&Corpus::new(test), None).map_err(|e| e.to_string())?;
    let cfg = EvalConfig::default();
    let g: Vec<_> = test.iter().map(|t| eval_brackets(t, &cfg)).collect();
    let p: Vec<_> = pred.iter().map(|t| eval_brackets(t, &cfg)).collect();
    corpus_f1(&g, &p).map(|s| s.f1).map_err(|e| e.to_string())
}

fn desk_scale_learning() -> Outcome {
    let train = toy_corpus(200, 1);
    let dev = toy_corpus(50, 2);
    let test = toy_corpus(50, 3);
    let cfg = desk_config();
    let mut detail = Vec::new();
    for kind in [ParserKind::Chart, ParserKind::Inorder] {
        let fit = || train_model(kind, &Corpus::new(&train), &Corpus::new(&dev), &cfg, 5).map_err(|e| e.to_string());
        let (model, _) = fit()?;
        let (again, _) = fit()?;
        check(model.to_bytes() == again.to_bytes(), || format!("{}: retraining is not bit-identical", kind.name()))?;
        let f1 = held_out_f1(&model, &test)?;
        check(f1 >= 95.0, || format!("{}: held-out F1 {f1:.2} < 95", kind.name()))?;
        detail.push(format!("{} {f1:.2}", kind.name()));
    }
    Ok(format!("held-out F1 {}", detail.join(", ")))
}

// ---------------------------------------------------------------- protocol

fn protocol_miniature() -> Outcome {
    let test = toy_corpus(60, 13);
    let shifted: Vec<ParseTree> =
        toy_corpus(60, 14).iter().map(|t| rename_labels(t, &[("NP", "NX"), ("PP", "NP")])).collect();
    // short training keeps the in-domain F1 below 100
    let config = TrainConfig { hash_bits: 18, max_epochs: 2, seeds: vec![1, 2], ..TrainConfig::default() };
    let spec = ExperimentSpec {
        parser: ParserKind::Chart,
        train: toy_corpus(200, 11),
        dev: toy_corpus(50, 12),
        eval: vec![
            NamedCorpus { name: "Toy Test".into(), trees: test.clone() },
            NamedCorpus { name: "Shifted".into(), trees: shifted },
        ],
        variants: vec![Variant::plain("Chart")],
        in_domain: "Toy Test".into(),
        base_variant: None,
        config,
        eval_config: EvalConfig::default(),
        curve_lengths: DEFAULT_CURVE_LENGTHS.to_vec(),
        concurrent_seeds: true,
    };
    let report = run_experiment(&spec).map_err(|e| e.to_string())?;
    let in_f1 = report.mean_f1("Chart", "Toy Test").ok_or("no in-domain F1")?;
    check(in_f1 < 100.0, || "in-domain F1 is 100; the gap is undefined".into())?;
    let d_in = report.delta_err("Chart", "Toy Test").ok_or("no in-domain delta err")?;
    let d_out = report.delta_err("Chart", "Shifted").ok_or("no shifted delta err")?;
    check(d_in == 0.0, || format!("in-domain delta err {d_in}"))?;
    check(d_out > 0.0, || format!("shifted delta err {d_out}"))?;
    let table = report.f1_table();
    check(table.lines().any(|l| l.starts_with("Toy Test") && l.contains("+0.0%")), || format!("table:\n{table}"))?;
    check(table.lines().any(|l| l.starts_with("Shifted")), || format!("table:\n{table}"))?;
    for r in &report.results {
        let l0 = r.curve.iter().find(|p| p.min_len == 0).ok_or("curve lacks L=0")?;
        check(l0.score.f1.to_bits() == r.score.f1.to_bits(), || {
            format!("{} seed {}: curve L=0 differs", r.corpus, r.seed)
        })?;
    }
    // and directly, on a fresh pair of corpora
    let cfg = EvalConfig::default();
    let gold: Vec<_> = test.iter().map(|t| eval_brackets(t, &cfg)).collect();
    let pred: Vec<_> = toy_corpus(60, 15).iter().map(|t| eval_brackets(t, &cfg)).collect();
    let curve = span_length_curve(&gold, &pred, &[0]).map_err(|e| e.to_string())?;
    let overall = corpus_f1(&gold, &pred).map_err(|e| e.to_string())?;
    check(curve[0].score.f1.to_bits() == overall.f1.to_bits(), || "direct curve L=0 differs".into())?;
    Ok(format!("in-domain F1 {in_f1:.2}, shifted delta err {d_out:+.1}%"))
}

// ---------------------------------------------------------------- schedule

fn schedule_conformance() -> Outcome {
    let cfg = TrainConfig::default();
    let m = lr_schedule(80, &[], &cfg);
    check(m.warmup == 0.5 && m.representation == 0.5, || format!("step 80: {m:?}"))?;
    check(lr_schedule(160, &[], &cfg).warmup == 1.0, || "step 160 is not fully warm".into())?;
    let h = lr_schedule(1000, &[90.0, 90.0, 90.0], &cfg);
    check(h.halvings == 1 && h.decoder == 0.5, || format!("plateau: {h:?}"))?;
    check(lr_schedule(1000, &[90.0, 90.0], &cfg).halvings == 0, || "halved too early".into())?;
    Ok("warmup 0.5 at step 80 of 160, one halving".into())
}
