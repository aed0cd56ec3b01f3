//! Browser demo: parse tagged sentences with toy models trained on load,
//! format Δ Err tables, and compute span-length F1 curves.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use parselab::eval::{eval_brackets, EvalConfig};
use parselab::experiment::{span_length_curve, ScoreTable};
use parselab::synthetic::toy_corpus;
use parselab::train::{Corpus, TrainConfig};
use parselab::treebank::{load_treebank, read_tagged_sentences, NormalizationConfig};
use parselab::{train_chart, train_inorder, ChartModel, InOrderModel, ParseTree};

/// Both parsers, trained on the built-in toy grammar.
#[wasm_bindgen]
pub struct Demo {
    chart: ChartModel,
    inorder: InOrderModel,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsValue> {
        Demo::train().map_err(|e| JsValue::from_str(&e))
    }

    /// Parses one `word_TAG` line; returns `{bracketed, tree, actions?}` as JSON.
    pub fn parse(&self, tagged: &str, parser: &str, beam: usize) -> Result<String, JsValue> {
        self.parse_json(tagged, parser, beam).map_err(|e| JsValue::from_str(&e))
    }
}

impl Demo {
    pub fn train() -> Result<Demo, String> {
        let train = toy_corpus(200, 1);
        let dev = toy_corpus(50, 2);
        let cfg =
            TrainConfig { decoder_lr: 0.05, batch_size: 8, hash_bits: 16, max_epochs: 6, ..TrainConfig::default() };
        let (chart, _) = train_chart(&Corpus::new(&train), &Corpus::new(&dev), &cfg, 1).map_err(|e| e.to_string())?;
        let (inorder, _) =
            train_inorder(&Corpus::new(&train), &Corpus::new(&dev), &cfg, 1).map_err(|e| e.to_string())?;
        Ok(Demo { chart, inorder })
    }

    pub fn parse_json(&self, tagged: &str, parser: &str, beam: usize) -> Result<String, String> {
        let mut sentences = read_tagged_sentences(tagged).map_err(|e| e.to_string())?;
        if sentences.len() != 1 || sentences[0].is_empty() {
            return Err("enter exactly one non-empty line of word_TAG tokens".into());
        }
        let words = sentences.remove(0);
        let out = match parser {
            "chart" => {
                let p = self.chart.parse(&words, None).map_err(|e| e.to_string())?;
                json!({ "bracketed": p.tree.to_string(), "tree": tree_json(&p.tree), "score": p.score })
            }
            "inorder" => {
                let p = self.inorder.beam_decode(&words, None, beam.max(1)).map_err(|e| e.to_string())?;
                let actions: Vec<String> = p.actions.iter().map(ToString::to_string).collect();
                json!({
                    "bracketed": p.tree.to_string(),
                    "tree": tree_json(&p.tree),
                    "score": p.score,
                    "actions": actions,
                    "forced": p.forced,
                })
            }
            other => return Err(format!("unknown parser {other:?}")),
        };
        Ok(out.to_string())
    }
}

fn tree_json(t: &ParseTree) -> Value {
    match t {
        ParseTree::Leaf(w) => json!({ "label": w.tag(), "word": w.form() }),
        ParseTree::Node(n) => {
            json!({ "label": n.label(), "children": n.children().iter().map(tree_json).collect::<Vec<_>>() })
        }
    }
}

/// F1 and Δ Err table for tab-separated scores against the named row.
pub fn gap_table(scores: &str, reference: &str) -> Result<String, String> {
    let table = ScoreTable::parse(scores).map_err(|e| e.to_string())?;
    let i = table.row_index(reference).ok_or_else(|| format!("no row named {reference:?}"))?;
    Ok(table.gap_table(i))
}

/// `[{min_len, f1, gold, predicted, matched}]` for two aligned treebanks.
pub fn curve_json(gold: &str, pred: &str, lengths: &[usize]) -> Result<String, String> {
    let norm = NormalizationConfig::default();
    let load = |text: &str, name: &str| load_treebank(text, name, &norm).map(|tb| tb.trees).map_err(|e| e.to_string());
    let (g, p) = (load(gold, "gold")?, load(pred, "pred")?);
    let cfg = EvalConfig::default();
    let gb: Vec<_> = g.iter().map(|t| eval_brackets(t, &cfg)).collect();
    let pb: Vec<_> = p.iter().map(|t| eval_brackets(t, &cfg)).collect();
    let curve = span_length_curve(&gb, &pb, lengths).map_err(|e| e.to_string())?;
    let points: Vec<Value> = curve
        .iter()
        .map(|c| {
            json!({
                "min_len": c.min_len,
                "f1": c.score.f1,
                "gold": c.score.gold_count,
                "predicted": c.score.predicted_count,
                "matched": c.score.matched,
            })
        })
        .collect();
    Ok(Value::Array(points).to_string())
}

#[wasm_bindgen(js_name = gapTable)]
pub fn gap_table_js(scores: &str, reference: &str) -> Result<String, JsValue> {
    gap_table(scores, reference).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = spanCurve)]
pub fn span_curve_js(gold: &str, pred: &str, lengths: &[u32]) -> Result<String, JsValue> {
    let lengths: Vec<usize> = lengths.iter().map(|&l| l as usize).collect();
    curve_json(gold, pred, &lengths).map_err(|e| JsValue::from_str(&e))
}
