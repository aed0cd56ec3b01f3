//! Log-linear scorer shared by both parsers: hashed sparse weights plus an
//! optional dense layer over projected imported vectors, trained with Adam.

use std::collections::HashMap;

use crate::repr::{FeatureVector, Projection};

/// Dense part of the scorer: `slots` projected vectors are concatenated and
/// scored by a `classes x (slots * dim_out)` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub(crate) projection: Projection,
    pub(crate) slots: usize,
    pub(crate) weights: Vec<f32>,
}

impl DenseLayer {
    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    fn width(&self) -> usize {
        self.slots * self.projection.dim_out()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    classes: usize,
    pub(crate) rows: HashMap<u32, Vec<f32>>,
    pub(crate) dense: Option<DenseLayer>,
}

/// One slot of dense input: the token index it came from and its projected vector.
pub type Slot<'a> = Option<(usize, &'a [f32])>;

impl LinearModel {
    pub fn new(classes: usize) -> Self {
        LinearModel { classes, rows: HashMap::new(), dense: None }
    }

    pub fn with_dense(classes: usize, projection: Projection, slots: usize) -> Self {
        let weights = vec![0.0; classes * slots * projection.dim_out()];
        LinearModel { classes, rows: HashMap::new(), dense: Some(DenseLayer { projection, slots, weights }) }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dense(&self) -> Option<&DenseLayer> {
        self.dense.as_ref()
    }

    /// Nonzero sparse rows sorted by feature index.
    pub fn sorted_rows(&self) -> Vec<(u32, &[f32])> {
        let mut rows: Vec<_> = self.rows.iter().map(|(k, v)| (*k, v.as_slice())).collect();
        rows.sort_by_key(|r| r.0);
        rows
    }

    /// Projects every raw token vector of a sentence; empty when there is no dense layer.
    pub fn project_tokens(&self, raw: &[&[f32]]) -> Vec<Vec<f32>> {
        match &self.dense {
            Some(d) => raw.iter().map(|e| d.projection.project(e).expect("vector table dimension checked")).collect(),
            None => Vec::new(),
        }
    }

    pub fn logits(&self, fv: &FeatureVector, slots: &[Slot<'_>]) -> Vec<f64> {
        let mut out = vec![0.0f64; self.classes];
        for &(idx, val) in fv.entries() {
            if let Some(row) = self.rows.get(&idx) {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += f64::from(*w) * f64::from(val);
                }
            }
        }
        if let Some(d) = &self.dense {
            let dim = d.projection.dim_out();
            let width = d.width();
            for (s, slot) in slots.iter().enumerate().take(d.slots) {
                if let Some((_, x)) = slot {
                    for (c, o) in out.iter_mut().enumerate() {
                        let w = &d.weights[c * width + s * dim..c * width + (s + 1) * dim];
                        *o += w.iter().zip(x.iter()).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum::<f64>();
                    }
                }
            }
        }
        out
    }
}

/// Log-softmax over the classes allowed by `mask` (all when `None`).
/// Disallowed classes get `-inf`.
pub fn log_softmax(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let max = logits.iter().enumerate().filter(|(i, _)| allowed(*i)).map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![f64::NEG_INFINITY; logits.len()];
    }
    let sum: f64 = logits.iter().enumerate().filter(|(i, _)| allowed(*i)).map(|(_, l)| (l - max).exp()).sum();
    let lse = max + sum.ln();
    logits.iter().enumerate().map(|(i, l)| if allowed(i) { l - lse } else { f64::NEG_INFINITY }).collect()
}

/// Accumulated gradient of the summed cross-entropy loss.
#[derive(Debug, Clone, Default)]
pub struct Gradient {
    rows: HashMap<u32, Vec<f32>>,
    dense: Vec<f32>,
    proj: Vec<f32>,
    token_grads: Vec<Vec<f32>>,
}

impl Gradient {
    pub fn new(model: &LinearModel) -> Self {
        let (dense, proj) = match &model.dense {
            Some(d) => (vec![0.0; d.weights.len()], vec![0.0; d.projection.weights().len()]),
            None => (Vec::new(), Vec::new()),
        };
        Gradient { rows: HashMap::new(), dense, proj, token_grads: Vec::new() }
    }

    /// Starts a sentence of `tokens` tokens for projection gradients.
    pub fn begin_sentence(&mut self, model: &LinearModel, tokens: usize) {
        if let Some(d) = &model.dense {
            self.token_grads = vec![vec![0.0; d.projection.dim_out()]; tokens];
        }
    }

    /// Adds `dlogits` (d loss / d logits) for one example.
    pub fn add(&mut self, model: &LinearModel, fv: &FeatureVector, slots: &[Slot<'_>], dlogits: &[f64]) {
        for &(idx, val) in fv.entries() {
            let row = self.rows.entry(idx).or_insert_with(|| vec![0.0; model.classes]);
            for (g, d) in row.iter_mut().zip(dlogits) {
                *g += (d * f64::from(val)) as f32;
            }
        }
        if let Some(d) = &model.dense {
            let dim = d.projection.dim_out();
            let width = d.width();
            for (s, slot) in slots.iter().enumerate().take(d.slots) {
                let Some((tok, x)) = slot else { continue };
                for (c, dl) in dlogits.iter().enumerate() {
                    if *dl == 0.0 {
                        continue;
                    }
                    let base = c * width + s * dim;
                    let gx = &mut self.token_grads[*tok];
                    for k in 0..dim {
                        self.dense[base + k] += (dl * f64::from(x[k])) as f32;
                        gx[k] += (dl * f64::from(d.weights[base + k])) as f32;
                    }
                }
            }
        }
    }

    /// Folds the per-token gradients of the current sentence into the
    /// projection gradient.
    pub fn end_sentence(&mut self, model: &LinearModel, raw: &[&[f32]]) {
        let Some(d) = &model.dense else { return };
        let dim_in = d.projection.dim_in();
        for (gx, e) in self.token_grads.iter().zip(raw) {
            for (k, g) in gx.iter().enumerate() {
                if *g == 0.0 {
                    continue;
                }
                let row = &mut self.proj[k * dim_in..(k + 1) * dim_in];
                for (p, v) in row.iter_mut().zip(e.iter()) {
                    *p += g * v;
                }
            }
        }
        self.token_grads.clear();
    }
}

/// Adaptive-moment optimizer. Sparse rows are updated lazily (only rows with
/// a gradient in the current batch); dense parameters every step.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    rows: HashMap<u32, (Vec<f32>, Vec<f32>)>,
    dense: (Vec<f32>, Vec<f32>),
    proj: (Vec<f32>, Vec<f32>),
}

impl Adam {
    pub fn new(model: &LinearModel, beta1: f64, beta2: f64, eps: f64) -> Self {
        let (nd, np) = model.dense.as_ref().map_or((0, 0), |d| (d.weights.len(), d.projection.weights().len()));
        Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            rows: HashMap::new(),
            dense: (vec![0.0; nd], vec![0.0; nd]),
            proj: (vec![0.0; np], vec![0.0; np]),
        }
    }

    fn update(&self, params: &mut [f32], grads: &[f32], m: &mut [f32], v: &mut [f32], lr: f64) {
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = f64::from(grads[i]);
            let mi = self.beta1 * f64::from(m[i]) + (1.0 - self.beta1) * g;
            let vi = self.beta2 * f64::from(v[i]) + (1.0 - self.beta2) * g * g;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let step = lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
            params[i] = (f64::from(params[i]) - step) as f32;
        }
    }

    pub fn step(&mut self, model: &mut LinearModel, grad: &Gradient, lr_decoder: f64, lr_repr: f64) {
        self.t += 1;
        let classes = model.classes;
        for (idx, g) in &grad.rows {
            let (mut m, mut v) = self.rows.remove(idx).unwrap_or_else(|| (vec![0.0; classes], vec![0.0; classes]));
            let params = model.rows.entry(*idx).or_insert_with(|| vec![0.0; classes]);
            self.update(params, g, &mut m, &mut v, lr_decoder);
            self.rows.insert(*idx, (m, v));
        }
        if let Some(d) = model.dense.as_mut() {
            let (mut m, mut v) = std::mem::take(&mut self.dense);
            self.update(&mut d.weights, &grad.dense, &mut m, &mut v, lr_decoder);
            self.dense = (m, v);
            if lr_repr > 0.0 {
                let (mut m, mut v) = std::mem::take(&mut self.proj);
                self.update(d.projection.weights_mut(), &grad.proj, &mut m, &mut v, lr_repr);
                self.proj = (m, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_normalizes() {
        let lp = log_softmax(&[1.0, 2.0, -3.0], None);
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let masked = log_softmax(&[1.0, 2.0, -3.0], Some(&[true, false, true]));
        assert_eq!(masked[1], f64::NEG_INFINITY);
        assert!((masked[0].exp() + masked[2].exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = LinearModel::new(4);
        let fv = FeatureVector::from_entries(vec![(3, 1.0), (9, 1.0)]);
        let lp = log_softmax(&m.logits(&fv, &[]), None);
        for l in lp {
            assert!((l - (0.25f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_gradient_matches_finite_differences() {
        // loss = -log softmax(logits)[gold]; check d loss / d projection numerically
        let proj = Projection::new(3, 2, vec![0.1, -0.2, 0.3, 0.05, 0.4, -0.1]).unwrap();
        let mut model = LinearModel::with_dense(3, proj, 1);
        model.dense.as_mut().unwrap().weights = vec![0.2, -0.3, 0.5, 0.1, -0.4, 0.25];
        let e = [0.7f32, -1.1, 0.4];
        let gold = 2;
        let loss = |m: &LinearModel| {
            let x = m.project_tokens(&[&e]);
            let lp = log_softmax(&m.logits(&FeatureVector::default(), &[Some((0, &x[0]))]), None);
            -lp[gold]
        };
        let x = model.project_tokens(&[&e]);
        let lp = log_softmax(&model.logits(&FeatureVector::default(), &[Some((0, &x[0]))]), None);
        let d: Vec<f64> = lp.iter().enumerate().map(|(c, l)| l.exp() - if c == gold { 1.0 } else { 0.0 }).collect();
        let mut g = Gradient::new(&model);
        g.begin_sentence(&model, 1);
        g.add(&model, &FeatureVector::default(), &[Some((0, &x[0]))], &d);
        g.end_sentence(&model, &[&e]);
        for i in 0..6 {
            let h = 1e-3f32;
            let mut plus = model.clone();
            plus.dense.as_mut().unwrap().projection.weights_mut()[i] += h;
            let mut minus = model.clone();
            minus.dense.as_mut().unwrap().projection.weights_mut()[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * f64::from(h));
            assert!((numeric - f64::from(g.proj[i])).abs() < 1e-3, "{i}: {numeric} vs {}", g.proj[i]);
        }
    }
}
