//! Classification and language-model output heads.

use super::ObjectiveError;
use crate::encoder::ParameterSet;
use crate::tensor::{dot, matmul, matmul_nt, matmul_tn_acc};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// `−ln p[gold]`.
pub fn cross_entropy(probs: &[f64], gold: usize) -> Result<f64, ObjectiveError> {
    let p = probs.get(gold).ok_or(ObjectiveError::ClassCount { expected: probs.len(), found: gold + 1 })?;
    Ok(-p.ln())
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub struct HeadCache {
    input: Vec<f64>,
    hidden: Option<Vec<f64>>,
}

/// Affine classification head, with an optional tanh hidden layer.
pub fn classify(p: &ParameterSet, pooled: &[f64]) -> Result<(Vec<f64>, HeadCache), ObjectiveError> {
    let d = p.config.hidden;
    if pooled.len() != d {
        return Err(ObjectiveError::Shape(format!("pooled vector has {} entries, expected {d}", pooled.len())));
    }
    let lay = &p.layout;
    let c = p.config.num_classes;
    let (features, hidden) = match lay.head_hidden {
        Some((w, b)) => {
            let hh = w.cols;
            let mut z = matmul(pooled, 1, d, p.slice(w), hh);
            for (zv, bv) in z.iter_mut().zip(p.slice(b)) {
                *zv = (*zv + bv).tanh();
            }
            (z.clone(), Some(z))
        }
        None => (pooled.to_vec(), None),
    };
    let width = features.len();
    let mut logits = matmul(&features, 1, width, p.slice(lay.head_w), c);
    for (l, b) in logits.iter_mut().zip(p.slice(lay.head_b)) {
        *l += b;
    }
    Ok((logits, HeadCache { input: pooled.to_vec(), hidden }))
}

pub fn classify_backward(p: &ParameterSet, cache: &HeadCache, d_logits: &[f64], grads: &mut [f64]) -> Vec<f64> {
    let lay = &p.layout;
    let d = p.config.hidden;
    let c = p.config.num_classes;
    let features = cache.hidden.as_deref().unwrap_or(&cache.input);
    let width = features.len();
    matmul_tn_acc(features, 1, width, d_logits, c, &mut grads[lay.head_w.range()]);
    for (g, v) in grads[lay.head_b.range()].iter_mut().zip(d_logits) {
        *g += v;
    }
    let d_features = matmul_nt(d_logits, 1, c, p.slice(lay.head_w), width);
    match (lay.head_hidden, &cache.hidden) {
        (Some((w, b)), Some(h)) => {
            let dz: Vec<f64> = d_features.iter().zip(h).map(|(g, t)| g * (1.0 - t * t)).collect();
            matmul_tn_acc(&cache.input, 1, d, &dz, w.cols, &mut grads[w.range()]);
            for (g, v) in grads[b.range()].iter_mut().zip(&dz) {
                *g += v;
            }
            matmul_nt(&dz, 1, w.cols, p.slice(w), d)
        }
        _ => d_features,
    }
}

/// Vocabulary logits for one hidden row.
pub fn lm_logits(p: &ParameterSet, row: &[f64]) -> Vec<f64> {
    let lay = &p.layout;
    let v = p.config.vocab_size;
    let d = p.config.hidden;
    let w = p.slice(lay.lm_w);
    let mut out: Vec<f64> = p.slice(lay.lm_b).to_vec();
    for (k, &x) in row.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(&w[k * v..(k + 1) * v]) {
            *o += x * wv;
        }
    }
    debug_assert_eq!(row.len(), d);
    out
}

pub fn lm_backward(p: &ParameterSet, row: &[f64], d_logits: &[f64], grads: &mut [f64]) -> Vec<f64> {
    let lay = &p.layout;
    let v = p.config.vocab_size;
    let d = p.config.hidden;
    matmul_tn_acc(row, 1, d, d_logits, v, &mut grads[lay.lm_w.range()]);
    for (g, x) in grads[lay.lm_b.range()].iter_mut().zip(d_logits) {
        *g += x;
    }
    let w = p.slice(lay.lm_w);
    (0..d).map(|k| dot(&w[k * v..(k + 1) * v], d_logits)).collect()
}
