#![allow(dead_code)]

use rand::Rng;

use olid_core::encoder::{
    run_encoder, AttentionMask, EncoderConfig, EncoderInput, ParameterSet, PositionScheme, QueryStream, TensorKind,
};
use olid_core::objectives::heads::lm_logits;
use olid_core::seed;
use olid_core::tokenizer::{TokenSequence, CLS};

/// 1 layer, hidden 8, 2 heads, three ordinary tokens (ids 4..=6), no dropout.
pub fn tiny_config(scheme: PositionScheme, num_classes: usize, head_hidden: usize) -> EncoderConfig {
    EncoderConfig {
        layers: 1,
        hidden: 8,
        heads: 2,
        ffn_mult: 2,
        max_len: 4,
        vocab_size: 7,
        position_scheme: scheme,
        dropout_rate: 0.0,
        seed: 17,
        num_classes,
        head_hidden,
    }
}

/// Parameters with every tensor (biases and norm parameters included) set to
/// non-trivial random values, so no gradient path is degenerate.
pub fn random_params(cfg: &EncoderConfig, s: u64) -> ParameterSet {
    let mut p = ParameterSet::init(cfg).unwrap();
    let mut rng = seed::rng(s);
    for t in p.layout.tensors.clone() {
        for v in &mut p.values[t.span.range()] {
            *v = match t.kind {
                TensorKind::NormGain => 1.0 + rng.gen_range(-0.3..0.3),
                _ => rng.gen_range(-0.6..0.6),
            };
        }
    }
    p
}

/// Central differences `(f(θ+h·e_i) − f(θ−h·e_i)) / 2h` for every coordinate.
pub fn numeric_gradient(p: &ParameterSet, h: f64, f: impl Fn(&ParameterSet) -> f64) -> Vec<f64> {
    let mut q = p.clone();
    (0..p.values.len())
        .map(|i| {
            let orig = q.values[i];
            q.values[i] = orig + h;
            let plus = f(&q);
            q.values[i] = orig - h;
            let minus = f(&q);
            q.values[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|, floor)` with its flat index.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> (f64, usize) {
    analytic
        .iter()
        .zip(numeric)
        .enumerate()
        .map(|(i, (a, n))| ((a - n).abs() / a.abs().max(n.abs()).max(floor), i))
        .fold((0.0, 0), |best, cur| if cur.0 > best.0 { cur } else { best })
}

pub const GRAD_H: f64 = 1e-4;
/// Denominator floor. Some gradients are exactly zero (the attention key bias
/// shifts a whole score row, which softmax ignores), where the central
/// difference returns pure roundoff of order |loss|·ε/h ≈ 1e-11.
pub const GRAD_FLOOR: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;

/// Worst relative error of `analytic` against central differences, with a
/// description of where it occurs.
pub fn gradient_error(p: &ParameterSet, loss: impl Fn(&ParameterSet) -> f64, analytic: &[f64]) -> (f64, String) {
    let numeric = numeric_gradient(p, GRAD_H, loss);
    let (err, i) = max_relative_error(analytic, &numeric, GRAD_FLOOR);
    let (t, off) = p.layout.locate(i).unwrap();
    (err, format!("{}[{off}] analytic {} numeric {}", t.name, analytic[i], numeric[i]))
}

pub fn log_prob(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::MIN, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    logits[target] - max - z.ln()
}

/// `log P(x_target | x_context)` from a forward pass that only contains CLS and
/// the context tokens (at their original positions). Context tokens see CLS,
/// earlier context and themselves; the query for `target` sees all of them.
pub fn truncated_conditional(p: &ParameterSet, seq: &TokenSequence, context: &[usize], target: usize) -> f64 {
    let n = context.len() + 1;
    let ids: Vec<u32> = std::iter::once(CLS).chain(context.iter().map(|&c| seq.ids[c])).collect();
    let positions: Vec<usize> = std::iter::once(0).chain(context.iter().copied()).collect();
    let mut mask = vec![false; n * n];
    mask[0] = true;
    for r in 1..n {
        for c in 0..=r {
            mask[r * n + c] = true;
        }
    }
    let query_mask = vec![true; n];
    let input = EncoderInput {
        ids: &ids,
        positions: &positions,
        mask: &mask,
        query: Some(QueryStream { positions: &[target], mask: &query_mask }),
    };
    let trace = run_encoder(p, &input, None).unwrap();
    let row = trace.query.as_ref().unwrap().row(0).to_vec();
    log_prob(&lm_logits(p, &row), seq.ids[target] as usize)
}

/// Σᵢ log P(x_{order[i]} | x_{order[<i]}), one truncated pass per step.
pub fn stepwise(p: &ParameterSet, seq: &TokenSequence, order: &[usize]) -> f64 {
    (0..order.len()).map(|i| truncated_conditional(p, seq, &order[..i], order[i])).sum()
}

/// Left-to-right LM likelihood with a standard causal mask.
pub fn causal_lm(p: &ParameterSet, seq: &TokenSequence) -> f64 {
    let mut total = 0.0;
    for t in 1..seq.true_len {
        let causal = AttentionMask::causal(t).prefix(t);
        let positions: Vec<usize> = (0..t).collect();
        let query_mask = vec![true; t];
        let input = EncoderInput {
            ids: &seq.ids[..t],
            positions: &positions,
            mask: &causal,
            query: Some(QueryStream { positions: &[t], mask: &query_mask }),
        };
        let trace = run_encoder(p, &input, None).unwrap();
        total += log_prob(&lm_logits(p, trace.query.as_ref().unwrap().row(0)), seq.ids[t] as usize);
    }
    total
}

pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}
