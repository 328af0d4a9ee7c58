//! Permutation language modeling.
//!
//! A sampled order `z` over the token positions factorizes the likelihood as
//! `Σ_i log P(x_{z_i} | x_{z_<i})`. All conditionals come out of one pass:
//! the content stream lets `z_i` see CLS, `z_<i` and itself, and the query
//! stream row for `z_i` (which starts from the `[MASK]` embedding at that
//! position) sees CLS and `z_<i` only, so the token being predicted is never
//! visible to its own prediction.

use std::collections::HashSet;

use rand::seq::SliceRandom;

use super::heads::{lm_backward, lm_logits, log_softmax, softmax};
use super::{token_positions, ObjectiveError};
use crate::encoder::{backward, run_encoder, AttentionMask, Dropout, EncoderInput, ParameterSet, QueryStream};
use crate::seed;
use crate::tensor::Mat;
use crate::tokenizer::TokenSequence;

/// An ordering of distinct token positions (CLS excluded).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self, ObjectiveError> {
        let mut seen = HashSet::new();
        for &p in &order {
            if p == 0 {
                return Err(ObjectiveError::InvalidPermutation("position 0 is reserved for CLS".into()));
            }
            if !seen.insert(p) {
                return Err(ObjectiveError::InvalidPermutation(format!("duplicate position {p}")));
            }
        }
        Ok(Permutation { order })
    }

    /// Positions `1..=n` in order.
    pub fn identity(n: usize) -> Self {
        Permutation { order: (1..=n).collect() }
    }

    /// Uniformly shuffled token positions of `seq`.
    pub fn sample(seq: &TokenSequence, seed: u64) -> Self {
        let mut order = token_positions(seq);
        order.shuffle(&mut seed::rng(seed::mix(seed, seed::stream::PERMUTATION)));
        Permutation { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// How many trailing permutation positions are predicted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KPredict {
    /// `max(1, round(n / 6))`.
    Auto,
    Fixed(usize),
}

impl KPredict {
    pub fn from_option(k: Option<usize>) -> Self {
        k.map_or(KPredict::Auto, KPredict::Fixed)
    }

    pub fn resolve(self, n: usize) -> Result<usize, ObjectiveError> {
        let k = match self {
            KPredict::Auto => ((n as f64 / 6.0).round() as usize).max(1),
            KPredict::Fixed(k) => k,
        };
        if k == 0 || k > n {
            return Err(ObjectiveError::KPredict { k, tokens: n });
        }
        Ok(k)
    }
}

/// Query-stream mask: `perm[i]` may attend to CLS and `perm[0..i]`; CLS
/// attends to itself; every other row is empty.
pub fn build_permutation_mask(perm: &Permutation, max_len: usize) -> Result<AttentionMask, ObjectiveError> {
    let mut mask = AttentionMask::none(max_len);
    mask.set(0, 0, true);
    for (i, &row) in perm.order.iter().enumerate() {
        if row >= max_len {
            return Err(ObjectiveError::InvalidPermutation(format!("position {row} exceeds max_len {max_len}")));
        }
        mask.set(row, 0, true);
        for &col in &perm.order[..i] {
            mask.set(row, col, true);
        }
    }
    Ok(mask)
}

/// Content-stream mask: the permutation mask plus each position seeing itself.
fn content_mask(perm: &Permutation, n: usize) -> Result<Vec<bool>, ObjectiveError> {
    let mut mask = build_permutation_mask(perm, n)?;
    for i in 0..n {
        mask.set(i, i, true);
    }
    Ok(mask.prefix(n))
}

fn check_cover(seq: &TokenSequence, perm: &Permutation) -> Result<(), ObjectiveError> {
    let mut expected = token_positions(seq);
    let mut got = perm.order.clone();
    expected.sort_unstable();
    got.sort_unstable();
    if expected != got {
        return Err(ObjectiveError::InvalidPermutation(
            "permutation must cover exactly the sequence's token positions".into(),
        ));
    }
    Ok(())
}

/// Sum of `log P(x_t | x_{perm before t})` over the last `k` positions of the
/// permutation, from one two-stream pass. With `grads`, accumulates
/// `scale · ∂(−sum)/∂θ`.
pub fn permuted_log_likelihood(
    p: &ParameterSet,
    seq: &TokenSequence,
    perm: &Permutation,
    k: usize,
    dropout: Option<&mut Dropout>,
    grads: Option<(&mut [f64], f64)>,
) -> Result<f64, ObjectiveError> {
    check_cover(seq, perm)?;
    if k == 0 || k > perm.len() {
        return Err(ObjectiveError::KPredict { k, tokens: perm.len() });
    }
    let n = seq.true_len;
    let vocab = p.config.vocab_size;
    let targets = &perm.order[perm.len() - k..];
    let query_full = build_permutation_mask(perm, n)?;
    let query_mask: Vec<bool> =
        targets.iter().flat_map(|&t| (0..n).map(move |j| (t, j))).map(|(t, j)| query_full.allows(t, j)).collect();
    let cmask = content_mask(perm, n)?;
    let positions: Vec<usize> = (0..n).collect();
    let input = EncoderInput {
        ids: seq.active(),
        positions: &positions,
        mask: &cmask,
        query: Some(QueryStream { positions: targets, mask: &query_mask }),
    };
    let trace = run_encoder(p, &input, dropout)?;
    let g = trace.query.as_ref().expect("query stream requested");

    let mut total = 0.0;
    let mut d_query = grads.as_ref().map(|_| Mat::zeros(k, p.config.hidden));
    let mut lm_grads: Vec<(usize, Vec<f64>)> = Vec::new();
    for (t, &pos) in targets.iter().enumerate() {
        let target = seq.ids[pos] as usize;
        if target >= vocab {
            return Err(ObjectiveError::Shape(format!("target id {target} outside the LM vocabulary")));
        }
        let logits = lm_logits(p, g.row(t));
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFinite("permutation-LM logits"));
        }
        total += log_softmax(&logits)[target];
        if let Some((_, scale)) = grads.as_ref() {
            let mut d = softmax(&logits);
            d[target] -= 1.0;
            d.iter_mut().for_each(|v| *v *= scale);
            lm_grads.push((t, d));
        }
    }
    if let Some((grads, _)) = grads {
        let dq = d_query.as_mut().expect("allocated with grads");
        for (t, d) in &lm_grads {
            let drow = lm_backward(p, g.row(*t), d, grads);
            dq.row_mut(*t).copy_from_slice(&drow);
        }
        let dh = Mat::zeros(n, p.config.hidden);
        backward(p, &trace, &dh, Some(dq), grads);
    }
    Ok(total)
}

/// `Σ_i log P(x_{perm[i]} | x_{perm[0..i]})` over the whole permutation.
pub fn sequence_log_likelihood(
    p: &ParameterSet,
    seq: &TokenSequence,
    perm: &Permutation,
) -> Result<f64, ObjectiveError> {
    permuted_log_likelihood(p, seq, perm, perm.len(), None, None)
}

/// Per-sequence loss: mean negative log-likelihood of the last `k` tokens of
/// `perm`, accumulating its gradient times `weight` when `grads` is given.
pub fn plm_example(
    p: &ParameterSet,
    seq: &TokenSequence,
    perm: &Permutation,
    k: usize,
    dropout: Option<&mut Dropout>,
    grads: Option<(&mut [f64], f64)>,
) -> Result<f64, ObjectiveError> {
    let grads = grads.map(|(g, w)| (g, w / k as f64));
    Ok(-permuted_log_likelihood(p, seq, perm, k, dropout, grads)? / k as f64)
}

/// Samples one permutation per sequence (sequence `j` uses stream `j` of
/// `seed`) and returns the mean per-sequence loss.
pub fn plm_loss(
    p: &ParameterSet,
    batch: &[TokenSequence],
    k_predict: KPredict,
    seed: u64,
) -> Result<f64, ObjectiveError> {
    if batch.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let mut total = 0.0;
    for (j, seq) in batch.iter().enumerate() {
        let perm = Permutation::sample(seq, seed::mix(seed, j as u64));
        let k = k_predict.resolve(perm.len())?;
        total += plm_example(p, seq, &perm, k, None, None)?;
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_mask_is_strictly_causal() {
        let m = build_permutation_mask(&Permutation::identity(3), 5).unwrap();
        for i in 1..=3 {
            for j in 0..5 {
                assert_eq!(m.allows(i, j), j < i, "row {i} col {j}");
            }
        }
        assert!(m.allows(0, 0));
        assert!(!m.allows(4, 0));
    }

    #[test]
    fn unrolled_permutation_mask() {
        let m = build_permutation_mask(&Permutation::new(vec![3, 1, 2]).unwrap(), 4).unwrap();
        let row = |i: usize| (0..4).filter(|&j| m.allows(i, j)).collect::<Vec<_>>();
        assert_eq!(row(3), vec![0]);
        assert_eq!(row(1), vec![0, 3]);
        assert_eq!(row(2), vec![0, 1, 3]);
    }

    #[test]
    fn reversed_mask_is_anti_causal() {
        let m = build_permutation_mask(&Permutation::new(vec![3, 2, 1]).unwrap(), 4).unwrap();
        for i in 1..=3 {
            for j in 1..4 {
                assert_eq!(m.allows(i, j), j > i);
            }
        }
    }

    #[test]
    fn duplicates_are_rejected() {
        assert!(matches!(Permutation::new(vec![1, 2, 1]), Err(ObjectiveError::InvalidPermutation(_))));
        assert!(Permutation::new(vec![0, 1]).is_err());
    }

    #[test]
    fn k_predict_resolution() {
        assert_eq!(KPredict::Auto.resolve(12).unwrap(), 2);
        assert_eq!(KPredict::Auto.resolve(2).unwrap(), 1);
        assert_eq!(KPredict::Fixed(3).resolve(3).unwrap(), 3);
        assert!(matches!(KPredict::Fixed(4).resolve(3), Err(ObjectiveError::KPredict { .. })));
    }

    #[test]
    fn sampled_permutations_are_seeded() {
        let seq = TokenSequence::from_ids(&[2, 5, 6, 7, 8, 9], 8);
        let a = Permutation::sample(&seq, 3);
        assert_eq!(a, Permutation::sample(&seq, 3));
        let mut sorted = a.order().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 3, 4, 5]);
    }
}
