//! Masked language modeling: corrupt 15% of the tokens and predict them from a
//! single bidirectional pass. Predictions at the masked positions are
//! conditionally independent given the corrupted input.

use rand::seq::index::sample;

use super::heads::{lm_backward, lm_logits, log_softmax, softmax};
use super::{token_positions, ObjectiveError};
use crate::encoder::{backward, run_sequence, Dropout, ParameterSet};
use crate::seed;
use crate::tensor::Mat;
use crate::tokenizer::TokenSequence;

pub const MASK_FRACTION: f64 = 0.15;

/// A corrupted sequence together with what was hidden.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlmBatch {
    pub corrupted: TokenSequence,
    /// Masked positions, ascending.
    pub positions: Vec<usize>,
    /// Original ids at `positions`.
    pub targets: Vec<u32>,
}

/// `max(1, round(0.15 · n))`.
pub fn mask_count(n: usize) -> usize {
    ((MASK_FRACTION * n as f64).round() as usize).max(1)
}

/// Picks `mask_count(n)` of the `n` non-special positions uniformly without
/// replacement and replaces them with `mask_id`.
pub fn mlm_corrupt(seq: &TokenSequence, mask_id: u32, seed: u64) -> Result<MlmBatch, ObjectiveError> {
    let candidates = token_positions(seq);
    if candidates.is_empty() {
        return Err(ObjectiveError::NoTokens);
    }
    let count = mask_count(candidates.len());
    let mut rng = seed::rng(seed::mix(seed, seed::stream::MLM));
    let mut positions: Vec<usize> =
        sample(&mut rng, candidates.len(), count).into_iter().map(|i| candidates[i]).collect();
    positions.sort_unstable();
    let mut corrupted = seq.clone();
    let targets = positions.iter().map(|&p| std::mem::replace(&mut corrupted.ids[p], mask_id)).collect();
    Ok(MlmBatch { corrupted, positions, targets })
}

/// Mean cross-entropy over the masked positions. With `grads`, accumulates
/// `weight · ∂loss/∂θ`.
pub fn mlm_example(
    p: &ParameterSet,
    batch: &MlmBatch,
    dropout: Option<&mut Dropout>,
    grads: Option<(&mut [f64], f64)>,
) -> Result<f64, ObjectiveError> {
    if batch.positions.is_empty() {
        return Err(ObjectiveError::NoTokens);
    }
    let trace = run_sequence(p, &batch.corrupted, None, dropout)?;
    let k = batch.positions.len() as f64;
    let mut loss = 0.0;
    let mut d_logits_all = Vec::new();
    for (&pos, &target) in batch.positions.iter().zip(&batch.targets) {
        if target as usize >= p.config.vocab_size {
            return Err(ObjectiveError::Shape(format!("target id {target} outside the LM vocabulary")));
        }
        let logits = lm_logits(p, trace.content.row(pos));
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFinite("masked-LM logits"));
        }
        loss -= log_softmax(&logits)[target as usize];
        if let Some((_, weight)) = grads.as_ref() {
            let mut d = softmax(&logits);
            d[target as usize] -= 1.0;
            d.iter_mut().for_each(|v| *v *= weight / k);
            d_logits_all.push(d);
        }
    }
    if let Some((grads, _)) = grads {
        let n = trace.content.rows;
        let mut dh = Mat::zeros(n, p.config.hidden);
        for (&pos, d) in batch.positions.iter().zip(&d_logits_all) {
            let drow = lm_backward(p, trace.content.row(pos), d, grads);
            for (a, b) in dh.row_mut(pos).iter_mut().zip(&drow) {
                *a += b;
            }
        }
        backward(p, &trace, &dh, None, grads);
    }
    Ok(loss / k)
}

/// Mean cross-entropy over the masked positions of one corrupted sequence.
pub fn mlm_loss(p: &ParameterSet, batch: &MlmBatch) -> Result<f64, ObjectiveError> {
    mlm_example(p, batch, None, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_count_law() {
        assert_eq!(mask_count(20), 3);
        assert_eq!(mask_count(2), 1);
        assert_eq!(mask_count(1), 1);
        assert_eq!(mask_count(10), 2);
        assert_eq!(mask_count(100), 15);
    }

    #[test]
    fn corrupt_is_seeded_and_counts() {
        let ids: Vec<u32> = std::iter::once(2).chain(5..25).collect();
        let seq = TokenSequence::from_ids(&ids, 30);
        let a = mlm_corrupt(&seq, 99, 7).unwrap();
        assert_eq!(a.positions.len(), 3);
        assert_eq!(a, mlm_corrupt(&seq, 99, 7).unwrap());
        for (&p, &t) in a.positions.iter().zip(&a.targets) {
            assert_eq!(a.corrupted.ids[p], 99);
            assert_eq!(seq.ids[p], t);
            assert!(p >= 1);
        }
        let two = TokenSequence::from_ids(&[2, 5, 6], 5);
        assert_eq!(mlm_corrupt(&two, 99, 1).unwrap().positions.len(), 1);
        let none = TokenSequence::from_ids(&[2], 5);
        assert!(matches!(mlm_corrupt(&none, 99, 1), Err(ObjectiveError::NoTokens)));
    }
}
