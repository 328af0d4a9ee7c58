//! Training objectives, output heads and the hierarchical prediction cascade.

pub mod cascade;
pub mod heads;
pub mod mlm;
pub mod plm;

use thiserror::Error;

pub use cascade::{predict_hierarchy, write_predictions, HierarchicalPrediction, StageClassifier, StageModel};
pub use heads::{argmax, classify, cross_entropy, log_softmax, softmax};
pub use mlm::{mask_count, mlm_corrupt, mlm_example, mlm_loss, MlmBatch};
pub use plm::{build_permutation_mask, plm_example, plm_loss, sequence_log_likelihood, KPredict, Permutation};

use crate::encoder::{backward, pool_backward, pool_rows, run_sequence, Dropout, EncoderError, ParameterSet, Pooling};
use crate::tokenizer::{TokenSequence, CLS, PAD, SEP};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("sequence has no maskable tokens")]
    NoTokens,
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("head has {expected} classes but label index {found} was requested", found = .found - 1)]
    ClassCount { expected: usize, found: usize },
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("k_predict = {k} is invalid for a sequence with {tokens} tokens")]
    KPredict { k: usize, tokens: usize },
    #[error("stage {stage} is incompatible: {reason}")]
    Incompatible { stage: char, reason: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Positions `1..true_len` that hold ordinary tokens (CLS, SEP and PAD excluded).
pub fn token_positions(seq: &TokenSequence) -> Vec<usize> {
    (1..seq.true_len).filter(|&i| !matches!(seq.ids[i], PAD | CLS | SEP)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationOutput {
    pub loss: f64,
    pub probs: Vec<f64>,
}

/// Cross-entropy of the classification head on one sequence. With `grads`,
/// accumulates `weight · ∂loss/∂θ`.
pub fn classification_loss(
    p: &ParameterSet,
    seq: &TokenSequence,
    gold: usize,
    pooling: Pooling,
    dropout: Option<&mut Dropout>,
    grads: Option<(&mut [f64], f64)>,
) -> Result<ClassificationOutput, ObjectiveError> {
    let c = p.config.num_classes;
    if gold >= c {
        return Err(ObjectiveError::ClassCount { expected: c, found: gold + 1 });
    }
    let trace = run_sequence(p, seq, None, dropout)?;
    let n = trace.content.rows;
    let pooled = pool_rows(&trace.content, n, pooling)?;
    let (logits, cache) = classify(p, &pooled)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(ObjectiveError::NonFinite("classifier logits"));
    }
    let probs = softmax(&logits);
    let loss = -log_softmax(&logits)[gold];
    if let Some((grads, weight)) = grads {
        let mut d = probs.clone();
        d[gold] -= 1.0;
        d.iter_mut().for_each(|v| *v *= weight);
        let d_pooled = heads::classify_backward(p, &cache, &d, grads);
        let dh = pool_backward(&d_pooled, n, pooling);
        backward(p, &trace, &dh, None, grads);
    }
    Ok(ClassificationOutput { loss, probs })
}

/// Class probabilities for one sequence (no dropout).
pub fn predict_probs(p: &ParameterSet, seq: &TokenSequence, pooling: Pooling) -> Result<Vec<f64>, ObjectiveError> {
    let trace = run_sequence(p, seq, None, None)?;
    let pooled = pool_rows(&trace.content, trace.content.rows, pooling)?;
    let (logits, _) = classify(p, &pooled)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(ObjectiveError::NonFinite("classifier logits"));
    }
    Ok(softmax(&logits))
}
