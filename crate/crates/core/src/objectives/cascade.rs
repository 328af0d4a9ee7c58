//! Three-stage hierarchical prediction: A on every tweet, B where A = OFF,
//! C where B = TIN.

use std::io::Write;

use super::heads::argmax;
use super::{predict_probs, ObjectiveError};
use crate::corpus::{LabelA, LabelB, LabelC, Level};
use crate::encoder::{ParameterSet, Pooling};
use crate::parallel::{self, Execution};
use crate::preprocess::Preprocessor;
use crate::tokenizer::{encode, Vocabulary};

pub const PREDICTION_HEADER: &str = "id\tlabel_a\tlabel_b\tlabel_c\tp_a\tp_b\tp_c";

/// Labels for one tweet with the winning probability of each stage that ran.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalPrediction {
    pub a: LabelA,
    pub b: Option<LabelB>,
    pub c: Option<LabelC>,
    pub p_a: f64,
    pub p_b: Option<f64>,
    pub p_c: Option<f64>,
}

impl HierarchicalPrediction {
    /// `b` present iff `a = OFF`, `c` present iff `b = TIN`.
    pub fn is_consistent(&self) -> bool {
        (self.b.is_some() == (self.a == LabelA::Off))
            && (self.c.is_some() == (self.b == Some(LabelB::Tin)))
            && (self.p_b.is_some() == self.b.is_some())
            && (self.p_c.is_some() == self.c.is_some())
    }
}

/// A per-level classifier over raw tweet text.
pub trait StageClassifier: Sync {
    fn level(&self) -> Level;
    fn class_probs(&self, text: &str) -> Result<Vec<f64>, ObjectiveError>;
}

/// A trained stage: parameters plus the text pipeline it was trained with.
#[derive(Clone, Debug)]
pub struct StageModel {
    pub level: Level,
    pub params: ParameterSet,
    pub vocab: Vocabulary,
    pub preprocessor: Preprocessor,
    pub pooling: Pooling,
    pub max_len: usize,
}

impl StageClassifier for StageModel {
    fn level(&self) -> Level {
        self.level
    }

    fn class_probs(&self, text: &str) -> Result<Vec<f64>, ObjectiveError> {
        let clean = self.preprocessor.preprocess(text);
        let seq = encode(&clean.text, &self.vocab, self.max_len);
        predict_probs(&self.params, &seq, self.pooling)
    }
}

fn stage_probs(stage: &dyn StageClassifier, text: &str) -> Result<(usize, f64), ObjectiveError> {
    let probs = stage.class_probs(text)?;
    let expected = stage.level().num_classes();
    if probs.len() != expected {
        return Err(ObjectiveError::ClassCount { expected, found: probs.len() });
    }
    let k = argmax(&probs);
    Ok((k, probs[k]))
}

fn check_stage(stage: &dyn StageClassifier, level: Level) -> Result<(), ObjectiveError> {
    if stage.level() != level {
        return Err(ObjectiveError::Incompatible {
            stage: level.to_string().chars().next().unwrap_or('?'),
            reason: format!("model was trained for level {}", stage.level()),
        });
    }
    Ok(())
}

/// Runs the cascade on one text.
pub fn predict_one(
    text: &str,
    a: &dyn StageClassifier,
    b: &dyn StageClassifier,
    c: &dyn StageClassifier,
) -> Result<HierarchicalPrediction, ObjectiveError> {
    let (ka, p_a) = stage_probs(a, text)?;
    let a_label = LabelA::from_index(ka).expect("two classes at level A");
    let mut out = HierarchicalPrediction { a: a_label, b: None, c: None, p_a, p_b: None, p_c: None };
    if a_label == LabelA::Off {
        let (kb, p_b) = stage_probs(b, text)?;
        let b_label = LabelB::from_index(kb).expect("two classes at level B");
        out.b = Some(b_label);
        out.p_b = Some(p_b);
        if b_label == LabelB::Tin {
            let (kc, p_c) = stage_probs(c, text)?;
            out.c = Some(LabelC::from_index(kc).expect("three classes at level C"));
            out.p_c = Some(p_c);
        }
    }
    Ok(out)
}

/// Cascade over many texts; output order matches input order.
pub fn predict_hierarchy<S: AsRef<str> + Sync>(
    texts: &[S],
    a: &dyn StageClassifier,
    b: &dyn StageClassifier,
    c: &dyn StageClassifier,
    exec: Execution,
) -> Result<Vec<HierarchicalPrediction>, ObjectiveError> {
    check_stage(a, Level::A)?;
    check_stage(b, Level::B)?;
    check_stage(c, Level::C)?;
    parallel::map(texts, exec, |t| predict_one(t.as_ref(), a, b, c)).into_iter().collect()
}

/// Writes the prediction TSV; absent stages are `NULL`.
pub fn write_predictions<W: Write>(mut w: W, ids: &[String], preds: &[HierarchicalPrediction]) -> std::io::Result<()> {
    writeln!(w, "{PREDICTION_HEADER}")?;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "NULL".to_string());
    for (id, p) in ids.iter().zip(preds) {
        writeln!(
            w,
            "{id}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.a,
            opt(p.b.map(|x| x.to_string())),
            opt(p.c.map(|x| x.to_string())),
            p.p_a,
            opt(p.p_b.map(|x| x.to_string())),
            opt(p.p_c.map(|x| x.to_string())),
        )?;
    }
    Ok(())
}
