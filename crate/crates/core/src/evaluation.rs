//! Confusion matrices, per-class precision/recall/F1, accuracy and macro-F1.
//!
//! Degenerate ratios follow the 0/0 → 0 convention, so a class that is never
//! predicted and never gold scores P = R = F1 = 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{project, Level, TweetRecord};
use crate::objectives::{argmax, ObjectiveError, StageClassifier};
use crate::parallel::{self, Execution};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("{preds} predictions but {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("label `{0}` is not one of the evaluated classes")]
    UnknownLabel(String),
    #[error("no test records carry a label at level {0}")]
    EmptyProjection(Level),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

pub type Result<T> = std::result::Result<T, EvaluationError>;

/// `counts[gold][pred]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes.len()).map(|k| self.counts[k][k]).sum()
    }

    /// One-vs-rest (TP, FP, FN) for class `k`.
    pub fn one_vs_rest(&self, k: usize) -> (usize, usize, usize) {
        let tp = self.counts[k][k];
        let predicted: usize = self.counts.iter().map(|row| row[k]).sum();
        let gold: usize = self.counts[k].iter().sum();
        (tp, predicted - tp, gold - tp)
    }
}

/// Confusion matrix over class indices `0..num_classes`.
pub fn confusion_indices(preds: &[usize], golds: &[usize], classes: &[&str]) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(EvaluationError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    if preds.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let n = classes.len();
    let mut counts = vec![vec![0; n]; n];
    for (&p, &g) in preds.iter().zip(golds) {
        for x in [p, g] {
            if x >= n {
                return Err(EvaluationError::UnknownLabel(x.to_string()));
            }
        }
        counts[g][p] += 1;
    }
    Ok(ConfusionMatrix { classes: classes.iter().map(|s| s.to_string()).collect(), counts })
}

/// Confusion matrix over label names.
pub fn confusion<S: AsRef<str>>(preds: &[S], golds: &[S], classes: &[&str]) -> Result<ConfusionMatrix> {
    let index = |s: &S| {
        classes
            .iter()
            .position(|c| *c == s.as_ref())
            .ok_or_else(|| EvaluationError::UnknownLabel(s.as_ref().to_string()))
    };
    if preds.len() != golds.len() {
        return Err(EvaluationError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    let p = preds.iter().map(index).collect::<Result<Vec<_>>>()?;
    let g = golds.iter().map(index).collect::<Result<Vec<_>>>()?;
    confusion_indices(&p, &g, classes)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
    /// Micro-averaged P/R/F1 over all classes (each equals accuracy for
    /// single-label data).
    pub all: ClassMetrics,
    pub accuracy: f64,
    pub macro_f1: f64,
}

pub fn class_metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let mut classes = Vec::with_capacity(cm.classes.len());
    let (mut tp_sum, mut fp_sum, mut fn_sum) = (0, 0, 0);
    for (k, name) in cm.classes.iter().enumerate() {
        let (tp, fp, fn_) = cm.one_vs_rest(k);
        tp_sum += tp;
        fp_sum += fp;
        fn_sum += fn_;
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let recall = ratio(tp as f64, (tp + fn_) as f64);
        classes.push(ClassMetrics {
            class: name.clone(),
            precision,
            recall,
            f1: ratio(2.0 * tp as f64, (2 * tp + fp + fn_) as f64),
            support: tp + fn_,
        });
    }
    let micro_p = ratio(tp_sum as f64, (tp_sum + fp_sum) as f64);
    let micro_r = ratio(tp_sum as f64, (tp_sum + fn_sum) as f64);
    let all = ClassMetrics {
        class: "ALL".into(),
        precision: micro_p,
        recall: micro_r,
        f1: ratio(2.0 * tp_sum as f64, (2 * tp_sum + fp_sum + fn_sum) as f64),
        support: cm.total(),
    };
    let f1s: Vec<f64> = classes.iter().map(|c| c.f1).collect();
    MetricsReport { macro_f1: macro_f1_of(&f1s), accuracy: ratio(cm.trace() as f64, cm.total() as f64), classes, all }
}

/// Unweighted mean of per-class F1 scores.
pub fn macro_f1_of(f1s: &[f64]) -> f64 {
    if f1s.is_empty() {
        return 0.0;
    }
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

pub fn macro_f1(report: &MetricsReport) -> f64 {
    macro_f1_of(&report.classes.iter().map(|c| c.f1).collect::<Vec<_>>())
}

/// Metrics for predicted vs. gold class indices at `level`.
pub fn evaluate(preds: &[usize], golds: &[usize], level: Level) -> Result<(MetricsReport, ConfusionMatrix)> {
    let cm = confusion_indices(preds, golds, level.class_names())?;
    Ok((class_metrics(&cm), cm))
}

/// Runs `model` on the records that carry a label at `level`.
pub fn evaluate_model(
    model: &dyn StageClassifier,
    records: &[TweetRecord],
    level: Level,
    exec: Execution,
) -> Result<(MetricsReport, ConfusionMatrix)> {
    let projected = project(records, level);
    if projected.is_empty() {
        return Err(EvaluationError::EmptyProjection(level));
    }
    let preds = parallel::map(&projected, exec, |r| model.class_probs(&r.text).map(|p| argmax(&p)))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let golds: Vec<usize> = projected.iter().map(|r| r.label_at(level).expect("projected")).collect();
    evaluate(&preds, &golds, level)
}

impl MetricsReport {
    fn rows(&self) -> impl Iterator<Item = &ClassMetrics> {
        self.classes.iter().chain(std::iter::once(&self.all))
    }

    /// Full-precision TSV: one row per class, then ALL, then accuracy and macro-F1.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("class\tprecision\trecall\tf1\tsupport\n");
        for r in self.rows() {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.class, r.precision, r.recall, r.f1, r.support);
        }
        let _ = writeln!(s, "accuracy\t{}", self.accuracy);
        let _ = writeln!(s, "macro_f1\t{}", self.macro_f1);
        s
    }

    /// Two-decimal table in the layout of published result tables.
    pub fn to_table(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title}");
        let _ = writeln!(s, "{:<6} {:>9} {:>6} {:>6}", "", "Precision", "Recall", "F1");
        for r in self.rows() {
            let _ = writeln!(s, "{:<6} {:>9.2} {:>6.2} {:>6.2}", r.class, r.precision, r.recall, r.f1);
        }
        let _ = writeln!(s, "Accuracy {:.2}", self.accuracy);
        let _ = writeln!(s, "MacroF {:.2}", self.macro_f1);
        s
    }

    pub fn to_json(&self, cm: &ConfusionMatrix) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            report: &'a MetricsReport,
            confusion: &'a ConfusionMatrix,
        }
        serde_json::to_string_pretty(&Out { report: self, confusion: cm }).expect("report serializes")
    }
}
