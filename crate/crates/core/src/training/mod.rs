//! Batch gradients, AdamW, the fit loop with best-epoch selection, and checkpoints.

mod checkpoint;
mod optim;

use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointMeta, MAGIC, VERSION};
pub use optim::{adamw_update, AdamW, OptimizerState};

use crate::encoder::{Dropout, EncoderError, ParameterSet, Pooling};
use crate::objectives::{
    classification_loss, mlm_corrupt, mlm_example, plm_example, token_positions, KPredict, ObjectiveError, Permutation,
};
use crate::parallel::{self, Execution};
use crate::seed;
use crate::tokenizer::TokenSequence;

/// Examples per work unit in [`gradients`]. Fixed so that the reduction order,
/// and hence every bit of the result, does not depend on the thread count.
pub const GRAD_CHUNK: usize = 4;

pub const DESK_LEARNING_RATE: f64 = 1e-3;
pub const XLNET_LEARNING_RATE: f64 = 2e-5;
pub const BERT_LEARNING_RATE: f64 = 5e-5;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("non-finite gradient at flat index {index} ({tensor})")]
    NonFiniteGradient { index: usize, tensor: String },
    #[error("non-finite parameter after update at flat index {index}")]
    NonFiniteUpdate { index: usize },
    #[error("validation loss is {loss} after epoch {epoch}; aborting")]
    NonFiniteValidation { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated while reading {what} at byte {offset}")]
    Truncated { what: &'static str, offset: usize },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("vocabulary hash {found} does not match the checkpoint's {expected}")]
    VocabHashMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainingError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Classification,
    Mlm,
    Plm,
}

impl FromStr for ObjectiveKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classification" => Ok(ObjectiveKind::Classification),
            "mlm" => Ok(ObjectiveKind::Mlm),
            "plm" => Ok(ObjectiveKind::Plm),
            o => Err(format!("unknown objective `{o}` (expected classification, mlm or plm)")),
        }
    }
}

/// A loss with its settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Classification(Pooling),
    Mlm,
    Plm(KPredict),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub betas: (f64, f64),
    pub epsilon: f64,
    pub seed: u64,
    pub objective: ObjectiveKind,
    pub pooling: Pooling,
    /// Tokens predicted per sequence under `plm`; `None` means `max(1, round(n/6))`.
    pub k_predict: Option<usize>,
    /// Language-model epochs run before classification fine-tuning when the
    /// objective is `mlm` or `plm`.
    pub pretrain_epochs: usize,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            learning_rate: DESK_LEARNING_RATE,
            weight_decay: 0.01,
            batch_size: 32,
            max_epochs: 3,
            betas: (0.9, 0.999),
            epsilon: 1e-8,
            seed: 0,
            objective: ObjectiveKind::Classification,
            pooling: Pooling::Cls,
            k_predict: None,
            pretrain_epochs: 1,
            execution: Execution::Parallel,
        }
    }

    /// XLNet-style fine-tuning preset (mean pooling).
    pub fn xlnet() -> Self {
        TrainConfig { learning_rate: XLNET_LEARNING_RATE, pooling: Pooling::Mean, ..Self::desk() }
    }

    /// BERT-style fine-tuning preset (CLS pooling).
    pub fn bert() -> Self {
        TrainConfig { learning_rate: BERT_LEARNING_RATE, pooling: Pooling::Cls, ..Self::desk() }
    }

    /// Range checks on everything except `max_epochs`.
    pub fn validate_hyperparameters(&self) -> Result<()> {
        let bad = |m: String| Err(TrainingError::InvalidConfig(m));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be finite and non-negative, got {}", self.weight_decay));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.k_predict == Some(0) {
            return bad("k_predict must be at least 1".into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_hyperparameters()?;
        if !(1..=10).contains(&self.max_epochs) {
            return Err(TrainingError::InvalidConfig(format!(
                "max_epochs must lie in 1..=10, got {}",
                self.max_epochs
            )));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamW {
        AdamW {
            lr: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.betas.0,
            beta2: self.betas.1,
            epsilon: self.epsilon,
        }
    }

    pub fn k_predict(&self) -> KPredict {
        KPredict::from_option(self.k_predict)
    }

    /// The configured objective; `Mlm`/`Plm` here describe the pretraining phase.
    pub fn objective(&self) -> Objective {
        match self.objective {
            ObjectiveKind::Classification => Objective::Classification(self.pooling),
            ObjectiveKind::Mlm => Objective::Mlm,
            ObjectiveKind::Plm => Objective::Plm(self.k_predict()),
        }
    }
}

/// One encoded tweet and its class index (ignored by language-model objectives).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub seq: TokenSequence,
    pub label: usize,
}

/// Mean loss and `∂(mean loss)/∂θ` over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradient {
    pub loss: f64,
    pub grads: Vec<f64>,
    /// Examples that contributed (language-model objectives skip sequences with no tokens).
    pub count: usize,
}

fn usable(example: &Example, objective: Objective) -> bool {
    match objective {
        Objective::Classification(_) => true,
        Objective::Mlm | Objective::Plm(_) => !token_positions(&example.seq).is_empty(),
    }
}

/// Loss of one example; example `j` of a batch draws all its randomness from
/// `mix(batch_seed, j)`.
fn example_loss(
    p: &ParameterSet,
    ex: &Example,
    objective: Objective,
    ex_seed: u64,
    train: bool,
    grads: Option<(&mut [f64], f64)>,
) -> Result<f64> {
    let mut dropout = (train && p.config.dropout_rate > 0.0)
        .then(|| Dropout::new(p.config.dropout_rate, seed::mix(ex_seed, seed::stream::DROPOUT)));
    let loss = match objective {
        Objective::Classification(pooling) => {
            classification_loss(p, &ex.seq, ex.label, pooling, dropout.as_mut(), grads)?.loss
        }
        Objective::Mlm => {
            let batch = mlm_corrupt(&ex.seq, p.config.mask_id(), ex_seed)?;
            mlm_example(p, &batch, dropout.as_mut(), grads)?
        }
        Objective::Plm(k_predict) => {
            let perm = Permutation::sample(&ex.seq, ex_seed);
            let k = k_predict.resolve(perm.len())?;
            plm_example(p, &ex.seq, &perm, k, dropout.as_mut(), grads)?
        }
    };
    if !loss.is_finite() {
        return Err(ObjectiveError::NonFinite("loss").into());
    }
    Ok(loss)
}

fn batch_pass(
    p: &ParameterSet,
    batch: &[Example],
    objective: Objective,
    batch_seed: u64,
    train: bool,
    want_grads: bool,
    exec: Execution,
) -> Result<BatchGradient> {
    let count = batch.iter().filter(|e| usable(e, objective)).count();
    if count == 0 {
        return Err(TrainingError::EmptySet("batch"));
    }
    let weight = 1.0 / count as f64;
    let partials = parallel::map_chunks(batch, GRAD_CHUNK, exec, |start, chunk| -> Result<(f64, Vec<f64>)> {
        let mut grads = if want_grads { p.zeros_like() } else { Vec::new() };
        let mut loss = 0.0;
        for (i, ex) in chunk.iter().enumerate() {
            if !usable(ex, objective) {
                continue;
            }
            let ex_seed = seed::mix(batch_seed, (start + i) as u64);
            let g = want_grads.then_some((grads.as_mut_slice(), weight));
            loss += example_loss(p, ex, objective, ex_seed, train, g)?;
        }
        Ok((loss, grads))
    });
    let mut loss = 0.0;
    let mut grads = if want_grads { p.zeros_like() } else { Vec::new() };
    for part in partials {
        let (l, g) = part?;
        loss += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += b;
        }
    }
    if let Some(index) = grads.iter().position(|v| !v.is_finite()) {
        let tensor = p.layout.locate(index).map_or_else(|| "?".to_string(), |(t, _)| t.name.clone());
        return Err(TrainingError::NonFiniteGradient { index, tensor });
    }
    Ok(BatchGradient { loss: loss * weight, grads, count })
}

/// Mean loss over `batch` and its analytic gradient. Dropout is applied when
/// `train` is set. Sequential and parallel execution give identical bits.
pub fn gradients(
    p: &ParameterSet,
    batch: &[Example],
    objective: Objective,
    batch_seed: u64,
    train: bool,
    exec: Execution,
) -> Result<BatchGradient> {
    batch_pass(p, batch, objective, batch_seed, train, true, exec)
}

/// Mean loss over `examples` without dropout or gradients.
pub fn mean_loss(
    p: &ParameterSet,
    examples: &[Example],
    objective: Objective,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    Ok(batch_pass(p, examples, objective, seed, false, false, exec)?.loss)
}

/// AdamW step on a parameter set; biases and layer-norm parameters are not decayed.
pub fn adamw_step(
    params: &mut ParameterSet,
    grads: &[f64],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    let decay = params.layout.decay_mask();
    adamw_update(&mut params.values, grads, &decay, state, &config.adamw())
}

/// Optimizer loop over one objective, one epoch at a time.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub params: ParameterSet,
    pub state: OptimizerState,
    pub config: TrainConfig,
    pub objective: Objective,
    /// Epochs completed so far.
    pub epoch: usize,
    decay: Vec<bool>,
    /// Distinguishes the seed streams of successive training phases.
    phase: u64,
}

impl Trainer {
    pub fn new(params: ParameterSet, config: TrainConfig, objective: Objective) -> Result<Self> {
        config.validate_hyperparameters()?;
        let state = OptimizerState::new(params.len());
        let decay = params.layout.decay_mask();
        Ok(Trainer { params, state, config, objective, epoch: 0, decay, phase: 0 })
    }

    /// Uses an independent family of seed streams (e.g. for a fine-tuning
    /// phase that follows pretraining).
    pub fn with_phase(mut self, phase: u64) -> Self {
        self.phase = phase;
        self
    }

    fn phase_seed(&self, stream: u64) -> u64 {
        seed::mix(seed::mix(self.config.seed, self.phase), stream)
    }

    /// Shuffles `data` with the epoch's seed and takes one AdamW step per batch.
    /// Returns the example-weighted mean training loss.
    pub fn run_epoch(&mut self, data: &[Example]) -> Result<f64> {
        if data.is_empty() {
            return Err(TrainingError::EmptySet("fit"));
        }
        self.epoch += 1;
        let epoch = self.epoch as u64;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut seed::rng(seed::mix(self.phase_seed(seed::stream::SHUFFLE), epoch)));
        let epoch_seed = seed::mix(self.phase_seed(seed::stream::TRAIN), epoch);
        let hp = self.config.adamw();
        let (mut total, mut seen) = (0.0, 0usize);
        for (b, idx) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<Example> = idx.iter().map(|&i| data[i].clone()).collect();
            if !batch.iter().any(|e| usable(e, self.objective)) {
                continue;
            }
            let g = gradients(
                &self.params,
                &batch,
                self.objective,
                seed::mix(epoch_seed, b as u64),
                true,
                self.config.execution,
            )?;
            adamw_update(&mut self.params.values, &g.grads, &self.decay, &mut self.state, &hp)?;
            total += g.loss * g.count as f64;
            seen += g.count;
        }
        if seen == 0 {
            return Err(TrainingError::EmptySet("usable fit"));
        }
        Ok(total / seen as f64)
    }

    /// Mean loss on `data` with fixed corruption seeds, so epochs are comparable.
    pub fn evaluate_loss(&self, data: &[Example]) -> Result<f64> {
        if data.is_empty() {
            return Err(TrainingError::EmptySet("validation"));
        }
        mean_loss(&self.params, data, self.objective, self.phase_seed(seed::stream::VALIDATION), self.config.execution)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters after the epoch with the lowest validation loss.
    pub params: ParameterSet,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub history: Vec<EpochRecord>,
}

/// Trains a fresh [`Trainer`] for `config.max_epochs` and keeps the epoch with
/// the lowest validation loss (ties go to the earlier epoch). One
/// `epoch<TAB>train_loss<TAB>valid_loss` line per epoch goes to `log`.
pub fn fit(
    params: ParameterSet,
    fit_set: &[Example],
    valid_set: &[Example],
    config: &TrainConfig,
    objective: Objective,
    log: Option<&mut dyn Write>,
) -> Result<FitOutcome> {
    fit_trainer(Trainer::new(params, config.clone(), objective)?, fit_set, valid_set, log)
}

pub fn fit_trainer(
    mut trainer: Trainer,
    fit_set: &[Example],
    valid_set: &[Example],
    mut log: Option<&mut dyn Write>,
) -> Result<FitOutcome> {
    trainer.config.validate()?;
    if fit_set.is_empty() {
        return Err(TrainingError::EmptySet("fit"));
    }
    if valid_set.is_empty() {
        return Err(TrainingError::EmptySet("validation"));
    }
    let mut best: Option<(usize, f64, ParameterSet)> = None;
    let mut history = Vec::new();
    for _ in 0..trainer.config.max_epochs {
        let train_loss = trainer.run_epoch(fit_set)?;
        let valid_loss = trainer.evaluate_loss(valid_set)?;
        let epoch = trainer.epoch;
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{epoch}\t{train_loss}\t{valid_loss}")?;
        }
        if !valid_loss.is_finite() {
            return Err(TrainingError::NonFiniteValidation { epoch, loss: valid_loss });
        }
        history.push(EpochRecord { epoch, train_loss, valid_loss });
        if best.as_ref().is_none_or(|(_, l, _)| valid_loss < *l) {
            best = Some((epoch, valid_loss, trainer.params.clone()));
        }
    }
    let (best_epoch, best_valid_loss, params) = best.expect("max_epochs >= 1");
    Ok(FitOutcome { params, best_epoch, best_valid_loss, history })
}
