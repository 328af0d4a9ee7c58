//! Library side of the `olid` subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::corpus::{
    class_counts, holdout_validation, project, read_olid_file, resample, split, write_olid, ClassDistribution,
    CorpusError, Level, ResampleMode, TweetRecord,
};
use crate::encoder::ParameterSet;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, ConfusionMatrix, MetricsReport};
use crate::objectives::{predict_hierarchy, write_predictions, HierarchicalPrediction, StageModel};
use crate::parallel::Execution;
use crate::preprocess::{EmojiTable, PreprocessOptions, Preprocessor};
use crate::seed;
use crate::tokenizer::{build_vocab, encode, Vocabulary};
use crate::training::{
    fit_trainer, Checkpoint, CheckpointMeta, Example, FitOutcome, Objective, ObjectiveKind, Trainer, TrainingError,
};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LOG_FILE: &str = "train.log";
pub const PRETRAIN_LOG_FILE: &str = "pretrain.log";
pub const CONFIG_FILE: &str = "config.toml";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn read_records(path: &Path) -> Result<Vec<TweetRecord>> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
    }
    Ok(read_olid_file(path)?)
}

fn preprocessor(options: PreprocessOptions) -> Preprocessor {
    Preprocessor::new(options, EmojiTable::bundled())
}

/// Rewrites the tweet column of an OLID TSV through the cleaning pipeline.
/// Returns the number of rows written.
pub fn cmd_preprocess(input: &Path, output: &Path, options: PreprocessOptions) -> Result<usize> {
    let records = read_records(input)?;
    let pre = preprocessor(options);
    let cleaned: Vec<TweetRecord> =
        records.into_iter().map(|r| TweetRecord { text: pre.preprocess(&r.text).text, ..r }).collect();
    let mut w = create(output)?;
    write_olid(&mut w, &cleaned)?;
    w.flush().map_err(|e| Error::io(output, e))?;
    Ok(cleaned.len())
}

/// Builds the vocabulary of the cleaned tweets in `input` and writes it to
/// `output`. Returns the vocabulary size, specials included.
pub fn cmd_vocab(input: &Path, output: &Path, config: &RunConfig) -> Result<usize> {
    let records = read_records(input)?;
    let pre = preprocessor(config.preprocess);
    let clean: Vec<String> = records.iter().map(|r| pre.preprocess(&r.text).text).collect();
    let vocab = build_vocab(&clean, config.tokenizer.min_freq, config.tokenizer.max_size)?;
    vocab.save(output)?;
    Ok(vocab.size())
}

/// Records ready for training at one level.
#[derive(Clone, Debug)]
pub struct PreparedData {
    /// Resampled fit set.
    pub fit: Vec<TweetRecord>,
    pub valid: Vec<TweetRecord>,
    pub test: Vec<TweetRecord>,
}

/// split → project → stratified validation holdout → resample the fit set.
pub fn prepare_data(config: &RunConfig) -> Result<PreparedData> {
    let train_path = config.data.train.as_ref().ok_or_else(|| Error::Config("data.train is not set".into()))?;
    let train = read_records(train_path)?;
    let test = config.data.test.as_ref().map(|p| read_records(p)).transpose()?;
    let (train, test) = split(&train, test.as_deref(), &config.split_spec())?;
    let level = config.level;
    let train = project(&train, level);
    if train.is_empty() {
        return Err(CorpusError::EmptyProjection(level).into());
    }
    let (fit, valid) =
        holdout_validation(&train, level, config.data.validation_fraction, config.derived_seed(seed::stream::HOLDOUT))?;
    let fit = resample(&fit, level, config.resample, config.derived_seed(seed::stream::RESAMPLE))?;
    Ok(PreparedData { fit, valid, test: project(&test, level) })
}

fn examples(
    records: &[TweetRecord],
    level: Level,
    pre: &Preprocessor,
    vocab: &Vocabulary,
    max_len: usize,
) -> Vec<Example> {
    records
        .iter()
        .map(|r| Example {
            seq: encode(&pre.preprocess(&r.text).text, vocab, max_len),
            label: r.label_at(level).expect("records are projected"),
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub vocab_size: usize,
    pub fit_size: usize,
    pub valid_size: usize,
}

/// corpus → preprocess → vocabulary → (optional LM pretraining) → fit.
/// Writes the checkpoint, vocabulary, training log and effective config.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate()?;
    let data = prepare_data(config)?;
    let pre = preprocessor(config.preprocess);
    let clean_fit: Vec<String> = data.fit.iter().map(|r| pre.preprocess(&r.text).text).collect();
    let vocab = build_vocab(&clean_fit, config.tokenizer.min_freq, config.tokenizer.max_size)?;

    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    config.save(&out.join(CONFIG_FILE))?;
    vocab.save(&out.join(VOCAB_FILE))?;

    let max_len = config.tokenizer.max_len;
    let fit_set = examples(&data.fit, config.level, &pre, &vocab, max_len);
    let valid_set = examples(&data.valid, config.level, &pre, &vocab, max_len);
    let mut params = ParameterSet::init(&config.encoder_config(vocab.size()))?;

    let train_cfg = &config.train;
    if train_cfg.objective != ObjectiveKind::Classification && train_cfg.pretrain_epochs > 0 {
        let mut trainer = Trainer::new(params, train_cfg.clone(), train_cfg.objective())?.with_phase(1);
        let mut log = create(&out.join(PRETRAIN_LOG_FILE))?;
        for _ in 0..train_cfg.pretrain_epochs {
            let train_loss = trainer.run_epoch(&fit_set)?;
            let valid_loss = trainer.evaluate_loss(&valid_set)?;
            writeln!(log, "{}\t{train_loss}\t{valid_loss}", trainer.epoch).map_err(TrainingError::from)?;
        }
        log.flush().map_err(TrainingError::from)?;
        params = trainer.params;
    }

    let trainer = Trainer::new(params, train_cfg.clone(), Objective::Classification(train_cfg.pooling))?.with_phase(2);
    let mut log = create(&out.join(LOG_FILE))?;
    let FitOutcome { params, best_epoch, best_valid_loss, .. } =
        fit_trainer(trainer, &fit_set, &valid_set, Some(&mut log))?;
    log.flush().map_err(TrainingError::from)?;

    let ckpt = Checkpoint {
        meta: CheckpointMeta {
            encoder: params.config.clone(),
            train: train_cfg.clone(),
            level: config.level,
            preprocess: config.preprocess,
            vocab_hash: vocab.hash(),
            best_epoch,
            valid_loss: best_valid_loss,
        },
        params,
    };
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    Ok(TrainSummary {
        out_dir: out.clone(),
        best_epoch,
        best_valid_loss,
        vocab_size: vocab.size(),
        fit_size: fit_set.len(),
        valid_size: valid_set.len(),
    })
}

/// Loads a checkpoint with its vocabulary (default: `vocab.txt` beside it).
pub fn load_stage(checkpoint: &Path, vocab: Option<&Path>) -> Result<StageModel> {
    let vocab_path = match vocab {
        Some(v) => v.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join(VOCAB_FILE),
    };
    let vocab = Vocabulary::load(&vocab_path)?;
    let ckpt = Checkpoint::load(checkpoint, Some(&vocab))?;
    Ok(StageModel {
        level: ckpt.meta.level,
        pooling: ckpt.meta.train.pooling,
        max_len: ckpt.meta.encoder.max_len,
        preprocessor: preprocessor(ckpt.meta.preprocess),
        params: ckpt.params,
        vocab,
    })
}

/// Evaluates a checkpoint on a test file and writes `report.tsv` and
/// `report.json` into `out_dir`. Returns the report and the printed table.
pub fn cmd_evaluate(
    checkpoint: &Path,
    vocab: Option<&Path>,
    test: &Path,
    level: Option<Level>,
    out_dir: &Path,
) -> Result<(MetricsReport, ConfusionMatrix, String)> {
    let model = load_stage(checkpoint, vocab)?;
    if let Some(l) = level {
        if l != model.level {
            return Err(Error::Usage(format!("checkpoint was trained for level {}, not {l}", model.level)));
        }
    }
    let records = read_records(test)?;
    let (report, cm) = evaluate_model(&model, &records, model.level, Execution::Parallel)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let tsv = out_dir.join("report.tsv");
    std::fs::write(&tsv, report.to_tsv()).map_err(|e| Error::io(&tsv, e))?;
    let json = out_dir.join("report.json");
    std::fs::write(&json, report.to_json(&cm)).map_err(|e| Error::io(&json, e))?;
    let table = report.to_table(&format!("Subtask {}", model.level));
    Ok((report, cm, table))
}

/// Runs the A → B → C cascade over every row of `input` and writes the
/// prediction TSV. Labels in the input are ignored.
pub fn cmd_predict(stages: [&Path; 3], input: &Path, output: &Path) -> Result<Vec<HierarchicalPrediction>> {
    let [a, b, c] = stages.map(|p| load_stage(p, None));
    let (a, b, c) = (a?, b?, c?);
    let records = read_records(input)?;
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let preds = predict_hierarchy(&texts, &a, &b, &c, Execution::Parallel)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let mut w = create(output)?;
    write_predictions(&mut w, &ids, &preds).map_err(|e| Error::io(output, e))?;
    w.flush().map_err(|e| Error::io(output, e))?;
    Ok(preds)
}

/// Class distribution before and after resampling; optionally exports the
/// resampled records.
pub fn cmd_resample_stats(
    input: &Path,
    level: Level,
    mode: ResampleMode,
    seed: u64,
    export: Option<&Path>,
) -> Result<(ClassDistribution, ClassDistribution)> {
    let records = project(&read_records(input)?, level);
    let before = class_counts(&records, level);
    let resampled = resample(&records, level, mode, seed)?;
    let after = class_counts(&resampled, level);
    if let Some(path) = export {
        let mut w = create(path)?;
        write_olid(&mut w, &resampled)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok((before, after))
}

/// `NAME before→after` lines.
pub fn format_resample_stats(before: &ClassDistribution, after: &ClassDistribution) -> String {
    before.iter().zip(after.iter()).map(|((name, b), (_, a))| format!("{name} {b}→{a}\n")).collect()
}
