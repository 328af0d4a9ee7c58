use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use olid_core::commands::{
    cmd_evaluate, cmd_predict, cmd_preprocess, cmd_resample_stats, cmd_train, cmd_vocab, format_resample_stats,
    CONFIG_FILE,
};
use olid_core::config::{Overrides, RunConfig};
use olid_core::corpus::{Level, ResampleMode};
use olid_core::encoder::{Pooling, PositionScheme};
use olid_core::training::ObjectiveKind;
use olid_core::{Error, Result};

#[derive(Parser)]
#[command(name = "olid", version, about = "Hierarchical offensive-language detection on OLID-format tweets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    level: Option<Level>,
    /// Class resampling: over | under | none.
    #[arg(long)]
    mode: Option<ResampleMode>,
    #[arg(long)]
    pooling: Option<Pooling>,
    #[arg(long)]
    positions: Option<PositionScheme>,
    #[arg(long)]
    objective: Option<ObjectiveKind>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            level: self.level,
            resample: self.mode,
            pooling: self.pooling,
            positions: self.positions,
            objective: self.objective,
        });
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Clean the tweet column of an OLID TSV.
    Preprocess {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build a vocabulary file from the cleaned tweets of an OLID TSV.
    Vocab {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train one stage model.
    Train {
        /// Training TSV (overrides data.train).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Test TSV (overrides data.test).
        #[arg(long)]
        test: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on a labeled TSV.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Vocabulary file; defaults to vocab.txt beside the checkpoint.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the A → B → C cascade.
    Predict {
        #[arg(long)]
        model_a: PathBuf,
        #[arg(long)]
        model_b: PathBuf,
        #[arg(long)]
        model_c: PathBuf,
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Class distribution before and after resampling.
    ResampleStats {
        input: PathBuf,
        /// Write the resampled records here.
        #[arg(long)]
        export: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess { input, output, common } => {
            let cfg = common.run_config()?;
            let n = cmd_preprocess(&input, &output, cfg.preprocess)?;
            eprintln!("wrote {n} rows to {}", output.display());
        }
        Command::Vocab { input, output, common } => {
            let cfg = common.run_config()?;
            let n = cmd_vocab(&input, &output, &cfg)?;
            eprintln!("wrote {n} entries to {}", output.display());
        }
        Command::Train { train, test, common } => {
            let mut cfg = common.run_config()?;
            if train.is_some() {
                cfg.data.train = train;
            }
            if test.is_some() {
                cfg.data.test = test;
            }
            let s = cmd_train(&cfg)?;
            println!(
                "level {}: best epoch {} (validation loss {:.6}); vocabulary {}; fit {} / valid {}",
                cfg.level, s.best_epoch, s.best_valid_loss, s.vocab_size, s.fit_size, s.valid_size
            );
            println!("outputs in {} (effective config: {CONFIG_FILE})", s.out_dir.display());
        }
        Command::Evaluate { checkpoint, vocab, test, common } => {
            let out_dir = common
                .out_dir
                .clone()
                .unwrap_or_else(|| checkpoint.parent().map_or_else(|| PathBuf::from("."), |p| p.to_path_buf()));
            let (_, _, table) = cmd_evaluate(&checkpoint, vocab.as_deref(), &test, common.level, &out_dir)?;
            print!("{table}");
        }
        Command::Predict { model_a, model_b, model_c, input, output, .. } => {
            let preds = cmd_predict([&model_a, &model_b, &model_c], &input, &output)?;
            eprintln!("wrote {} predictions to {}", preds.len(), output.display());
        }
        Command::ResampleStats { input, export, common } => {
            let cfg = common.run_config()?;
            let (before, after) = cmd_resample_stats(&input, cfg.level, cfg.resample, cfg.seed, export.as_deref())?;
            print!("{}", format_resample_stats(&before, &after));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::exit_code(&e) as u8)
        }
    }
}
