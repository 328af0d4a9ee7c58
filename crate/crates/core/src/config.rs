//! Run configuration: one TOML file, overridable from the command line.
//!
//! ```toml
//! seed = 0
//! level = "A"
//! out_dir = "runs/a"
//! resample = "none"          # over | under | none
//!
//! [data]
//! train = "fixtures/train.tsv"
//! test = "fixtures/test.tsv"
//! split_mode = "file"        # file | ratio
//! split_ratio = 0.8
//! validation_fraction = 0.1
//!
//! [preprocess]
//! strip_entities = true
//! emoji = true
//! hashtags = true
//! normalize = true
//!
//! [tokenizer]
//! min_freq = 1
//! max_size = 30000
//! max_len = 150
//!
//! [model]
//! layers = 2
//! hidden = 64
//! heads = 4
//! ffn_mult = 4
//! position_scheme = "absolute"   # absolute | relative
//! dropout_rate = 0.1
//! head_hidden = 0
//!
//! [train]
//! learning_rate = 0.001
//! weight_decay = 0.01
//! batch_size = 32
//! max_epochs = 3
//! objective = "classification"   # classification | mlm | plm
//! pooling = "cls"                # cls | mean
//! ```
//!
//! Every randomized step derives its seed from the top-level `seed`;
//! `train.seed` is overwritten with the derived value.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Level, ResampleMode, SplitMode, SplitSpec};
use crate::encoder::{EncoderConfig, Pooling, PositionScheme};
use crate::error::{Error, Result};
use crate::preprocess::PreprocessOptions;
use crate::seed;
use crate::tokenizer::MAX_LEN;
use crate::training::{ObjectiveKind, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub split_mode: SplitMode,
    pub split_ratio: f64,
    /// Share of the (projected) training records held out for epoch selection.
    pub validation_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { train: None, test: None, split_mode: SplitMode::File, split_ratio: 0.8, validation_fraction: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub min_freq: usize,
    pub max_size: usize,
    pub max_len: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { min_freq: 1, max_size: 30_000, max_len: MAX_LEN }
    }
}

/// Encoder shape; vocabulary size and class count come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub position_scheme: PositionScheme,
    pub dropout_rate: f64,
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = EncoderConfig::desk(0, 2);
        ModelConfig {
            layers: d.layers,
            hidden: d.hidden,
            heads: d.heads,
            ffn_mult: d.ffn_mult,
            position_scheme: d.position_scheme,
            dropout_rate: d.dropout_rate,
            head_hidden: d.head_hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub level: Level,
    pub out_dir: PathBuf,
    pub resample: ResampleMode,
    pub data: DataConfig,
    pub preprocess: PreprocessOptions,
    pub tokenizer: TokenizerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            level: Level::A,
            out_dir: PathBuf::from("out"),
            resample: ResampleMode::None,
            data: DataConfig::default(),
            preprocess: PreprocessOptions::default(),
            tokenizer: TokenizerConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::desk(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub level: Option<Level>,
    pub resample: Option<ResampleMode>,
    pub pooling: Option<Pooling>,
    pub positions: Option<PositionScheme>,
    pub objective: Option<ObjectiveKind>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(l) = o.level {
            self.level = l;
        }
        if let Some(m) = o.resample {
            self.resample = m;
        }
        if let Some(p) = o.pooling {
            self.train.pooling = p;
        }
        if let Some(p) = o.positions {
            self.model.position_scheme = p;
        }
        if let Some(k) = o.objective {
            self.train.objective = k;
        }
        self.train.seed = self.derived_seed(seed::stream::TRAIN);
    }

    pub fn derived_seed(&self, stream: u64) -> u64 {
        seed::mix(self.seed, stream)
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            mode: self.data.split_mode,
            ratio: self.data.split_ratio,
            seed: self.derived_seed(seed::stream::SPLIT),
        }
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        let m = &self.model;
        EncoderConfig {
            layers: m.layers,
            hidden: m.hidden,
            heads: m.heads,
            ffn_mult: m.ffn_mult,
            max_len: self.tokenizer.max_len,
            vocab_size,
            position_scheme: m.position_scheme,
            dropout_rate: m.dropout_rate,
            seed: self.derived_seed(seed::stream::INIT),
            num_classes: self.level.num_classes(),
            head_hidden: m.head_hidden,
        }
    }

    /// Re-checks every module-level constraint and that named files exist.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        for p in [&self.data.train, &self.data.test].into_iter().flatten() {
            if !p.exists() {
                return cfg(format!("data file {} does not exist", p.display()));
            }
        }
        self.split_spec().validate()?;
        let f = self.data.validation_fraction;
        if !(f > 0.0 && f < 1.0) {
            return cfg(format!("validation_fraction must lie strictly between 0 and 1, got {f}"));
        }
        let t = &self.tokenizer;
        if t.min_freq == 0 || t.max_size <= crate::tokenizer::NUM_SPECIALS || !(2..=MAX_LEN).contains(&t.max_len) {
            return cfg(format!("invalid tokenizer settings {t:?}"));
        }
        self.encoder_config(t.max_size).validate()?;
        self.train.validate()?;
        Ok(())
    }
}
