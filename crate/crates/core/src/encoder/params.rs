use std::fmt;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::seed;
use crate::tokenizer::{MAX_LEN, NUM_SPECIALS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionScheme {
    /// Learned `max_len × hidden` table added to token embeddings.
    Absolute,
    /// Learned per-layer, per-head bias indexed by key − query offset.
    Relative,
}

impl std::str::FromStr for PositionScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "absolute" => Ok(PositionScheme::Absolute),
            "relative" => Ok(PositionScheme::Relative),
            o => Err(format!("unknown position scheme `{o}` (expected absolute or relative)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub position_scheme: PositionScheme,
    pub dropout_rate: f64,
    pub seed: u64,
    /// Width of the classification head output (2 for levels A/B, 3 for C).
    pub num_classes: usize,
    /// Optional tanh hidden layer in the classification head; 0 disables it.
    #[serde(default)]
    pub head_hidden: usize,
}

impl EncoderConfig {
    /// CPU-sized defaults: 2 layers, 64 hidden units, 4 heads.
    pub fn desk(vocab_size: usize, num_classes: usize) -> Self {
        EncoderConfig {
            layers: 2,
            hidden: 64,
            heads: 4,
            ffn_mult: 4,
            max_len: MAX_LEN,
            vocab_size,
            position_scheme: PositionScheme::Absolute,
            dropout_rate: 0.1,
            seed: 0,
            num_classes,
            head_hidden: 0,
        }
    }

    /// The 12-layer/768/12-head base size. Expressible, not meant for CPU training.
    pub fn base(vocab_size: usize, num_classes: usize) -> Self {
        EncoderConfig { layers: 12, hidden: 768, heads: 12, ..Self::desk(vocab_size, num_classes) }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::Config(m));
        if self.layers < 1 {
            return bad("layers must be at least 1".into());
        }
        if self.heads == 0 || self.hidden == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("hidden ({}) must be divisible by heads ({})", self.hidden, self.heads));
        }
        if self.ffn_mult == 0 {
            return bad("ffn_mult must be at least 1".into());
        }
        if self.max_len < 2 || self.max_len > MAX_LEN {
            return bad(format!("max_len must lie in 2..={MAX_LEN}, got {}", self.max_len));
        }
        if self.vocab_size <= NUM_SPECIALS {
            return bad(format!("vocab_size must exceed {NUM_SPECIALS}"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.hidden * self.ffn_mult
    }

    /// Rows in the token embedding table: the vocabulary plus one `[MASK]` row.
    pub fn embedding_rows(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn mask_id(&self) -> u32 {
        self.vocab_size as u32
    }

    /// Number of distinct key − query offsets.
    pub fn relative_span(&self) -> usize {
        2 * self.max_len - 1
    }
}

/// A contiguous tensor inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Embedding,
    Bias,
    NormGain,
    NormBias,
}

impl TensorKind {
    /// Biases and layer-norm parameters are exempt from weight decay.
    pub fn decays(self) -> bool {
        matches!(self, TensorKind::Weight | TensorKind::Embedding)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub span: Span,
    pub kind: TensorKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpans {
    pub wq: Span,
    pub bq: Span,
    pub wk: Span,
    pub bk: Span,
    pub wv: Span,
    pub bv: Span,
    pub wo: Span,
    pub bo: Span,
    pub ln1_g: Span,
    pub ln1_b: Span,
    pub w1: Span,
    pub b1: Span,
    pub w2: Span,
    pub b2: Span,
    pub ln2_g: Span,
    pub ln2_b: Span,
    pub rel: Option<Span>,
}

/// Stable flat addressing of every trainable scalar.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub tok_emb: Span,
    pub pos_emb: Option<Span>,
    pub layers: Vec<LayerSpans>,
    pub head_hidden: Option<(Span, Span)>,
    pub head_w: Span,
    pub head_b: Span,
    pub lm_w: Span,
    pub lm_b: Span,
    pub tensors: Vec<TensorInfo>,
    pub total: usize,
}

struct Builder {
    offset: usize,
    tensors: Vec<TensorInfo>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, kind: TensorKind) -> Span {
        let span = Span { offset: self.offset, rows, cols };
        self.offset += span.len();
        self.tensors.push(TensorInfo { name, span, kind });
        span
    }
}

impl ParamLayout {
    pub fn new(cfg: &EncoderConfig) -> Self {
        use TensorKind::*;
        let d = cfg.hidden;
        let f = cfg.ffn_dim();
        let mut b = Builder { offset: 0, tensors: Vec::new() };
        let tok_emb = b.add("embeddings.token".into(), cfg.embedding_rows(), d, Embedding);
        let pos_emb = (cfg.position_scheme == PositionScheme::Absolute)
            .then(|| b.add("embeddings.position".into(), cfg.max_len, d, Embedding));
        let layers = (0..cfg.layers)
            .map(|l| {
                let mut t = |n: &str, r, c, k| b.add(format!("layer{l}.{n}"), r, c, k);
                LayerSpans {
                    wq: t("attn.wq", d, d, Weight),
                    bq: t("attn.bq", 1, d, Bias),
                    wk: t("attn.wk", d, d, Weight),
                    bk: t("attn.bk", 1, d, Bias),
                    wv: t("attn.wv", d, d, Weight),
                    bv: t("attn.bv", 1, d, Bias),
                    wo: t("attn.wo", d, d, Weight),
                    bo: t("attn.bo", 1, d, Bias),
                    ln1_g: t("ln1.gain", 1, d, NormGain),
                    ln1_b: t("ln1.bias", 1, d, NormBias),
                    w1: t("ffn.w1", d, f, Weight),
                    b1: t("ffn.b1", 1, f, Bias),
                    w2: t("ffn.w2", f, d, Weight),
                    b2: t("ffn.b2", 1, d, Bias),
                    ln2_g: t("ln2.gain", 1, d, NormGain),
                    ln2_b: t("ln2.bias", 1, d, NormBias),
                    rel: (cfg.position_scheme == PositionScheme::Relative)
                        .then(|| t("attn.relative_bias", cfg.heads, cfg.relative_span(), Embedding)),
                }
            })
            .collect();
        let (head_hidden, head_in) = if cfg.head_hidden > 0 {
            let w = b.add("head.hidden.w".into(), d, cfg.head_hidden, Weight);
            let bias = b.add("head.hidden.b".into(), 1, cfg.head_hidden, Bias);
            (Some((w, bias)), cfg.head_hidden)
        } else {
            (None, d)
        };
        let head_w = b.add("head.out.w".into(), head_in, cfg.num_classes, Weight);
        let head_b = b.add("head.out.b".into(), 1, cfg.num_classes, Bias);
        let lm_w = b.add("lm.w".into(), d, cfg.vocab_size, Weight);
        let lm_b = b.add("lm.b".into(), 1, cfg.vocab_size, Bias);
        ParamLayout {
            tok_emb,
            pos_emb,
            layers,
            head_hidden,
            head_w,
            head_b,
            lm_w,
            lm_b,
            total: b.offset,
            tensors: b.tensors,
        }
    }

    /// Per-scalar weight-decay flags in flat order.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for t in &self.tensors {
            mask[t.span.range()].fill(t.kind.decays());
        }
        mask
    }

    /// Tensor owning flat index `i`, plus the offset inside that tensor.
    pub fn locate(&self, i: usize) -> Option<(&TensorInfo, usize)> {
        self.tensors.iter().find(|t| t.span.range().contains(&i)).map(|t| (t, i - t.span.offset))
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Config, layout and the flat parameter vector.
#[derive(Clone, PartialEq)]
pub struct ParameterSet {
    pub config: EncoderConfig,
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

impl fmt::Debug for ParameterSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParameterSet").field("config", &self.config).field("len", &self.values.len()).finish()
    }
}

impl ParameterSet {
    /// Scaled-uniform weights (±√(6/(fan_in+fan_out))), zero biases, unit
    /// layer-norm gains. Deterministic in `config.seed`.
    pub fn init(config: &EncoderConfig) -> Result<Self, EncoderError> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        let mut values = vec![0.0; layout.total];
        let mut rng = seed::rng(seed::mix(config.seed, seed::stream::INIT));
        for t in &layout.tensors {
            let slot = &mut values[t.span.range()];
            match t.kind {
                TensorKind::Weight | TensorKind::Embedding => {
                    let limit = (6.0 / (t.span.rows + t.span.cols) as f64).sqrt();
                    for v in slot {
                        *v = rng.gen_range(-limit..limit);
                    }
                }
                TensorKind::NormGain => slot.fill(1.0),
                TensorKind::Bias | TensorKind::NormBias => slot.fill(0.0),
            }
        }
        Ok(ParameterSet { config: config.clone(), layout, values })
    }

    pub fn from_values(config: &EncoderConfig, values: Vec<f64>) -> Result<Self, EncoderError> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        if values.len() != layout.total {
            return Err(EncoderError::Shape(format!(
                "expected {} parameters for this config, got {}",
                layout.total,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EncoderError::Shape(format!("parameter {i} is not finite")));
        }
        Ok(ParameterSet { config: config.clone(), layout, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, span: Span) -> &[f64] {
        &self.values[span.range()]
    }

    pub fn slice_mut(&mut self, span: Span) -> &mut [f64] {
        &mut self.values[span.range()]
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.values.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EncoderConfig {
        EncoderConfig { hidden: 8, heads: 2, layers: 1, vocab_size: 10, ..EncoderConfig::desk(10, 2) }
    }

    #[test]
    fn init_is_deterministic_and_gains_are_one() {
        let a = ParameterSet::init(&tiny()).unwrap();
        let b = ParameterSet::init(&tiny()).unwrap();
        assert_eq!(a.values, b.values);
        let g = a.layout.layers[0].ln1_g;
        assert!(a.slice(g).iter().all(|&v| v == 1.0));
        assert!(a.slice(a.layout.layers[0].bq).iter().all(|&v| v == 0.0));
        let c = ParameterSet::init(&EncoderConfig { seed: 1, ..tiny() }).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn weights_respect_glorot_bound() {
        let p = ParameterSet::init(&tiny()).unwrap();
        let wq = p.layout.layers[0].wq;
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(p.slice(wq).iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn config_validation() {
        let bad = EncoderConfig { hidden: 8, heads: 3, ..tiny() };
        assert!(matches!(bad.validate(), Err(EncoderError::Config(_))));
        assert!(EncoderConfig { layers: 0, ..tiny() }.validate().is_err());
        assert!(EncoderConfig { dropout_rate: 1.0, ..tiny() }.validate().is_err());
        assert!(EncoderConfig { max_len: 151, ..tiny() }.validate().is_err());
        assert!(ParameterSet::init(&EncoderConfig { hidden: 8, heads: 3, ..tiny() }).is_err());
    }

    #[test]
    fn layout_is_contiguous_and_named() {
        let cfg = EncoderConfig { position_scheme: PositionScheme::Relative, head_hidden: 4, ..tiny() };
        let layout = ParamLayout::new(&cfg);
        let mut expected = 0;
        for t in &layout.tensors {
            assert_eq!(t.span.offset, expected);
            expected += t.span.len();
        }
        assert_eq!(expected, layout.total);
        assert!(layout.pos_emb.is_none());
        assert_eq!(layout.layers[0].rel.unwrap().cols, 299);
        assert_eq!(layout.locate(0).unwrap().0.name, "embeddings.token");
        let mask = layout.decay_mask();
        assert!(!mask[layout.layers[0].bq.offset]);
        assert!(mask[layout.layers[0].wq.offset]);
        assert!(!mask[layout.layers[0].ln2_g.offset]);
    }
}
