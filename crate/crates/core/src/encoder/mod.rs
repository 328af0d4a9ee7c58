//! Miniature transformer encoder with hand-written backpropagation.
//!
//! Token embeddings (plus a learned absolute position table, in the absolute
//! scheme) feed `layers` post-norm blocks of multi-head attention, add & norm,
//! GELU feed-forward, add & norm. In the relative scheme each layer instead adds
//! a learned per-head bias, indexed by key − query offset, to the attention
//! scores.
//!
//! Only the unpadded prefix of a sequence is computed. Padded rows of
//! [`HiddenStates`] are zero and never reach a loss.
//!
//! For permutation-LM training a second "query" stream can run alongside the
//! content stream ([`QueryStream`]): its rows start from the `[MASK]` embedding
//! at the target position and attend to content-stream states only, so a
//! target's own token never reaches its prediction.

mod layer;
pub mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use layer::{gelu, gelu_grad, Dropout, LN_EPS};
pub use params::{EncoderConfig, LayerSpans, ParamLayout, ParameterSet, PositionScheme, Span, TensorInfo, TensorKind};

use crate::tensor::Mat;
use crate::tokenizer::TokenSequence;
use layer::{attention_context, attention_probs, layer_backward, layer_forward, LayerCache};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("token id {id} at position {position} is out of range (embedding rows: {rows})")]
    IdOutOfRange { id: u32, position: usize, rows: usize },
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },
    #[error("attention row {row} has every key masked")]
    AllMasked { row: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot pool a sequence with no unmasked positions")]
    EmptyPool,
}

pub type Result<T> = std::result::Result<T, EncoderError>;

/// Score added for a masked key in [`attention`]'s additive mask. Any entry at
/// or below this value (including `-inf`) gets exactly zero weight.
pub const MASKED: f64 = -1e9;

/// Square boolean attention mask; `allows(i, j)` means query `i` may attend to key `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn none(size: usize) -> Self {
        AttentionMask { size, allowed: vec![false; size * size] }
    }

    pub fn full(size: usize) -> Self {
        AttentionMask { size, allowed: vec![true; size * size] }
    }

    /// Query `i` sees keys `0..=i`.
    pub fn causal(size: usize) -> Self {
        let mut m = Self::none(size);
        for i in 0..size {
            for j in 0..=i {
                m.set(i, j, true);
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.size + j]
    }

    pub fn set(&mut self, i: usize, j: usize, allowed: bool) {
        self.allowed[i * self.size + j] = allowed;
    }

    /// Top-left `n×n` block, row-major.
    pub fn prefix(&self, n: usize) -> Vec<bool> {
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.allows(i, j)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Hidden state at position 0 (the CLS token).
    Cls,
    /// Average of the unmasked hidden states.
    Mean,
}

impl std::str::FromStr for Pooling {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cls" => Ok(Pooling::Cls),
            "mean" => Ok(Pooling::Mean),
            o => Err(format!("unknown pooling `{o}` (expected cls or mean)")),
        }
    }
}

/// Output of [`forward`]: `max_len × hidden`, padded rows zero.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStates {
    pub states: Mat,
    pub mask: Vec<u8>,
    pub true_len: usize,
}

pub struct AttentionOutput {
    /// Heads concatenated, before the output projection.
    pub context: Mat,
    /// One `m×n` probability matrix per head.
    pub probs: Vec<Mat>,
}

/// Multi-head scaled dot-product attention, `softmax(q·kᵀ/√d_head + mask)·v`
/// per head. The output projection is applied by the encoder layer.
pub fn attention(q: &Mat, k: &Mat, v: &Mat, additive_mask: &Mat, heads: usize) -> Result<AttentionOutput> {
    let (m, n, d) = (q.rows, k.rows, q.cols);
    if k.cols != d || v.cols != d || v.rows != n || heads == 0 || d % heads != 0 {
        return Err(EncoderError::Shape("q, k, v must share width divisible by heads".into()));
    }
    if additive_mask.rows != m || additive_mask.cols != n {
        return Err(EncoderError::Shape(format!("mask must be {m}x{n}")));
    }
    let allowed: Vec<bool> = additive_mask.data.iter().map(|&x| x > MASKED).collect();
    let probs = attention_probs(&q.data, &k.data, m, n, d, heads, &allowed, |_, i, j| additive_mask.get(i, j))?;
    let context = Mat::from_vec(m, d, attention_context(&probs, &v.data, m, n, d));
    Ok(AttentionOutput { context, probs: probs.into_iter().map(|p| Mat::from_vec(m, n, p)).collect() })
}

/// Query rows for the permutation-LM stream.
#[derive(Clone, Debug)]
pub struct QueryStream<'a> {
    pub positions: &'a [usize],
    /// `positions.len() × ids.len()` row-major; which content rows each query sees.
    pub mask: &'a [bool],
}

/// Low-level encoder input: `ids[i]` sits at absolute position `positions[i]`,
/// and `mask` (`n×n` row-major) says which content rows each row attends to.
#[derive(Clone, Debug)]
pub struct EncoderInput<'a> {
    pub ids: &'a [u32],
    pub positions: &'a [usize],
    pub mask: &'a [bool],
    pub query: Option<QueryStream<'a>>,
}

/// Activations kept for the backward pass.
pub struct EncoderTrace {
    pub content: Mat,
    pub query: Option<Mat>,
    content_layers: Vec<LayerCache>,
    query_layers: Vec<LayerCache>,
    ids: Vec<u32>,
    positions: Vec<usize>,
    query_positions: Vec<usize>,
}

impl EncoderTrace {
    /// Attention probabilities of content-stream layer `layer`, head `head` (`n×n`).
    pub fn content_attention(&self, layer: usize, head: usize) -> Mat {
        let n = self.ids.len();
        Mat::from_vec(n, n, self.content_layers[layer].probs[head].clone())
    }

    pub fn query_attention(&self, layer: usize, head: usize) -> Option<Mat> {
        let m = self.query_positions.len();
        let n = self.ids.len();
        self.query_layers.get(layer).map(|c| Mat::from_vec(m, n, c.probs[head].clone()))
    }
}

fn embed(p: &ParameterSet, id: u32, position: usize, out: &mut [f64]) {
    let d = p.config.hidden;
    let tok = p.slice(p.layout.tok_emb);
    out.copy_from_slice(&tok[id as usize * d..(id as usize + 1) * d]);
    if let Some(pos) = p.layout.pos_emb {
        let table = p.slice(pos);
        for (o, v) in out.iter_mut().zip(&table[position * d..(position + 1) * d]) {
            *o += v;
        }
    }
}

fn check_input(p: &ParameterSet, input: &EncoderInput<'_>) -> Result<()> {
    let n = input.ids.len();
    let rows = p.config.embedding_rows();
    if n == 0 || input.positions.len() != n || input.mask.len() != n * n {
        return Err(EncoderError::Shape("ids, positions and mask disagree".into()));
    }
    for (i, (&id, &pos)) in input.ids.iter().zip(input.positions).enumerate() {
        if id as usize >= rows {
            return Err(EncoderError::IdOutOfRange { id, position: i, rows });
        }
        if pos >= p.config.max_len {
            return Err(EncoderError::Shape(format!("position {pos} exceeds max_len")));
        }
    }
    if let Some(q) = &input.query {
        if q.mask.len() != q.positions.len() * n {
            return Err(EncoderError::Shape("query mask shape".into()));
        }
        if q.positions.iter().any(|&pos| pos >= p.config.max_len) {
            return Err(EncoderError::Shape("query position exceeds max_len".into()));
        }
    }
    Ok(())
}

/// Runs the encoder and keeps what [`backward`] needs.
pub fn run_encoder(
    p: &ParameterSet,
    input: &EncoderInput<'_>,
    mut dropout: Option<&mut Dropout>,
) -> Result<EncoderTrace> {
    check_input(p, input)?;
    let d = p.config.hidden;
    let n = input.ids.len();
    let mut h = vec![0.0; n * d];
    for i in 0..n {
        embed(p, input.ids[i], input.positions[i], &mut h[i * d..(i + 1) * d]);
    }
    let qpos: Vec<usize> = input.query.as_ref().map_or(Vec::new(), |q| q.positions.to_vec());
    let mut g = vec![0.0; qpos.len() * d];
    for (t, &pos) in qpos.iter().enumerate() {
        embed(p, p.config.mask_id(), pos, &mut g[t * d..(t + 1) * d]);
    }

    let mut content_layers = Vec::with_capacity(p.config.layers);
    let mut query_layers = Vec::new();
    for l in 0..p.config.layers {
        if let Some(q) = &input.query {
            let (g_next, cache) = layer_forward(p, l, &g, &h, q.mask, &qpos, input.positions, dropout.as_deref_mut())?;
            g = g_next;
            query_layers.push(cache);
        }
        let (h_next, cache) =
            layer_forward(p, l, &h, &h, input.mask, input.positions, input.positions, dropout.as_deref_mut())?;
        h = h_next;
        content_layers.push(cache);
    }
    Ok(EncoderTrace {
        content: Mat::from_vec(n, d, h),
        query: input.query.as_ref().map(|_| Mat::from_vec(qpos.len(), d, g)),
        content_layers,
        query_layers,
        ids: input.ids.to_vec(),
        positions: input.positions.to_vec(),
        query_positions: qpos,
    })
}

/// Backpropagates output gradients through the encoder into `grads`.
pub fn backward(p: &ParameterSet, trace: &EncoderTrace, d_content: &Mat, d_query: Option<&Mat>, grads: &mut [f64]) {
    let d = p.config.hidden;
    let mut dh = d_content.data.clone();
    let mut dg = match (d_query, trace.query.as_ref()) {
        (Some(dq), Some(_)) => dq.data.clone(),
        (None, Some(q)) => vec![0.0; q.data.len()],
        _ => Vec::new(),
    };
    for l in (0..p.config.layers).rev() {
        let (dq_c, dkv_c) = layer_backward(p, l, &trace.content_layers[l], &dh, grads);
        let mut dh_prev = dq_c;
        for (a, b) in dh_prev.iter_mut().zip(&dkv_c) {
            *a += b;
        }
        if let Some(qc) = trace.query_layers.get(l) {
            let (dg_prev, dkv_q) = layer_backward(p, l, qc, &dg, grads);
            for (a, b) in dh_prev.iter_mut().zip(&dkv_q) {
                *a += b;
            }
            dg = dg_prev;
        }
        dh = dh_prev;
    }
    let tok = p.layout.tok_emb;
    let pos = p.layout.pos_emb;
    let mut scatter = |id: u32, position: usize, grad: &[f64]| {
        let row = tok.offset + id as usize * d;
        for (g, v) in grads[row..row + d].iter_mut().zip(grad) {
            *g += v;
        }
        if let Some(pos) = pos {
            let row = pos.offset + position * d;
            for (g, v) in grads[row..row + d].iter_mut().zip(grad) {
                *g += v;
            }
        }
    };
    for (i, (&id, &position)) in trace.ids.iter().zip(&trace.positions).enumerate() {
        scatter(id, position, &dh[i * d..(i + 1) * d]);
    }
    for (t, &position) in trace.query_positions.iter().enumerate() {
        scatter(p.config.mask_id(), position, &dg[t * d..(t + 1) * d]);
    }
}

/// Content-stream forward pass over the unpadded prefix, positions `0..true_len`.
/// `attn_mask`, when given, is intersected with the padding mask.
pub fn run_sequence(
    p: &ParameterSet,
    seq: &TokenSequence,
    attn_mask: Option<&AttentionMask>,
    dropout: Option<&mut Dropout>,
) -> Result<EncoderTrace> {
    let n = seq.true_len;
    if n == 0 {
        return Err(EncoderError::EmptyPool);
    }
    let rows = p.config.embedding_rows();
    if let Some((i, &id)) = seq.ids.iter().enumerate().find(|(_, &id)| id as usize >= rows) {
        return Err(EncoderError::IdOutOfRange { id, position: i, rows });
    }
    if seq.max_len() > p.config.max_len {
        return Err(EncoderError::Shape(format!(
            "sequence length {} exceeds encoder max_len {}",
            seq.max_len(),
            p.config.max_len
        )));
    }
    let mask = match attn_mask {
        Some(m) => {
            if m.size() < n {
                return Err(EncoderError::Shape("attention mask smaller than sequence".into()));
            }
            m.prefix(n)
        }
        None => vec![true; n * n],
    };
    let positions: Vec<usize> = (0..n).collect();
    run_encoder(p, &EncoderInput { ids: seq.active(), positions: &positions, mask: &mask, query: None }, dropout)
}

/// Inference forward pass (dropout disabled).
pub fn forward(p: &ParameterSet, seq: &TokenSequence, attn_mask: Option<&AttentionMask>) -> Result<HiddenStates> {
    let trace = run_sequence(p, seq, attn_mask, None)?;
    let d = p.config.hidden;
    let mut states = Mat::zeros(seq.max_len(), d);
    states.data[..trace.content.data.len()].copy_from_slice(&trace.content.data);
    Ok(HiddenStates { states, mask: seq.mask.clone(), true_len: seq.true_len })
}

/// Pools the first `n` rows of `states`, all of which are treated as unmasked.
pub fn pool_rows(states: &Mat, n: usize, mode: Pooling) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(EncoderError::EmptyPool);
    }
    Ok(match mode {
        Pooling::Cls => states.row(0).to_vec(),
        Pooling::Mean => {
            let mut out = vec![0.0; states.cols];
            for i in 0..n {
                for (o, v) in out.iter_mut().zip(states.row(i)) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|v| *v /= n as f64);
            out
        }
    })
}

/// Gradient of [`pool_rows`] with respect to the `n` pooled rows.
pub fn pool_backward(d_pooled: &[f64], n: usize, mode: Pooling) -> Mat {
    let d = d_pooled.len();
    let mut out = Mat::zeros(n, d);
    match mode {
        Pooling::Cls => out.row_mut(0).copy_from_slice(d_pooled),
        Pooling::Mean => {
            for i in 0..n {
                for (o, g) in out.row_mut(i).iter_mut().zip(d_pooled) {
                    *o = g / n as f64;
                }
            }
        }
    }
    out
}

/// CLS: row 0. Mean: sum of unmasked rows divided by their count.
pub fn pool(hidden: &HiddenStates, mode: Pooling) -> Result<Vec<f64>> {
    let d = hidden.states.cols;
    let unmasked: Vec<usize> = (0..hidden.mask.len()).filter(|&i| hidden.mask[i] == 1).collect();
    if unmasked.is_empty() {
        return Err(EncoderError::EmptyPool);
    }
    Ok(match mode {
        Pooling::Cls => hidden.states.row(0).to_vec(),
        Pooling::Mean => {
            let mut out = vec![0.0; d];
            for &i in &unmasked {
                for (o, v) in out.iter_mut().zip(hidden.states.row(i)) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|v| *v /= unmasked.len() as f64);
            out
        }
    })
}
