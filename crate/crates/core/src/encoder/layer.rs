//! One post-norm transformer block in cross-attention form: queries come from
//! `xq` (m rows), keys and values from `xkv` (n rows). Ordinary self-attention
//! passes the same rows twice; the permutation-LM query stream passes its own
//! rows as `xq` and the content stream as `xkv`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erf;

use super::params::ParameterSet;
use super::EncoderError;
use crate::seed;
use crate::tensor::{add_row_bias, col_sum_acc, matmul, matmul_nt, matmul_tn_acc};

pub const LN_EPS: f64 = 1e-12;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x / SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Inverted dropout. Masks hold 0 or `1/(1−rate)`.
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Dropout { rate, rng: seed::rng(seed) }
    }

    fn mask(&mut self, len: usize) -> Option<Vec<f64>> {
        if self.rate <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        Some((0..len).map(|_| if self.rng.gen::<f64>() < self.rate { 0.0 } else { keep }).collect())
    }
}

pub(crate) struct LnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

pub(crate) fn layer_norm(x: &[f64], d: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, LnCache) {
    let rows = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = is;
        for c in 0..d {
            let h = (row[c] - mean) * is;
            xhat[r * d + c] = h;
            y[r * d + c] = gain[c] * h + bias[c];
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    dy: &[f64],
    cache: &LnCache,
    d: usize,
    gain: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let rows = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        for c in 0..d {
            dgain[c] += dyr[c] * xh[c];
            dbias[c] += dyr[c];
            dxhat[c] = dyr[c] * gain[c];
        }
        let sum: f64 = dxhat.iter().sum();
        let sum_xh: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
        let scale = cache.inv_std[r] / d as f64;
        for c in 0..d {
            dx[r * d + c] = scale * (d as f64 * dxhat[c] - sum - xh[c] * sum_xh);
        }
    }
    dx
}

/// Per-head attention probabilities (each `m×n`, row-major). `allowed[i*n+j]`
/// gates key `j` for query `i`; `bias(h, i, j)` is added to the scaled score.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_probs(
    q: &[f64],
    k: &[f64],
    m: usize,
    n: usize,
    d: usize,
    heads: usize,
    allowed: &[bool],
    bias: impl Fn(usize, usize, usize) -> f64,
) -> Result<Vec<Vec<f64>>, EncoderError> {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    for i in 0..m {
        if !allowed[i * n..(i + 1) * n].iter().any(|&a| a) {
            return Err(EncoderError::AllMasked { row: i });
        }
    }
    let mut out = Vec::with_capacity(heads);
    for h in 0..heads {
        let mut p = vec![0.0; m * n];
        for i in 0..m {
            let qi = &q[i * d + h * dh..i * d + (h + 1) * dh];
            let row = &mut p[i * n..(i + 1) * n];
            let mut max = f64::NEG_INFINITY;
            for j in 0..n {
                if allowed[i * n + j] {
                    let kj = &k[j * d + h * dh..j * d + (h + 1) * dh];
                    let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale + bias(h, i, j);
                    row[j] = s;
                    max = max.max(s);
                }
            }
            let mut z = 0.0;
            for j in 0..n {
                if allowed[i * n + j] {
                    let e = (row[j] - max).exp();
                    row[j] = e;
                    z += e;
                } else {
                    row[j] = 0.0;
                }
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// `context[:, head h] = P_h · V[:, head h]`, heads concatenated.
pub(crate) fn attention_context(probs: &[Vec<f64>], v: &[f64], m: usize, n: usize, d: usize) -> Vec<f64> {
    let heads = probs.len();
    let dh = d / heads;
    let mut ctx = vec![0.0; m * d];
    for (h, p) in probs.iter().enumerate() {
        for i in 0..m {
            let out = &mut ctx[i * d + h * dh..i * d + (h + 1) * dh];
            for j in 0..n {
                let w = p[i * n + j];
                if w == 0.0 {
                    continue;
                }
                for (o, vv) in out.iter_mut().zip(&v[j * d + h * dh..j * d + (h + 1) * dh]) {
                    *o += w * vv;
                }
            }
        }
    }
    ctx
}

pub(crate) struct LayerCache {
    xq: Vec<f64>,
    xkv: Vec<f64>,
    m: usize,
    n: usize,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    pub(crate) probs: Vec<Vec<f64>>,
    ctx: Vec<f64>,
    drop1: Option<Vec<f64>>,
    ln1: LnCache,
    y1: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    drop2: Option<Vec<f64>>,
    ln2: LnCache,
    q_pos: Vec<usize>,
    k_pos: Vec<usize>,
}

fn rel_index(max_len: usize, q_pos: usize, k_pos: usize) -> usize {
    k_pos + max_len - 1 - q_pos
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_forward(
    p: &ParameterSet,
    l: usize,
    xq: &[f64],
    xkv: &[f64],
    allowed: &[bool],
    q_pos: &[usize],
    k_pos: &[usize],
    mut dropout: Option<&mut Dropout>,
) -> Result<(Vec<f64>, LayerCache), EncoderError> {
    let cfg = &p.config;
    let s = &p.layout.layers[l];
    let d = cfg.hidden;
    let f = cfg.ffn_dim();
    let m = q_pos.len();
    let n = k_pos.len();

    let mut q = matmul(xq, m, d, p.slice(s.wq), d);
    add_row_bias(&mut q, d, p.slice(s.bq));
    let mut k = matmul(xkv, n, d, p.slice(s.wk), d);
    add_row_bias(&mut k, d, p.slice(s.bk));
    let mut v = matmul(xkv, n, d, p.slice(s.wv), d);
    add_row_bias(&mut v, d, p.slice(s.bv));

    let rel = s.rel.map(|span| p.slice(span));
    let span = cfg.relative_span();
    let probs = attention_probs(&q, &k, m, n, d, cfg.heads, allowed, |h, i, j| match rel {
        Some(r) => r[h * span + rel_index(cfg.max_len, q_pos[i], k_pos[j])],
        None => 0.0,
    })?;
    let ctx = attention_context(&probs, &v, m, n, d);
    let mut attn = matmul(&ctx, m, d, p.slice(s.wo), d);
    add_row_bias(&mut attn, d, p.slice(s.bo));
    let drop1 = dropout.as_deref_mut().and_then(|dr| dr.mask(m * d));
    let mut z1 = xq.to_vec();
    for (i, a) in attn.iter().enumerate() {
        z1[i] += drop1.as_ref().map_or(*a, |mk| a * mk[i]);
    }
    let (y1, ln1) = layer_norm(&z1, d, p.slice(s.ln1_g), p.slice(s.ln1_b));

    let mut pre = matmul(&y1, m, d, p.slice(s.w1), f);
    add_row_bias(&mut pre, f, p.slice(s.b1));
    let act: Vec<f64> = pre.iter().map(|&x| gelu(x)).collect();
    let mut ffn = matmul(&act, m, f, p.slice(s.w2), d);
    add_row_bias(&mut ffn, d, p.slice(s.b2));
    let drop2 = dropout.and_then(|dr| dr.mask(m * d));
    let mut z2 = y1.clone();
    for (i, a) in ffn.iter().enumerate() {
        z2[i] += drop2.as_ref().map_or(*a, |mk| a * mk[i]);
    }
    let (y2, ln2) = layer_norm(&z2, d, p.slice(s.ln2_g), p.slice(s.ln2_b));
    if y2.iter().any(|v| !v.is_finite()) {
        return Err(EncoderError::NonFinite { layer: l });
    }

    let cache = LayerCache {
        xq: xq.to_vec(),
        xkv: xkv.to_vec(),
        m,
        n,
        q,
        k,
        v,
        probs,
        ctx,
        drop1,
        ln1,
        y1,
        pre,
        act,
        drop2,
        ln2,
        q_pos: q_pos.to_vec(),
        k_pos: k_pos.to_vec(),
    };
    Ok((y2, cache))
}

/// Accumulates parameter gradients into `grads` and returns `(d xq, d xkv)`.
pub(crate) fn layer_backward(
    p: &ParameterSet,
    l: usize,
    c: &LayerCache,
    dy: &[f64],
    grads: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let cfg = &p.config;
    let s = &p.layout.layers[l];
    let d = cfg.hidden;
    let f = cfg.ffn_dim();
    let heads = cfg.heads;
    let dh = d / heads;
    let (m, n) = (c.m, c.n);

    // LN2
    let (g2, b2) = split_pair(grads, s.ln2_g.range(), s.ln2_b.range());
    let dz2 = layer_norm_backward(dy, &c.ln2, d, p.slice(s.ln2_g), g2, b2);
    let mut dy1 = dz2.clone();
    let dffn: Vec<f64> = match &c.drop2 {
        Some(mk) => dz2.iter().zip(mk).map(|(a, b)| a * b).collect(),
        None => dz2,
    };

    // FFN
    matmul_tn_acc(&c.act, m, f, &dffn, d, &mut grads[s.w2.range()]);
    col_sum_acc(&dffn, d, &mut grads[s.b2.range()]);
    let dact = matmul_nt(&dffn, m, d, p.slice(s.w2), f);
    let dpre: Vec<f64> = dact.iter().zip(&c.pre).map(|(g, &x)| g * gelu_grad(x)).collect();
    matmul_tn_acc(&c.y1, m, d, &dpre, f, &mut grads[s.w1.range()]);
    col_sum_acc(&dpre, f, &mut grads[s.b1.range()]);
    let dy1_ffn = matmul_nt(&dpre, m, f, p.slice(s.w1), d);
    for (a, b) in dy1.iter_mut().zip(&dy1_ffn) {
        *a += b;
    }

    // LN1
    let (g1, b1) = split_pair(grads, s.ln1_g.range(), s.ln1_b.range());
    let dz1 = layer_norm_backward(&dy1, &c.ln1, d, p.slice(s.ln1_g), g1, b1);
    let mut dxq = dz1.clone();
    let dattn: Vec<f64> = match &c.drop1 {
        Some(mk) => dz1.iter().zip(mk).map(|(a, b)| a * b).collect(),
        None => dz1,
    };

    // Output projection
    matmul_tn_acc(&c.ctx, m, d, &dattn, d, &mut grads[s.wo.range()]);
    col_sum_acc(&dattn, d, &mut grads[s.bo.range()]);
    let dctx = matmul_nt(&dattn, m, d, p.slice(s.wo), d);

    // Attention
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![0.0; m * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    let span = cfg.relative_span();
    let mut ds = vec![0.0; m * n];
    for h in 0..heads {
        let probs = &c.probs[h];
        let cols = h * dh..(h + 1) * dh;
        for i in 0..m {
            let dci = &dctx[i * d + cols.start..i * d + cols.end];
            let mut dot_pd = 0.0;
            for j in 0..n {
                let pij = probs[i * n + j];
                if pij == 0.0 {
                    ds[i * n + j] = 0.0;
                    continue;
                }
                let vj = &c.v[j * d + cols.start..j * d + cols.end];
                let dp: f64 = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                ds[i * n + j] = dp;
                dot_pd += pij * dp;
                for (dvv, &g) in dv[j * d + cols.start..j * d + cols.end].iter_mut().zip(dci) {
                    *dvv += pij * g;
                }
            }
            for j in 0..n {
                let pij = probs[i * n + j];
                ds[i * n + j] = if pij == 0.0 { 0.0 } else { pij * (ds[i * n + j] - dot_pd) };
            }
        }
        if let Some(rel) = s.rel {
            let rg = &mut grads[rel.range()];
            for i in 0..m {
                for j in 0..n {
                    let g = ds[i * n + j];
                    if g != 0.0 {
                        rg[h * span + rel_index(cfg.max_len, c.q_pos[i], c.k_pos[j])] += g;
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..n {
                let g = ds[i * n + j] * scale;
                if g == 0.0 {
                    continue;
                }
                for t in cols.clone() {
                    dq[i * d + t] += g * c.k[j * d + t];
                    dk[j * d + t] += g * c.q[i * d + t];
                }
            }
        }
    }

    matmul_tn_acc(&c.xq, m, d, &dq, d, &mut grads[s.wq.range()]);
    col_sum_acc(&dq, d, &mut grads[s.bq.range()]);
    matmul_tn_acc(&c.xkv, n, d, &dk, d, &mut grads[s.wk.range()]);
    col_sum_acc(&dk, d, &mut grads[s.bk.range()]);
    matmul_tn_acc(&c.xkv, n, d, &dv, d, &mut grads[s.wv.range()]);
    col_sum_acc(&dv, d, &mut grads[s.bv.range()]);

    let dxq_attn = matmul_nt(&dq, m, d, p.slice(s.wq), d);
    for (a, b) in dxq.iter_mut().zip(&dxq_attn) {
        *a += b;
    }
    let mut dxkv = matmul_nt(&dk, n, d, p.slice(s.wk), d);
    let dxkv_v = matmul_nt(&dv, n, d, p.slice(s.wv), d);
    for (a, b) in dxkv.iter_mut().zip(&dxkv_v) {
        *a += b;
    }
    (dxq, dxkv)
}

/// Two disjoint mutable ranges of one buffer (`a` must precede `b`).
fn split_pair(buf: &mut [f64], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = buf.split_at_mut(b.start);
    (&mut left[a], &mut right[..b.end - b.start])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-5;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-9, "x={x}");
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = [1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 6.0];
        let (y, _) = layer_norm(&x, 4, &[1.0; 4], &[0.0; 4]);
        for row in y.chunks(4) {
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_rows_are_rejected() {
        let q = [1.0, 0.0];
        let err = attention_probs(&q, &q, 1, 1, 2, 1, &[false], |_, _, _| 0.0);
        assert!(matches!(err, Err(EncoderError::AllMasked { row: 0 })));
    }
}
