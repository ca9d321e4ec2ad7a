//! Forward and reverse-mode passes of the encoder.
//!
//! Tokens are rows of a `T × d` matrix; the query token is always the last
//! row. The last block only needs the query row, so it projects queries and
//! runs the feedforward stack for that row alone while keys and values still
//! cover every token.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::{EncoderBlock, LayerNorm, Linear, ModelParams};
use super::task::Observation;
use crate::error::{Error, Result};
use crate::scaling::ScalerState;
use crate::timebase::{Date, N_TIME_FEATURES};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Model-ready inputs: normalized calendar features for every token (query
/// last) and the scaled value of every input token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenInputs {
    pub features: Array2<f64>,
    pub values: Vec<f64>,
}

impl TokenInputs {
    pub fn n_tokens(&self) -> usize {
        self.features.nrows()
    }

    /// Largest absolute scaled input value.
    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Drops missing points, scales present values and appends the query token.
/// Calendar years are expressed relative to the latest present input date.
pub fn tokenize(input: &[Observation], query: Date, scaler: &ScalerState) -> Result<TokenInputs> {
    let present: Vec<&Observation> = input.iter().filter(|o| o.present).collect();
    let reference_year = present.iter().map(|o| o.date).max().ok_or(Error::NoPresentValues)?.year();
    let n = present.len() + 1;
    let mut features = Array2::zeros((n, N_TIME_FEATURES));
    for (i, o) in present.iter().enumerate() {
        let f = o.date.features().normalized(reference_year);
        features.row_mut(i).assign(&ndarray::aview1(&f));
    }
    let fq = query.features().normalized(reference_year);
    features.row_mut(n - 1).assign(&ndarray::aview1(&fq));
    let values = present.iter().map(|o| scaler.transform(o.value)).collect();
    Ok(TokenInputs { features, values })
}

/// `tanh` through a single `exp`; about twice as fast as libm's and within a
/// few ulps in absolute terms, which is all GELU needs.
fn tanh(u: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * u).exp() + 1.0)
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + tanh(GELU_C * (x + 0.044_715 * x * x * x)))
}

fn gelu_grad(x: f64) -> f64 {
    let t = tanh(GELU_C * (x + 0.044_715 * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044_715 * x * x)
}

/// Token embedding matrix, `T × d`.
pub fn embed(params: &ModelParams, tokens: &TokenInputs) -> Result<Array2<f64>> {
    let d = params.config.d_model;
    let n = tokens.n_tokens();
    if n == 0 || tokens.values.len() + 1 != n || tokens.features.ncols() != N_TIME_FEATURES {
        return Err(Error::Shape(format!(
            "{} feature rows for {} values",
            n,
            tokens.values.len()
        )));
    }
    if n - 1 > params.config.max_input_len {
        return Err(Error::Shape(format!(
            "{} input tokens exceed max_input_len {}",
            n - 1,
            params.config.max_input_len
        )));
    }
    let mut x = params.time_proj.forward(&tokens.features);
    let w = params.value_proj.weight.row(0);
    for (i, &v) in tokens.values.iter().enumerate() {
        let mut row = x.row_mut(i);
        row.scaled_add(v, &w);
        row += &params.value_proj.bias;
    }
    let mut q = x.row_mut(n - 1);
    q += &params.query_token;
    debug_assert_eq!(x.ncols(), d);
    Ok(x)
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *inv = 1.0 / (var + LN_EPS).sqrt();
        row *= *inv;
    }
    let y = &xhat * &ln.gain + &ln.bias;
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Array2<f64>, cache: &NormCache, ln: &LayerNorm, grad: &mut LayerNorm) -> Array2<f64> {
    grad.gain += &(dy * &cache.xhat).sum_axis(Axis(0));
    grad.bias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * &ln.gain;
    for ((mut row, xhat), &inv) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.inv_std) {
        let mean = row.sum() / d;
        let mean_x = row.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / d;
        row.zip_mut_with(&xhat, |g, &xh| *g = inv * (*g - mean - xh * mean_x));
    }
    dx
}

/// Accumulates weight/bias gradients and returns the input gradient.
fn linear_backward(x: &ArrayView2<f64>, dy: &Array2<f64>, lin: &Linear, grad: &mut Linear) -> Array2<f64> {
    general_mat_mul(1.0, &x.t(), dy, 1.0, &mut grad.weight);
    grad.bias += &dy.sum_axis(Axis(0));
    dy.dot(&lin.weight.t())
}

struct BlockCache {
    x: Array2<f64>,
    query_only: bool,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    norm1: NormCache,
    h: Array2<f64>,
    f1: Array2<f64>,
    g1: Array2<f64>,
    f2: Array2<f64>,
    g2: Array2<f64>,
    norm2: NormCache,
}

fn rows_view(x: &Array2<f64>, query_only: bool) -> ArrayView2<'_, f64> {
    if query_only {
        x.slice(s![x.nrows() - 1.., ..])
    } else {
        x.view()
    }
}

struct Attention {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    /// Residual sum `x + attention`, input to the first layer norm.
    u: Array2<f64>,
}

fn attention(block: &EncoderBlock, n_heads: usize, x: &Array2<f64>, query_only: bool) -> Attention {
    let d = x.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let xr = rows_view(x, query_only);
    let q = xr.dot(&block.query.weight) + &block.query.bias;
    let k = block.key.forward(x);
    let v = block.value.forward(x);

    let mut attn = Array2::zeros((q.nrows(), d));
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut p = q.slice(cols).dot(&k.slice(cols).t());
        for mut row in p.rows_mut() {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v * scale));
            row.mapv_inplace(|v| (v * scale - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        attn.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    let u = &xr + &block.output.forward(&attn);
    Attention { q, k, v, probs, attn, u }
}

struct FeedForward {
    norm1: NormCache,
    h: Array2<f64>,
    f1: Array2<f64>,
    g1: Array2<f64>,
    f2: Array2<f64>,
    g2: Array2<f64>,
    norm2: NormCache,
}

/// Layer norm, feedforward stack, residual and second layer norm. Acts row by
/// row, so rows of several tokens sets can be stacked.
fn feedforward(block: &EncoderBlock, u: &Array2<f64>) -> (Array2<f64>, FeedForward) {
    let (h, norm1) = layer_norm(u, &block.norm1);
    let f1 = block.ff1.forward(&h);
    let g1 = f1.mapv(gelu);
    let f2 = block.ff2.forward(&g1);
    let g2 = f2.mapv(gelu);
    let y = &h + &block.ff_out.forward(&g2);
    let (out, norm2) = layer_norm(&y, &block.norm2);
    (out, FeedForward { norm1, h, f1, g1, f2, g2, norm2 })
}

fn block_forward(block: &EncoderBlock, n_heads: usize, x: Array2<f64>, query_only: bool) -> (Array2<f64>, BlockCache) {
    let Attention { q, k, v, probs, attn, u } = attention(block, n_heads, &x, query_only);
    let (out, ff) = feedforward(block, &u);
    let FeedForward { norm1, h, f1, g1, f2, g2, norm2 } = ff;
    let cache = BlockCache { x, query_only, q, k, v, probs, attn, norm1, h, f1, g1, f2, g2, norm2 };
    (out, cache)
}

fn block_backward(
    block: &EncoderBlock,
    grad: &mut EncoderBlock,
    n_heads: usize,
    cache: &BlockCache,
    dout: &Array2<f64>,
) -> Array2<f64> {
    let d = cache.x.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let dy = layer_norm_backward(dout, &cache.norm2, &block.norm2, &mut grad.norm2);
    let dg2 = linear_backward(&cache.g2.view(), &dy, &block.ff_out, &mut grad.ff_out);
    let df2 = dg2 * &cache.f2.mapv(gelu_grad);
    let dg1 = linear_backward(&cache.g1.view(), &df2, &block.ff2, &mut grad.ff2);
    let df1 = dg1 * &cache.f1.mapv(gelu_grad);
    let dh_ff = linear_backward(&cache.h.view(), &df1, &block.ff1, &mut grad.ff1);
    let dh_total = dy + dh_ff;
    let du = layer_norm_backward(&dh_total, &cache.norm1, &block.norm1, &mut grad.norm1);

    let dattn = linear_backward(&cache.attn.view(), &du, &block.output, &mut grad.output);
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, p) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let da = dattn.slice(cols);
        let dp = da.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&da));
        let mut ds = dp;
        for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
            let dot = drow.iter().zip(prow).map(|(a, b)| a * b).sum::<f64>();
            drow.zip_mut_with(&prow, |g, &pv| *g = pv * (*g - dot) * scale);
        }
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }

    let xr = rows_view(&cache.x, cache.query_only);
    let dxr = du + linear_backward(&xr, &dq, &block.query, &mut grad.query);
    let mut dx = linear_backward(&cache.x.view(), &dk, &block.key, &mut grad.key);
    dx += &linear_backward(&cache.x.view(), &dv, &block.value, &mut grad.value);
    let n = dx.nrows();
    if cache.query_only {
        let mut last = dx.slice_mut(s![n - 1.., ..]);
        last += &dxr;
    } else {
        dx += &dxr;
    }
    dx
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    last_hidden: Array1<f64>,
}

fn check_shapes(params: &ModelParams) -> Result<()> {
    let c = &params.config;
    if params.blocks.len() != c.n_blocks || params.query_token.len() != c.d_model {
        return Err(Error::Shape("parameters do not match model config".into()));
    }
    Ok(())
}

/// Scalar prediction (scaled units) together with the backward cache.
pub fn forward_cached(params: &ModelParams, tokens: &TokenInputs) -> Result<(f64, ForwardCache)> {
    check_shapes(params)?;
    let n_heads = params.config.n_heads;
    let mut x = embed(params, tokens)?;
    let n_blocks = params.blocks.len();
    let mut caches = Vec::with_capacity(n_blocks);
    for (i, block) in params.blocks.iter().enumerate() {
        let (y, cache) = block_forward(block, n_heads, x, i + 1 == n_blocks);
        caches.push(cache);
        x = y;
    }
    let last_hidden = x.row(x.nrows() - 1).to_owned();
    let out = last_hidden.dot(&params.head.weight.column(0)) + params.head.bias[0];
    Ok((out, ForwardCache { blocks: caches, last_hidden }))
}

/// Single forward pass; output in scaled units.
pub fn forward(params: &ModelParams, tokens: &TokenInputs) -> Result<f64> {
    forward_cached(params, tokens).map(|(y, _)| y)
}

/// Outputs (scaled units) of several token sets. Agrees with [`forward`] up
/// to floating-point summation order; faster because the feedforward stack
/// runs once over the stacked rows of all sets.
pub fn forward_batch(params: &ModelParams, batch: &[TokenInputs]) -> Result<Vec<f64>> {
    check_shapes(params)?;
    let n_heads = params.config.n_heads;
    let n_blocks = params.blocks.len();
    let mut xs: Vec<Array2<f64>> = batch.iter().map(|t| embed(params, t)).collect::<Result<_>>()?;
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    for (i, block) in params.blocks.iter().enumerate() {
        let query_only = i + 1 == n_blocks;
        let us: Vec<Array2<f64>> = xs.iter().map(|x| attention(block, n_heads, x, query_only).u).collect();
        let views: Vec<ArrayView2<f64>> = us.iter().map(|u| u.view()).collect();
        let stacked = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
        let (out, _) = feedforward(block, &stacked);
        let mut start = 0;
        for (x, u) in xs.iter_mut().zip(&us) {
            *x = out.slice(s![start..start + u.nrows(), ..]).to_owned();
            start += u.nrows();
        }
    }
    let w = params.head.weight.column(0);
    Ok(xs.iter().map(|x| x.row(x.nrows() - 1).dot(&w) + params.head.bias[0]).collect())
}

/// Accumulates `d_output · ∂output/∂θ` into `grad`.
pub fn backward(
    params: &ModelParams,
    tokens: &TokenInputs,
    cache: &ForwardCache,
    d_output: f64,
    grad: &mut ModelParams,
) {
    let d = params.config.d_model;
    let n_heads = params.config.n_heads;
    grad.head.bias[0] += d_output;
    grad.head.weight.column_mut(0).scaled_add(d_output, &cache.last_hidden);
    let mut dx = Array2::from_shape_fn((1, d), |(_, j)| d_output * params.head.weight[[j, 0]]);
    for (i, block) in params.blocks.iter().enumerate().rev() {
        dx = block_backward(block, &mut grad.blocks[i], n_heads, &cache.blocks[i], &dx);
    }

    // Embedding.
    let n = tokens.n_tokens();
    general_mat_mul(1.0, &tokens.features.t(), &dx, 1.0, &mut grad.time_proj.weight);
    grad.time_proj.bias += &dx.sum_axis(Axis(0));
    let inputs = dx.slice(s![..n - 1, ..]);
    for (row, &v) in inputs.rows().into_iter().zip(&tokens.values) {
        grad.value_proj.weight.row_mut(0).scaled_add(v, &row);
    }
    grad.value_proj.bias += &inputs.sum_axis(Axis(0));
    grad.query_token += &dx.row(n - 1);
}
