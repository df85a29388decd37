//! Encoder-only transformer over IQ tokens with hand-written backpropagation.
//!
//! Data flow for one sequence of `M` tokens of width `d`:
//! input normalization → `L` × post-norm encoder layers
//! (self-attention, add & norm, ReLU feed-forward, add & norm) →
//! flatten `M·d` → fully-connected ReLU layer → output logits.
//! The final LogSoftmax (single-label) or Sigmoid (multi-label) is applied on
//! top of the logits by [`Transformer::forward`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

#[allow(unused_imports)]
use num_traits::Float;

use super::kernels::{
    accumulate_weight_grad, axpy, dot, linear, log_softmax, matmul_bt, sigmoid, softmax_in_place,
    Scalar,
};
use super::network::{Network, TensorInfo};
use crate::error::{bail, Result};
use crate::tokenizer::{TokenMatrix, TokenizationConfig};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransformerConfig {
    /// Tokens per sequence (M).
    pub seq_len: usize,
    /// Token width, equal to 2S.
    pub d_model: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_ff: usize,
    pub fc_hidden: usize,
    pub num_classes: usize,
    pub multi_label: bool,
    /// Adds fixed sinusoidal position codes after input normalization.
    /// Off by default.
    pub positional_encoding: bool,
}

impl TransformerConfig {
    /// 24 tokens of width 128, 4 heads, about 1.57M parameters.
    pub fn sm(num_classes: usize) -> Self {
        Self {
            seq_len: 24,
            d_model: 128,
            num_layers: 2,
            num_heads: 4,
            d_ff: 512,
            fc_hidden: 380,
            num_classes,
            multi_label: false,
            positional_encoding: false,
        }
    }

    /// 64 tokens of width 256, 8 heads, about 6.66M parameters.
    pub fn lg(num_classes: usize) -> Self {
        Self {
            seq_len: 64,
            d_model: 256,
            num_layers: 2,
            num_heads: 8,
            d_ff: 1024,
            fc_hidden: 310,
            num_classes,
            multi_label: false,
            positional_encoding: false,
        }
    }

    /// Reduced variant for CPU-only training: 64 tokens of 32 samples
    /// (d_model 64), 4 heads.
    pub fn desk(num_classes: usize) -> Self {
        Self {
            seq_len: 64,
            d_model: 64,
            num_layers: 2,
            num_heads: 4,
            d_ff: 256,
            fc_hidden: 128,
            num_classes,
            multi_label: false,
            positional_encoding: false,
        }
    }

    pub fn multi_label(mut self, on: bool) -> Self {
        self.multi_label = on;
        self
    }

    /// Tokenization whose token width matches `d_model`.
    pub fn tokenization(&self) -> TokenizationConfig {
        TokenizationConfig::new(self.seq_len, self.d_model / 2).expect("validated config")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(2) {
            bail!(InvalidSpec, "seq_len must be positive and d_model positive and even");
        }
        if self.num_heads == 0 || !self.d_model.is_multiple_of(self.num_heads) {
            bail!(InvalidSpec, "d_model {} not divisible by {} heads", self.d_model, self.num_heads);
        }
        if self.d_ff == 0 || self.fc_hidden == 0 {
            bail!(InvalidSpec, "d_ff and fc_hidden must be positive");
        }
        let min_classes = if self.multi_label { 1 } else { 2 };
        if self.num_classes < min_classes || self.num_classes > 32 {
            bail!(InvalidSpec, "unsupported class count {}", self.num_classes);
        }
        Ok(())
    }

    /// Checks that tokens produced by `tok` fit this model.
    pub fn check_tokenization(&self, tok: &TokenizationConfig) -> Result<()> {
        if tok.m != self.seq_len || tok.token_width() != self.d_model {
            bail!(
                Shape,
                "tokenizer produces {}x{} but the model expects {}x{}",
                tok.m,
                tok.token_width(),
                self.seq_len,
                self.d_model
            );
        }
        Ok(())
    }
}

/// Exact number of trainable scalars for `cfg`.
pub fn param_count(cfg: &TransformerConfig) -> usize {
    Layout::new(cfg).total
}

#[derive(Debug, Clone)]
struct LayerIdx {
    wq: Range<usize>,
    bq: Range<usize>,
    wk: Range<usize>,
    bk: Range<usize>,
    wv: Range<usize>,
    bv: Range<usize>,
    wo: Range<usize>,
    bo: Range<usize>,
    ln1_g: Range<usize>,
    ln1_b: Range<usize>,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
    ln2_g: Range<usize>,
    ln2_b: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

#[derive(Debug, Clone)]
struct Layout {
    tensors: Vec<(TensorInfo, Init)>,
    total: usize,
    in_g: Range<usize>,
    in_b: Range<usize>,
    layers: Vec<LayerIdx>,
    fc_w: Range<usize>,
    fc_b: Range<usize>,
    out_w: Range<usize>,
    out_b: Range<usize>,
}

struct LayoutBuilder {
    tensors: Vec<(TensorInfo, Init)>,
    offset: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> Range<usize> {
        let len: usize = shape.iter().product();
        let range = self.offset..self.offset + len;
        self.offset += len;
        self.tensors.push((
            TensorInfo {
                name,
                shape,
                range: range.clone(),
            },
            init,
        ));
        range
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> (Range<usize>, Range<usize>) {
        let w = self.push(format!("{prefix}.weight"), vec![fan_in, fan_out], Init::Uniform { fan_in });
        let b = self.push(format!("{prefix}.bias"), vec![fan_out], Init::Uniform { fan_in });
        (w, b)
    }

    fn norm(&mut self, prefix: &str, d: usize) -> (Range<usize>, Range<usize>) {
        let g = self.push(format!("{prefix}.gamma"), vec![d], Init::Ones);
        let b = self.push(format!("{prefix}.beta"), vec![d], Init::Zeros);
        (g, b)
    }
}

impl Layout {
    fn new(cfg: &TransformerConfig) -> Self {
        let d = cfg.d_model;
        let mut b = LayoutBuilder {
            tensors: Vec::new(),
            offset: 0,
        };
        let (in_g, in_b) = b.norm("input_norm", d);
        let layers = (0..cfg.num_layers)
            .map(|l| {
                let p = format!("layers.{l}");
                let (wq, bq) = b.linear(&format!("{p}.attn.q"), d, d);
                let (wk, bk) = b.linear(&format!("{p}.attn.k"), d, d);
                let (wv, bv) = b.linear(&format!("{p}.attn.v"), d, d);
                let (wo, bo) = b.linear(&format!("{p}.attn.out"), d, d);
                let (ln1_g, ln1_b) = b.norm(&format!("{p}.norm1"), d);
                let (w1, b1) = b.linear(&format!("{p}.ff.1"), d, cfg.d_ff);
                let (w2, b2) = b.linear(&format!("{p}.ff.2"), cfg.d_ff, d);
                let (ln2_g, ln2_b) = b.norm(&format!("{p}.norm2"), d);
                LayerIdx {
                    wq,
                    bq,
                    wk,
                    bk,
                    wv,
                    bv,
                    wo,
                    bo,
                    ln1_g,
                    ln1_b,
                    w1,
                    b1,
                    w2,
                    b2,
                    ln2_g,
                    ln2_b,
                }
            })
            .collect();
        let (fc_w, fc_b) = b.linear("head.fc", cfg.seq_len * d, cfg.fc_hidden);
        let (out_w, out_b) = b.linear("head.out", cfg.fc_hidden, cfg.num_classes);
        Self {
            total: b.offset,
            tensors: b.tensors,
            in_g,
            in_b,
            layers,
            fc_w,
            fc_b,
            out_w,
            out_b,
        }
    }
}

/// Transformer weights plus the frozen per-feature input statistics.
#[derive(Debug, Clone)]
pub struct Transformer<T: Scalar> {
    config: TransformerConfig,
    layout: Layout,
    params: Vec<T>,
    input_mean: Vec<T>,
    input_inv_std: Vec<T>,
    position_codes: Vec<T>,
}

impl<T: Scalar> PartialEq for Transformer<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.params == other.params
            && self.input_mean == other.input_mean
            && self.input_inv_std == other.input_inv_std
    }
}

/// Intermediate values of one encoder layer kept for the backward pass.
#[derive(Debug, Clone)]
struct LayerCache<T> {
    x_in: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention probabilities, `heads × M × M`.
    p: Vec<T>,
    o: Vec<T>,
    xhat1: Vec<T>,
    inv1: Vec<T>,
    x1: Vec<T>,
    /// Feed-forward activations after ReLU.
    h: Vec<T>,
    xhat2: Vec<T>,
    inv2: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct TransformerCache<T> {
    xhat_in: Vec<T>,
    layers: Vec<LayerCache<T>>,
    flat: Vec<T>,
    hidden: Vec<T>,
}

fn layer_norm<T: Scalar>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    d: usize,
    y: &mut [T],
    xhat: &mut [T],
    inv: &mut [T],
) {
    let eps = T::of(LN_EPS);
    let n = T::from_usize(d).unwrap();
    for (r, row) in x.chunks_exact(d).enumerate() {
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let is = (var + eps).sqrt().recip();
        inv[r] = is;
        for c in 0..d {
            let xh = (row[c] - mean) * is;
            xhat[r * d + c] = xh;
            y[r * d + c] = gamma[c] * xh + beta[c];
        }
    }
}

/// Returns `dx` and accumulates `dgamma`, `dbeta`.
fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    xhat: &[T],
    inv: &[T],
    gamma: &[T],
    d: usize,
    dgamma_beta: (&mut [T], &mut [T]),
) -> Vec<T> {
    let (dgamma, dbeta) = dgamma_beta;
    let n = T::from_usize(d).unwrap();
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); d];
    for r in 0..dy.len() / d {
        let dyr = &dy[r * d..(r + 1) * d];
        let xr = &xhat[r * d..(r + 1) * d];
        for c in 0..d {
            dgamma[c] += dyr[c] * xr[c];
            dbeta[c] += dyr[c];
            dxhat[c] = dyr[c] * gamma[c];
        }
        let sum: T = dxhat.iter().copied().sum();
        let sum_x = dot(&dxhat, xr);
        let k = inv[r] / n;
        for c in 0..d {
            dx[r * d + c] = k * (n * dxhat[c] - sum - xr[c] * sum_x);
        }
    }
    dx
}

/// Disjoint mutable views of two ranges with `a` before `b`.
fn pair_mut<'a, T>(g: &'a mut [T], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

fn sinusoid_codes<T: Scalar>(m: usize, d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * d];
    for pos in 0..m {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            out[pos * d + i] = T::of(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    out
}

impl<T: Scalar> Transformer<T> {
    /// Fresh model with fan-in scaled uniform weights, unit norm scales and
    /// identity input statistics.
    pub fn new<R: Rng + ?Sized>(config: TransformerConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![T::zero(); layout.total];
        for (info, init) in &layout.tensors {
            let dst = &mut params[info.range.clone()];
            match *init {
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    for v in dst {
                        *v = T::of(rng.random_range(-bound..bound));
                    }
                }
                Init::Ones => dst.fill(T::one()),
                Init::Zeros => {}
            }
        }
        Ok(Self::assemble(config, layout, params))
    }

    fn assemble(config: TransformerConfig, layout: Layout, params: Vec<T>) -> Self {
        let d = config.d_model;
        let position_codes = if config.positional_encoding {
            sinusoid_codes(config.seq_len, d)
        } else {
            Vec::new()
        };
        Self {
            config,
            layout,
            params,
            input_mean: vec![T::zero(); d],
            input_inv_std: vec![T::one(); d],
            position_codes,
        }
    }

    /// Rebuilds a model from a flat parameter vector and input statistics.
    pub fn from_parts(config: TransformerConfig, params: Vec<T>, input_mean: Vec<T>, input_inv_std: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            bail!(Shape, "expected {} parameters, got {}", layout.total, params.len());
        }
        if input_mean.len() != config.d_model || input_inv_std.len() != config.d_model {
            bail!(Shape, "input statistics must have length {}", config.d_model);
        }
        let mut m = Self::assemble(config, layout, params);
        m.input_mean = input_mean;
        m.input_inv_std = input_inv_std;
        Ok(m)
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn input_mean(&self) -> &[T] {
        &self.input_mean
    }

    pub fn input_inv_std(&self) -> &[T] {
        &self.input_inv_std
    }

    /// Fits the frozen per-feature mean and inverse standard deviation of
    /// the input normalization from training token rows.
    pub fn fit_input_statistics<'a, I>(&mut self, rows: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let d = self.config.d_model;
        let mut sum = vec![0.0f64; d];
        let mut sum_sq = vec![0.0f64; d];
        let mut count = 0usize;
        for row in rows {
            if row.len() % d != 0 {
                bail!(Shape, "row length {} is not a multiple of d_model {d}", row.len());
            }
            for tok in row.chunks_exact(d) {
                for c in 0..d {
                    sum[c] += tok[c];
                    sum_sq[c] += tok[c] * tok[c];
                }
                count += 1;
            }
        }
        if count < 2 {
            bail!(InsufficientData, "need at least two tokens to fit input statistics");
        }
        let n = count as f64;
        for c in 0..d {
            let mean = sum[c] / n;
            let var = (sum_sq[c] / n - mean * mean).max(0.0);
            self.input_mean[c] = T::of(mean);
            self.input_inv_std[c] = T::of(1.0 / (var + LN_EPS).sqrt());
        }
        Ok(())
    }

    /// Converts a token matrix into the flat input vector.
    pub fn input_from_tokens(&self, tokens: &TokenMatrix) -> Result<Vec<T>> {
        if tokens.rows() != self.config.seq_len || tokens.width() != self.config.d_model {
            bail!(
                Shape,
                "expected {}x{} tokens, got {}x{}",
                self.config.seq_len,
                self.config.d_model,
                tokens.rows(),
                tokens.width()
            );
        }
        Ok(tokens.values().iter().map(|&v| T::of(v)).collect())
    }

    /// Class scores: log-probabilities (single-label) or per-class
    /// probabilities (multi-label).
    pub fn forward(&self, tokens: &TokenMatrix) -> Result<Vec<f64>> {
        let x = self.input_from_tokens(tokens)?;
        Ok(self.scores_from_logits(&self.logits_of(&x)))
    }

    pub fn forward_batch(&self, batch: &[TokenMatrix]) -> Result<Vec<Vec<f64>>> {
        batch.iter().map(|t| self.forward(t)).collect()
    }

    pub fn scores_from_logits(&self, logits: &[T]) -> Vec<f64> {
        let z: Vec<f64> = logits.iter().map(|v| v.to_f64_lossy()).collect();
        if self.config.multi_label {
            z.iter().map(|&v| sigmoid(v)).collect()
        } else {
            log_softmax(&z)
        }
    }

    fn logits_of(&self, x: &[T]) -> Vec<T> {
        self.forward_cached(x).0
    }

    fn forward_cached(&self, x: &[T]) -> (Vec<T>, TransformerCache<T>) {
        let cfg = &self.config;
        let (m, d) = (cfg.seq_len, cfg.d_model);
        let p = &self.params;
        let lay = &self.layout;

        let mut xhat_in = vec![T::zero(); m * d];
        let mut z = vec![T::zero(); m * d];
        let gamma = &p[lay.in_g.clone()];
        let beta = &p[lay.in_b.clone()];
        for i in 0..m * d {
            let c = i % d;
            let xh = (x[i] - self.input_mean[c]) * self.input_inv_std[c];
            xhat_in[i] = xh;
            z[i] = gamma[c] * xh + beta[c];
        }
        if !self.position_codes.is_empty() {
            for (v, &pc) in z.iter_mut().zip(&self.position_codes) {
                *v += pc;
            }
        }

        let mut layers = Vec::with_capacity(cfg.num_layers);
        for li in &lay.layers {
            let (next, cache) = self.layer_forward(li, z);
            layers.push(cache);
            z = next;
        }

        let mut pre = vec![T::zero(); cfg.fc_hidden];
        linear(&z, &p[lay.fc_w.clone()], &p[lay.fc_b.clone()], 1, m * d, cfg.fc_hidden, &mut pre);
        for v in pre.iter_mut() {
            *v = v.max(T::zero());
        }
        let mut logits = vec![T::zero(); cfg.num_classes];
        linear(&pre, &p[lay.out_w.clone()], &p[lay.out_b.clone()], 1, cfg.fc_hidden, cfg.num_classes, &mut logits);
        (
            logits,
            TransformerCache {
                xhat_in,
                layers,
                flat: z,
                hidden: pre,
            },
        )
    }

    fn layer_forward(&self, li: &LayerIdx, x_in: Vec<T>) -> (Vec<T>, LayerCache<T>) {
        let cfg = &self.config;
        let (m, d, f) = (cfg.seq_len, cfg.d_model, cfg.d_ff);
        let heads = cfg.num_heads;
        let dh = d / heads;
        let p = &self.params;
        let scale = T::of(1.0 / (dh as f64).sqrt());

        let mut q = vec![T::zero(); m * d];
        let mut k = vec![T::zero(); m * d];
        let mut v = vec![T::zero(); m * d];
        linear(&x_in, &p[li.wq.clone()], &p[li.bq.clone()], m, d, d, &mut q);
        linear(&x_in, &p[li.wk.clone()], &p[li.bk.clone()], m, d, d, &mut k);
        linear(&x_in, &p[li.wv.clone()], &p[li.bv.clone()], m, d, d, &mut v);

        let mut probs = vec![T::zero(); heads * m * m];
        let mut o = vec![T::zero(); m * d];
        for h in 0..heads {
            let hs = h * dh..(h + 1) * dh;
            for i in 0..m {
                let row = &mut probs[(h * m + i) * m..(h * m + i + 1) * m];
                let qi = &q[i * d + hs.start..i * d + hs.end];
                for j in 0..m {
                    row[j] = dot(qi, &k[j * d + hs.start..j * d + hs.end]) * scale;
                }
                softmax_in_place(row);
                let oi = &mut o[i * d + hs.start..i * d + hs.end];
                for j in 0..m {
                    axpy(row[j], &v[j * d + hs.start..j * d + hs.end], oi);
                }
            }
        }

        let mut r1 = vec![T::zero(); m * d];
        linear(&o, &p[li.wo.clone()], &p[li.bo.clone()], m, d, d, &mut r1);
        for (a, &b) in r1.iter_mut().zip(&x_in) {
            *a += b;
        }
        let mut x1 = vec![T::zero(); m * d];
        let mut xhat1 = vec![T::zero(); m * d];
        let mut inv1 = vec![T::zero(); m];
        layer_norm(&r1, &p[li.ln1_g.clone()], &p[li.ln1_b.clone()], d, &mut x1, &mut xhat1, &mut inv1);

        let mut hbuf = vec![T::zero(); m * f];
        linear(&x1, &p[li.w1.clone()], &p[li.b1.clone()], m, d, f, &mut hbuf);
        for val in hbuf.iter_mut() {
            *val = val.max(T::zero());
        }
        let mut r2 = vec![T::zero(); m * d];
        linear(&hbuf, &p[li.w2.clone()], &p[li.b2.clone()], m, f, d, &mut r2);
        for (a, &b) in r2.iter_mut().zip(&x1) {
            *a += b;
        }
        let mut x2 = vec![T::zero(); m * d];
        let mut xhat2 = vec![T::zero(); m * d];
        let mut inv2 = vec![T::zero(); m];
        layer_norm(&r2, &p[li.ln2_g.clone()], &p[li.ln2_b.clone()], d, &mut x2, &mut xhat2, &mut inv2);

        (
            x2,
            LayerCache {
                x_in,
                q,
                k,
                v,
                p: probs,
                o,
                xhat1,
                inv1,
                x1,
                h: hbuf,
                xhat2,
                inv2,
            },
        )
    }

    /// Accumulates parameter gradients of one encoder layer and returns the
    /// gradient with respect to its input.
    fn layer_backward(&self, li: &LayerIdx, c: &LayerCache<T>, dx2: &[T], g: &mut [T]) -> Vec<T> {
        let cfg = &self.config;
        let (m, d, f) = (cfg.seq_len, cfg.d_model, cfg.d_ff);
        let heads = cfg.num_heads;
        let dh = d / heads;
        let p = &self.params;
        let scale = T::of(1.0 / (dh as f64).sqrt());

        let dr2 = layer_norm_backward(dx2, &c.xhat2, &c.inv2, &p[li.ln2_g.clone()], d, pair_mut(g, &li.ln2_g, &li.ln2_b));
        // feed-forward
        {
            let (dw, db) = pair_mut(g, &li.w2, &li.b2);
            accumulate_weight_grad(&c.h, &dr2, m, f, d, dw, Some(db));
        }
        let mut dh_ff = vec![T::zero(); m * f];
        matmul_bt(&dr2, &p[li.w2.clone()], m, d, f, &mut dh_ff, false);
        for (gv, &hv) in dh_ff.iter_mut().zip(&c.h) {
            if hv <= T::zero() {
                *gv = T::zero();
            }
        }
        {
            let (dw, db) = pair_mut(g, &li.w1, &li.b1);
            accumulate_weight_grad(&c.x1, &dh_ff, m, d, f, dw, Some(db));
        }
        let mut dx1 = dr2;
        matmul_bt(&dh_ff, &p[li.w1.clone()], m, f, d, &mut dx1, true);

        let dr1 = layer_norm_backward(&dx1, &c.xhat1, &c.inv1, &p[li.ln1_g.clone()], d, pair_mut(g, &li.ln1_g, &li.ln1_b));
        {
            let (dw, db) = pair_mut(g, &li.wo, &li.bo);
            accumulate_weight_grad(&c.o, &dr1, m, d, d, dw, Some(db));
        }
        let mut d_o = vec![T::zero(); m * d];
        matmul_bt(&dr1, &p[li.wo.clone()], m, d, d, &mut d_o, false);

        let mut dq = vec![T::zero(); m * d];
        let mut dk = vec![T::zero(); m * d];
        let mut dv = vec![T::zero(); m * d];
        let mut ds = vec![T::zero(); m];
        for h in 0..heads {
            let hs = h * dh..(h + 1) * dh;
            for i in 0..m {
                let prow = &c.p[(h * m + i) * m..(h * m + i + 1) * m];
                let doi = &d_o[i * d + hs.start..i * d + hs.end];
                let mut weighted = T::zero();
                for j in 0..m {
                    let dp = dot(doi, &c.v[j * d + hs.start..j * d + hs.end]);
                    ds[j] = dp;
                    weighted += dp * prow[j];
                    axpy(prow[j], doi, &mut dv[j * d + hs.start..j * d + hs.end]);
                }
                for j in 0..m {
                    ds[j] = prow[j] * (ds[j] - weighted) * scale;
                }
                let qi = &c.q[i * d + hs.start..i * d + hs.end];
                for j in 0..m {
                    axpy(ds[j], &c.k[j * d + hs.start..j * d + hs.end], &mut dq[i * d + hs.start..i * d + hs.end]);
                    axpy(ds[j], qi, &mut dk[j * d + hs.start..j * d + hs.end]);
                }
            }
        }

        let mut dx_in = dr1;
        for (dproj, w, b) in [(&dq, &li.wq, &li.bq), (&dk, &li.wk, &li.bk), (&dv, &li.wv, &li.bv)] {
            {
                let (dw, db) = pair_mut(g, w, b);
                accumulate_weight_grad(&c.x_in, dproj, m, d, d, dw, Some(db));
            }
            matmul_bt(dproj, &p[w.clone()], m, d, d, &mut dx_in, true);
        }
        dx_in
    }

    fn backward_cached(&self, cache: &TransformerCache<T>, dlogits: &[T], g: &mut [T]) {
        let cfg = &self.config;
        let (m, d) = (cfg.seq_len, cfg.d_model);
        let lay = &self.layout;
        let p = &self.params;

        {
            let (dw, db) = pair_mut(g, &lay.out_w, &lay.out_b);
            accumulate_weight_grad(&cache.hidden, dlogits, 1, cfg.fc_hidden, cfg.num_classes, dw, Some(db));
        }
        let mut dhid = vec![T::zero(); cfg.fc_hidden];
        matmul_bt(dlogits, &p[lay.out_w.clone()], 1, cfg.num_classes, cfg.fc_hidden, &mut dhid, false);
        for (gv, &hv) in dhid.iter_mut().zip(&cache.hidden) {
            if hv <= T::zero() {
                *gv = T::zero();
            }
        }
        {
            let (dw, db) = pair_mut(g, &lay.fc_w, &lay.fc_b);
            accumulate_weight_grad(&cache.flat, &dhid, 1, m * d, cfg.fc_hidden, dw, Some(db));
        }
        let mut dz = vec![T::zero(); m * d];
        matmul_bt(&dhid, &p[lay.fc_w.clone()], 1, cfg.fc_hidden, m * d, &mut dz, false);

        for (li, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            dz = self.layer_backward(li, lc, &dz, g);
        }

        let (dg, db) = pair_mut(g, &lay.in_g, &lay.in_b);
        for i in 0..m * d {
            let c = i % d;
            dg[c] += dz[i] * cache.xhat_in[i];
            db[c] += dz[i];
        }
    }
}

impl<T: Scalar> Network<T> for Transformer<T> {
    type Cache = TransformerCache<T>;

    fn input_len(&self) -> usize {
        self.config.seq_len * self.config.d_model
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn multi_label(&self) -> bool {
        self.config.multi_label
    }

    fn params(&self) -> &[T] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn tensors(&self) -> Vec<TensorInfo> {
        self.layout.tensors.iter().map(|(t, _)| t.clone()).collect()
    }

    fn logits(&self, input: &[T]) -> Vec<T> {
        self.logits_of(input)
    }

    fn forward_train(&self, input: &[T]) -> (Vec<T>, Self::Cache) {
        self.forward_cached(input)
    }

    fn backward(&self, cache: &Self::Cache, dlogits: &[T], grad: &mut [T]) {
        self.backward_cached(cache, dlogits, grad)
    }

    fn kink_signature(&self, cache: &Self::Cache) -> u64 {
        let mut acc = 0xcbf2_9ce4_8422_2325u64;
        let mut mix = |active: bool| {
            acc ^= active as u64;
            acc = acc.wrapping_mul(0x0100_0000_01b3);
        };
        for l in &cache.layers {
            l.h.iter().for_each(|&v| mix(v > T::zero()));
        }
        cache.hidden.iter().for_each(|&v| mix(v > T::zero()));
        acc
    }
}
