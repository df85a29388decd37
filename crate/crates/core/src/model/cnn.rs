//! 1D convolutional baseline over a single channel of interleaved IQ values.
//!
//! Layout: `same`-padded convolutions with ReLU → flatten (channel-major) →
//! fully-connected ReLU layer → output logits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

#[allow(unused_imports)]
use num_traits::Float;

use super::kernels::{accumulate_weight_grad, axpy, dot, linear, log_softmax, matmul_bt, sigmoid, Scalar};
use super::network::{Network, TensorInfo};
use crate::error::{bail, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CnnConfig {
    /// Interleaved reals per example (twice the complex sample count).
    pub input_len: usize,
    pub conv_channels: Vec<usize>,
    /// Odd kernel width shared by all convolutions.
    pub kernel_size: usize,
    pub dense_hidden: usize,
    pub num_classes: usize,
    pub multi_label: bool,
}

impl CnnConfig {
    /// 1×512 input, convolutions of 256 and 80 filters, 100 hidden units
    /// (about 4.16M parameters).
    pub fn baseline(num_classes: usize) -> Self {
        Self {
            input_len: 512,
            conv_channels: vec![256, 80],
            kernel_size: 3,
            dense_hidden: 100,
            num_classes,
            multi_label: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || !self.input_len.is_multiple_of(2) {
            bail!(InvalidSpec, "input length must be positive and even");
        }
        if self.kernel_size.is_multiple_of(2) || self.conv_channels.contains(&0) || self.dense_hidden == 0 {
            bail!(InvalidSpec, "kernel size must be odd and layer widths positive");
        }
        if self.num_classes == 0 || self.num_classes > 32 {
            bail!(InvalidSpec, "unsupported class count {}", self.num_classes);
        }
        Ok(())
    }

    fn flat_len(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(1) * self.input_len
    }
}

#[derive(Debug, Clone)]
struct ConvIdx {
    w: Range<usize>,
    b: Range<usize>,
    in_ch: usize,
    out_ch: usize,
}

#[derive(Debug, Clone)]
pub struct Cnn<T: Scalar> {
    config: CnnConfig,
    convs: Vec<ConvIdx>,
    fc_w: Range<usize>,
    fc_b: Range<usize>,
    out_w: Range<usize>,
    out_b: Range<usize>,
    tensors: Vec<TensorInfo>,
    params: Vec<T>,
}

impl<T: Scalar> PartialEq for Cnn<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

#[derive(Debug, Clone)]
pub struct CnnCache<T> {
    /// Input followed by every post-ReLU convolution output.
    acts: Vec<Vec<T>>,
    hidden: Vec<T>,
}

/// Number of trainable scalars of `cfg`.
pub fn cnn_param_count(cfg: &CnnConfig) -> usize {
    let mut total = 0;
    let mut in_ch = 1;
    for &c in &cfg.conv_channels {
        total += c * in_ch * cfg.kernel_size + c;
        in_ch = c;
    }
    total + cfg.flat_len() * cfg.dense_hidden + cfg.dense_hidden + cfg.dense_hidden * cfg.num_classes + cfg.num_classes
}

impl<T: Scalar> Cnn<T> {
    pub fn new<R: Rng + ?Sized>(config: CnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: alloc::string::String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            let range = offset..offset + len;
            offset += len;
            tensors.push(TensorInfo {
                name,
                shape,
                range: range.clone(),
            });
            range
        };
        let mut convs = Vec::new();
        let mut in_ch = 1;
        for (l, &out_ch) in config.conv_channels.iter().enumerate() {
            let w = push(format!("conv.{l}.weight"), vec![out_ch, in_ch, config.kernel_size]);
            let b = push(format!("conv.{l}.bias"), vec![out_ch]);
            convs.push(ConvIdx { w, b, in_ch, out_ch });
            in_ch = out_ch;
        }
        let flat = config.flat_len();
        let fc_w = push("dense.fc.weight".into(), vec![flat, config.dense_hidden]);
        let fc_b = push("dense.fc.bias".into(), vec![config.dense_hidden]);
        let out_w = push("dense.out.weight".into(), vec![config.dense_hidden, config.num_classes]);
        let out_b = push("dense.out.bias".into(), vec![config.num_classes]);

        let mut params = vec![T::zero(); offset];
        let fan_in_of = |i: usize| -> usize {
            if i < 2 * convs.len() {
                convs[i / 2].in_ch * config.kernel_size
            } else if i < 2 * convs.len() + 2 {
                flat
            } else {
                config.dense_hidden
            }
        };
        for (i, t) in tensors.iter().enumerate() {
            let bound = 1.0 / (fan_in_of(i) as f64).sqrt();
            for v in &mut params[t.range.clone()] {
                *v = T::of(rng.random_range(-bound..bound));
            }
        }
        Ok(Self {
            config,
            convs,
            fc_w,
            fc_b,
            out_w,
            out_b,
            tensors,
            params,
        })
    }

    pub fn from_params(config: CnnConfig, params: Vec<T>) -> Result<Self> {
        let mut net = Self::new(config, &mut crate::rng_from_seed(0))?;
        if params.len() != net.params.len() {
            bail!(Shape, "expected {} parameters, got {}", net.params.len(), params.len());
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    /// Log-probabilities (single-label) or probabilities (multi-label).
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.config.input_len {
            bail!(Shape, "expected {} inputs, got {}", self.config.input_len, input.len());
        }
        let x: Vec<T> = input.iter().map(|&v| T::of(v)).collect();
        let z: Vec<f64> = self.forward_cached(&x).0.iter().map(|v| v.to_f64_lossy()).collect();
        Ok(if self.config.multi_label {
            z.iter().map(|&v| sigmoid(v)).collect()
        } else {
            log_softmax(&z)
        })
    }

    fn conv_span(&self, kk: usize) -> (isize, usize, usize) {
        let len = self.config.input_len;
        let shift = kk as isize - (self.config.kernel_size / 2) as isize;
        let lo = (-shift).max(0) as usize;
        let hi = (len as isize - shift).min(len as isize) as usize;
        (shift, lo, hi)
    }

    fn forward_cached(&self, x: &[T]) -> (Vec<T>, CnnCache<T>) {
        let len = self.config.input_len;
        let k = self.config.kernel_size;
        let p = &self.params;
        let mut acts: Vec<Vec<T>> = vec![x.to_vec()];
        for c in &self.convs {
            let input = acts.last().expect("input present");
            let w = &p[c.w.clone()];
            let b = &p[c.b.clone()];
            let mut y = vec![T::zero(); c.out_ch * len];
            for o in 0..c.out_ch {
                let yo = &mut y[o * len..(o + 1) * len];
                yo.fill(b[o]);
                for i in 0..c.in_ch {
                    let xi = &input[i * len..(i + 1) * len];
                    for kk in 0..k {
                        let (shift, lo, hi) = self.conv_span(kk);
                        let s = (lo as isize + shift) as usize;
                        axpy(w[(o * c.in_ch + i) * k + kk], &xi[s..s + (hi - lo)], &mut yo[lo..hi]);
                    }
                }
            }
            for v in y.iter_mut() {
                *v = v.max(T::zero());
            }
            acts.push(y);
        }
        let flat = acts.last().expect("non-empty");
        let hdim = self.config.dense_hidden;
        let mut hidden = vec![T::zero(); hdim];
        linear(flat, &p[self.fc_w.clone()], &p[self.fc_b.clone()], 1, flat.len(), hdim, &mut hidden);
        for v in hidden.iter_mut() {
            *v = v.max(T::zero());
        }
        let mut logits = vec![T::zero(); self.config.num_classes];
        linear(&hidden, &p[self.out_w.clone()], &p[self.out_b.clone()], 1, hdim, self.config.num_classes, &mut logits);
        (logits, CnnCache { acts, hidden })
    }

    fn backward_cached(&self, cache: &CnnCache<T>, dlogits: &[T], g: &mut [T]) {
        let len = self.config.input_len;
        let k = self.config.kernel_size;
        let hdim = self.config.dense_hidden;
        let nc = self.config.num_classes;
        let p = &self.params;

        {
            let (lo, hi) = g.split_at_mut(self.out_b.start);
            accumulate_weight_grad(&cache.hidden, dlogits, 1, hdim, nc, &mut lo[self.out_w.clone()], Some(&mut hi[..nc]));
        }
        let mut dh = vec![T::zero(); hdim];
        matmul_bt(dlogits, &p[self.out_w.clone()], 1, nc, hdim, &mut dh, false);
        for (d, &h) in dh.iter_mut().zip(&cache.hidden) {
            if h <= T::zero() {
                *d = T::zero();
            }
        }
        let flat = cache.acts.last().expect("non-empty");
        {
            let (lo, hi) = g.split_at_mut(self.fc_b.start);
            accumulate_weight_grad(flat, &dh, 1, flat.len(), hdim, &mut lo[self.fc_w.clone()], Some(&mut hi[..hdim]));
        }
        let mut dy = vec![T::zero(); flat.len()];
        matmul_bt(&dh, &p[self.fc_w.clone()], 1, hdim, flat.len(), &mut dy, false);

        for (l, c) in self.convs.iter().enumerate().rev() {
            let out = &cache.acts[l + 1];
            for (d, &a) in dy.iter_mut().zip(out) {
                if a <= T::zero() {
                    *d = T::zero();
                }
            }
            let input = &cache.acts[l];
            let w = &p[c.w.clone()];
            let need_dx = l > 0;
            let mut dx = if need_dx { vec![T::zero(); c.in_ch * len] } else { Vec::new() };
            let (gw_part, gb_part) = g.split_at_mut(c.b.start);
            let gw = &mut gw_part[c.w.clone()];
            let gb = &mut gb_part[..c.out_ch];
            for o in 0..c.out_ch {
                let dyo = &dy[o * len..(o + 1) * len];
                gb[o] += dyo.iter().copied().sum::<T>();
                for i in 0..c.in_ch {
                    let xi = &input[i * len..(i + 1) * len];
                    for kk in 0..k {
                        let (shift, lo, hi) = self.conv_span(kk);
                        let s = (lo as isize + shift) as usize;
                        let widx = (o * c.in_ch + i) * k + kk;
                        gw[widx] += dot(&dyo[lo..hi], &xi[s..s + (hi - lo)]);
                        if need_dx {
                            axpy(w[widx], &dyo[lo..hi], &mut dx[i * len + s..i * len + s + (hi - lo)]);
                        }
                    }
                }
            }
            dy = dx;
        }
    }
}

impl<T: Scalar> Network<T> for Cnn<T> {
    type Cache = CnnCache<T>;

    fn input_len(&self) -> usize {
        self.config.input_len
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
        self.tensors.clone()
    }

    fn logits(&self, input: &[T]) -> Vec<T> {
        self.forward_cached(input).0
    }

    fn forward_train(&self, input: &[T]) -> (Vec<T>, Self::Cache) {
        self.forward_cached(input)
    }

    fn backward(&self, cache: &Self::Cache, dlogits: &[T], grad: &mut [T]) {
        self.backward_cached(cache, dlogits, grad)
    }

    fn kink_signature(&self, cache: &Self::Cache) -> u64 {
        let mut acc = 0xcbf2_9ce4_8422_2325u64;
        for v in cache.acts.iter().skip(1).flatten().chain(&cache.hidden) {
            acc ^= (*v > T::zero()) as u64;
            acc = acc.wrapping_mul(0x0100_0000_01b3);
        }
        acc
    }
}
