//! Layer implementations and the sequential container.
//!
//! Layers cache what backpropagation needs only during train-mode forward
//! passes; calling `backward` after an eval-mode pass (or before any pass)
//! is an error. Parameter gradients accumulate until [`Sequential::zero_grad`].

use std::fmt::Debug;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{matmul, Real, Tensor};
use super::{Mode, NnError};

/// A named parameter tensor. Buffers (such as batch-norm running statistics)
/// carry no gradient and are skipped by the optimizer.
#[derive(Debug, Clone)]
pub struct Param<S: Real> {
    pub name: &'static str,
    pub value: Tensor<S>,
    pub grad: Option<Tensor<S>>,
}

impl<S: Real> Param<S> {
    fn trainable(name: &'static str, value: Tensor<S>) -> Self {
        let grad = Some(Tensor::zeros(value.shape()));
        Self { name, value, grad }
    }

    fn buffer(name: &'static str, value: Tensor<S>) -> Self {
        Self { name, value, grad: None }
    }

    pub fn is_trainable(&self) -> bool {
        self.grad.is_some()
    }
}

pub trait Layer<S: Real>: Send + Debug {
    fn kind(&self) -> &'static str;
    fn name(&self) -> &str;
    /// Per-item input shape (without the batch dimension).
    fn input_shape(&self) -> &[usize];
    fn output_shape(&self) -> Vec<usize>;
    fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>, NnError>;
    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>, NnError>;
    /// Like [`Layer::backward`] but the input gradient is not needed.
    fn backward_params(&mut self, grad: &Tensor<S>) -> Result<(), NnError> {
        self.backward(grad).map(|_| ())
    }
    fn params(&self) -> Vec<&Param<S>> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        Vec::new()
    }
    fn clear_cache(&mut self) {}
    /// Restarts any internal random stream (dropout masks).
    fn reseed(&mut self, _seed: u64) {}

    fn check_input(&self, x: &Tensor<S>) -> Result<(), NnError> {
        if x.shape().len() < 2 || x.shape()[1..] != *self.input_shape() {
            return Err(NnError::ShapeMismatch {
                layer: self.name().to_owned(),
                expected: format!("[B, {}]", self.input_shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn check_grad(&self, grad: &Tensor<S>, batch: usize) -> Result<(), NnError> {
        let out = self.output_shape();
        if grad.shape().len() < 2 || grad.batch() != batch || grad.shape()[1..] != out[..] {
            return Err(NnError::ShapeMismatch {
                layer: self.name().to_owned(),
                expected: format!("gradient [{batch}, {}]", out.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
                got: grad.shape().to_vec(),
            });
        }
        Ok(())
    }
}

fn no_forward(name: &str) -> NnError {
    NnError::BackwardBeforeForward { layer: name.to_owned() }
}

fn with_batch(batch: usize, item: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(item.len() + 1);
    s.push(batch);
    s.extend_from_slice(item);
    s
}

fn xavier<S: Real>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| S::lit(rng.random_range(-limit..limit)))
}

/// Local response normalization across channels:
/// `b_c = a_c / (k + alpha · Σ_{|c'-c| ≤ size/2} a_c'^2)^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        Self { size: 5, alpha: 1e-4, beta: 0.75, k: 2.0 }
    }
}

/// Declarative description of one layer, validated when a graph is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) cross-correlation with square kernels.
    Conv2d { filters: usize, kernel: usize, stride: usize },
    Relu,
    /// Per-channel normalization; `momentum` weights the old running value.
    BatchNorm { momentum: f64, eps: f64 },
    Lrn(LrnParams),
    MaxPool { kernel: usize, stride: usize },
    /// Fully connected; flattens its input.
    Dense { units: usize },
    /// Inverted dropout keeping each value with probability `keep`.
    Dropout { keep: f64 },
    Softmax,
    /// Feature concatenation of several `[B, n_i]` inputs. Multi-input, so it
    /// is applied with [`super::concat_features`] rather than inside a
    /// [`Sequential`].
    Concat { widths: Vec<usize> },
}

impl LayerSpec {
    pub fn batch_norm() -> Self {
        LayerSpec::BatchNorm { momentum: 0.9, eps: 1e-5 }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidSpec(m));
        match self {
            LayerSpec::Conv2d { filters, kernel, stride } if *filters == 0 || *kernel == 0 || *stride == 0 => {
                bad(format!("conv2d needs positive filters/kernel/stride, got {filters}/{kernel}/{stride}"))
            }
            LayerSpec::BatchNorm { momentum, eps } if !(0.0..1.0).contains(momentum) || !(*eps > 0.0) => {
                bad(format!("batchnorm momentum {momentum} / eps {eps} invalid"))
            }
            LayerSpec::Lrn(p) if p.size == 0 || p.size % 2 == 0 || !(p.k > 0.0) || p.alpha < 0.0 || p.beta < 0.0 => {
                bad(format!("lrn parameters invalid: {p:?}"))
            }
            LayerSpec::MaxPool { kernel, stride } if *kernel == 0 || *stride == 0 => {
                bad(format!("maxpool needs positive kernel/stride, got {kernel}/{stride}"))
            }
            LayerSpec::Dense { units: 0 } => bad("dense needs at least one unit".into()),
            LayerSpec::Dropout { keep } if !(*keep > 0.0 && *keep <= 1.0) => bad(format!("dropout keep {keep} not in (0, 1]")),
            LayerSpec::Concat { widths } if widths.is_empty() || widths.contains(&0) => {
                bad(format!("concat widths {widths:?} must be non-empty and positive"))
            }
            _ => Ok(()),
        }
    }

    /// Instantiates the layer for per-item input shape `input`.
    pub fn build<S: Real>(&self, name: &str, input: &[usize], rng: &mut ChaCha8Rng) -> Result<Box<dyn Layer<S>>, NnError> {
        self.validate()?;
        let shape_err = |what: &str| NnError::InvalidSpec(format!("layer {name}: {what} (input {input:?})"));
        Ok(match self {
            LayerSpec::Conv2d { filters, kernel, stride } => {
                let [c, h, w] = input[..] else { return Err(shape_err("conv2d expects [C, H, W]")) };
                if *kernel > h || *kernel > w {
                    return Err(shape_err("kernel larger than input"));
                }
                Box::new(Conv2d::new(name, [c, h, w], *filters, *kernel, *stride, rng))
            }
            LayerSpec::Relu => Box::new(Relu::new(name, input)),
            LayerSpec::BatchNorm { momentum, eps } => Box::new(BatchNorm::new(name, input, *momentum, *eps)),
            LayerSpec::Lrn(p) => {
                if input.is_empty() {
                    return Err(shape_err("lrn needs a channel axis"));
                }
                Box::new(Lrn::new(name, input, *p))
            }
            LayerSpec::MaxPool { kernel, stride } => {
                let [c, h, w] = input[..] else { return Err(shape_err("maxpool expects [C, H, W]")) };
                if *kernel > h || *kernel > w {
                    return Err(shape_err("pool kernel larger than input"));
                }
                Box::new(MaxPool2d::new(name, [c, h, w], *kernel, *stride))
            }
            LayerSpec::Dense { units } => Box::new(Dense::new(name, input, *units, rng)),
            LayerSpec::Dropout { keep } => Box::new(Dropout::new(name, input, *keep, rng.random())),
            LayerSpec::Softmax => Box::new(Softmax::new(name, input)),
            LayerSpec::Concat { .. } => {
                return Err(NnError::InvalidSpec(format!("layer {name}: concat takes several inputs; use concat_features")))
            }
        })
    }
}

// ---------------------------------------------------------------- conv2d

#[derive(Debug)]
pub struct Conv2d<S: Real> {
    name: String,
    input: [usize; 3],
    filters: usize,
    kernel: usize,
    stride: usize,
    out_hw: [usize; 2],
    weight: Param<S>,
    bias: Param<S>,
    cols: Option<(usize, Vec<S>)>,
}

impl<S: Real> Conv2d<S> {
    pub fn new(name: &str, input: [usize; 3], filters: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let [c, h, w] = input;
        let out_hw = [(h - kernel) / stride + 1, (w - kernel) / stride + 1];
        let kk = kernel * kernel;
        let weight = xavier(&[filters, c, kernel, kernel], c * kk, filters * kk, rng);
        Self {
            name: name.to_owned(),
            input,
            filters,
            kernel,
            stride,
            out_hw,
            weight: Param::trainable("weight", weight),
            bias: Param::trainable("bias", Tensor::zeros(&[filters])),
            cols: None,
        }
    }

    fn patch_len(&self) -> usize {
        self.input[0] * self.kernel * self.kernel
    }

    fn im2col(&self, x: &[S], cols: &mut [S]) {
        let [c, h, w] = self.input;
        let [oh, ow] = self.out_hw;
        let (k, s) = (self.kernel, self.stride);
        let p = oh * ow;
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let src = &x[(ci * h + oy * s + ky) * w..];
                        let d = &mut dst[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            d.copy_from_slice(&src[kx..kx + ow]);
                        } else {
                            for (ox, v) in d.iter_mut().enumerate() {
                                *v = src[ox * s + kx];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[S], dx: &mut [S]) {
        let [c, h, w] = self.input;
        let [oh, ow] = self.out_hw;
        let (k, s) = (self.kernel, self.stride);
        let p = oh * ow;
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let base = (ci * h + oy * s + ky) * w + kx;
                        for ox in 0..ow {
                            dx[base + ox * s] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }

    fn backward_inner(&mut self, grad: &Tensor<S>, need_dx: bool) -> Result<Option<Tensor<S>>, NnError> {
        let (batch, cols) = self.cols.take().ok_or_else(|| no_forward(&self.name))?;
        self.check_grad(grad, batch)?;
        let pl = self.patch_len();
        let p = self.out_hw[0] * self.out_hw[1];
        let f = self.filters;
        let mut dx = need_dx.then(|| Tensor::zeros(&with_batch(batch, &self.input)));
        let mut dcols = if need_dx { vec![S::zero(); pl * p] } else { Vec::new() };
        {
            let dw = self.weight.grad.as_mut().expect("trainable").data_mut();
            for b in 0..batch {
                matmul(grad.item(b), false, &cols[b * pl * p..(b + 1) * pl * p], true, dw, f, p, pl, S::one());
            }
        }
        let db = self.bias.grad.as_mut().expect("trainable").data_mut();
        for b in 0..batch {
            for (fi, g) in grad.item(b).chunks_exact(p).enumerate() {
                db[fi] += g.iter().copied().sum::<S>();
            }
        }
        if let Some(dx) = dx.as_mut() {
            for b in 0..batch {
                matmul(self.weight.value.data(), true, grad.item(b), false, &mut dcols, pl, f, p, S::zero());
                self.col2im(&dcols, dx.item_mut(b));
            }
        }
        Ok(dx)
    }
}

impl<S: Real> Layer<S> for Conv2d<S> {
    fn kind(&self) -> &'static str {
        "conv2d"
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn input_shape(&self) -> &[usize] {
        &self.input
    }
    fn output_shape(&self) -> Vec<usize> {
        vec![self.filters, self.out_hw[0], self.out_hw[1]]
    }

    fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>, NnError> {
        self.check_input(x)?;
        let batch = x.batch();
        let pl = self.patch_len();
        let p = self.out_hw[0] * self.out_hw[1];
        let f = self.filters;
        let mut out = Tensor::zeros(&with_batch(batch, &self.output_shape()));
        let keep = mode == Mode::Train;
        let mut cols = vec![S::zero(); if keep { batch * pl * p } else { pl * p }];
        for b in 0..batch {
            let c = if keep { &mut cols[b * pl * p..(b + 1) * pl * p] } else { &mut cols[..] };
            self.im2col(x.item(b), c);
            let o = out.item_mut(b);
            matmul(self.weight.value.data(), false, c, false, o, f, pl, p, S::zero());
            for (fi, row) in o.chunks_exact_mut(p).enumerate() {
                let bias = self.bias.value.data()[fi];
                row.iter_mut().for_each(|v| *v += bias);
            }
        }
        self.cols = keep.then_some((batch, cols));
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        Ok(self.backward_inner(grad, true)?.expect("input gradient requested"))
    }

    fn backward_params(&mut self, grad: &Tensor<S>) -> Result<(), NnError> {
        self.backward_inner(grad, false).map(|_| ())
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
    fn clear_cache(&mut self) {
        self.cols = None;
    }
}

// ------------------------------------------------------------------ relu

#[derive(Debug)]
pub struct Relu {
    name: String,
    input: Vec<usize>,
    mask: Option<(usize, Vec<bool>)>,
}

impl Relu {
    pub fn new(name: &str, input: &[usize]) -> Self {
        Self { name: name.to_owned(), input: input.to_vec(), mask: None }
    }
}

impl<S: Real> Layer<S> for Relu {
    fn kind(&self) -> &'static str {
        "relu"
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn input_shape(&self) -> &[usize] {
        &self.input
    }
    fn output_shape(&self) -> Vec<usize> {
        self.input.clone()
    }

    fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>, NnError> {
        self.check_input(x)?;
        let mut out = x.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(S::zero()));
        self.mask = (mode == Mode::Train).then(|| (x.batch(), x.data().iter().map(|v| *v > S::zero()).collect()));
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let (batch, mask) = self.mask.take().ok_or_else(|| no_forward(&self.name))?;
        Layer::<S>::check_grad(self, grad, batch)?;
        let mut dx = grad.clone();
        dx.data_mut().iter_mut().zip(&mask).for_each(|(g, &m)| {
            if !m {
                *g = S::zero()
            }
        });
        Ok(dx)
    }
    fn clear_cache(&mut self) {
        self.mask = None;
    }
}

// ------------------------------------------------------------- batchnorm

#[derive(Debug)]
pub struct BatchNorm<S: Real> {
    name: String,
    input: Vec<usize>,
    momentum: f64,
    eps: f64,
    gamma: Param<S>,
    beta: Param<S>,
    running_mean: Param<S>,
    running_var: Param<S>,
    cache: Option<(Tensor<S>, Vec<S>)>,
}

impl<S: Real> BatchNorm<S> {
    pub fn new(name: &str, input: &[usize], momentum: f64, eps: f64) -> Self {
        let c = input[0];
        Self {
            name: name.to_owned(),
            input: input.to_vec(),
            momentum,
            eps,
            gamma: Param::trainable("gamma", Tensor::full(&[c], S::one())),
            beta: Param::trainable("beta", Tensor::zeros(&[c])),
            running_mean: Param::buffer("running_mean", Tensor::zeros(&[c])),
            running_var: Param::buffer("running_var", Tensor::full(&[c], S::one())),
            cache: None,
        }
    }

    fn channels(&self) -> usize {
        self.input[0]
    }

    fn spatial(&self) -> usize {
        self.input[1..].iter().product()
    }
}

impl<S: Real> Layer<S> for BatchNorm<S> {
    fn kind(&self) -> &'static str {
        "batchnorm"
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn input_shape(&self) -> &[usize] {
        &self.input
    }
    fn output_shape(&self) -> Vec<usize> {
        self.input.clone()
    }

    fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>, NnError> {
        self.check_input(x)?;
        let (c, sp, batch) = (self.channels(), self.spatial(), x.batch());
        let mut out = Tensor::zeros(x.shape());
        let gamma = self.gamma.value.data().to_vec();
        let beta = self.beta.value.data().to_vec();
        match mode {
            Mode::Eval => {
                for ch in 0..c {
                    let mean = self.running_mean.value.data()[ch];
                    let inv = S::one() / (self.running_var.value.data()[ch] + S::lit(self.eps)).sqrt();
                    let (g, bt) = (gamma[ch] * inv, beta[ch]);
                    for b in 0..batch {
                        let off = (b * c + ch) * sp;
                        for i in off..off + sp {
                            out.data_mut()[i] = (x.data()[i] - mean) * g + bt;
                        }
                    }
                }
                self.cache = None;
            }
            Mode::Train => {
                let n = (batch * sp) as f64;
                let mut xhat = Tensor::zeros(x.shape());
                let mut inv_std = vec![S::zero(); c];
                let m = S::lit(self.momentum);
                for ch in 0..c {
                    let mut sum = 0.0;
                    for b in 0..batch {
                        let off = (b * c + ch) * sp;
                        sum += x.data()[off..off + sp].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                    let mean = sum / n;
                    let mut ss = 0.0;
                    for b in 0..batch {
                        let off = (b * c + ch) * sp;
                        ss += x.data()[off..off + sp].iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
                    }
                    let var = ss / n;
                    let inv = 1.0 / (var + self.eps).sqrt();
                    inv_std[ch] = S::lit(inv);
                    let (mean_s, inv_s) = (S::lit(mean), S::lit(inv));
                    for b in 0..batch {
                        let off = (b * c + ch) * sp;
                        for i in off..off + sp {
                            let xh = (x.data()[i] - mean_s) * inv_s;
                            xhat.data_mut()[i] = xh;
                            out.data_mut()[i] = gamma[ch] * xh + beta[ch];
                        }
                    }
                    let unbiased = if n > 1.0 { var * n / (n - 1.0) } else { var };
                    let rm = &mut self.running_mean.value.data_mut()[ch];
                    *rm = m * *rm + (S::one() - m) * mean_s;
                    let rv = &mut self.running_var.value.data_mut()[ch];
                    *rv = m * *rv + (S::one() - m) * S::lit(unbiased);
                }
                self.cache = Some((xhat, inv_std));
            }
        }
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let (xhat, inv_std) = self.cache.take().ok_or_else(|| no_forward(&self.name))?;
        self.check_grad(grad, xhat.batch())?;
        let (c, sp, batch) = (self.channels(), self.spatial(), xhat.batch());
        let n = S::lit((batch * sp) as f64);
        let mut dx = Tensor::zeros(grad.shape());
        for ch in 0..c {
            let (mut sum_dy, mut sum_dy_xhat) = (S::zero(), S::zero());
            for b in 0..batch {
                let off = (b * c + ch) * sp;
                for i in off..off + sp {
                    sum_dy += grad.data()[i];
                    sum_dy_xhat += grad.data()[i] * xhat.data()[i];
                }
            }
            self.gamma.grad.as_mut().expect("trainable").data_mut()[ch] += sum_dy_xhat;
            self.beta.grad.as_mut().expect("trainable").data_mut()[ch] += sum_dy;
            let g = self.gamma.value.data()[ch];
            let scale = g * inv_std[ch] / n;
            for b in 0..batch {
                let off = (b * c + ch) * sp;
                for i in off..off + sp {
                    dx.data_mut()[i] = scale * (n * grad.data()[i] - sum_dy - xhat.data()[i] * sum_dy_xhat);
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
    fn clear_cache(&mut self) {
        self.cache = None;
    }
}

// ------------------------------------------------------------------- lrn

#[derive(Debug)]
pub struct Lrn<S: Real> {
    name: String,
    input: Vec<usize>,
    p: LrnParams,
    cache: Option<(Tensor<S>, Vec<S>)>,
}

impl<S: Real> Lrn<S> {
    pub fn new(name: &str, input: &[usize], p: LrnParams) -> Self {
        Self { name: name.to_owned(), input: input.to_vec(), p, cache: None }
    }

    /// `s^(-beta)`, with a sqrt-only path for the common `beta = 0.75`.
    fn pow_neg_beta(&self, s: S) -> S {
        if self.p.beta == 0.75 {
            let r = s.sqrt();
            S::one() / (r * r.sqrt())
        } else {
            s.powf(S::lit(-self.p.beta))
        }
    }

    /// Per-value denominators `k + alpha · windowed sum of squares`.
    fn scales(&self, x: &Tensor<S>) -> Vec<S> {
        let c = self.input[0];
        let sp: usize = self.input[1..].iter().product();
        let half = self.p.size / 2;
        let (alpha, k) = (S::lit(self.p.alpha), S::lit(self.p.k));
        let mut scale = vec![S::zero(); x.len()];
        let mut sq = vec![S::zero(); c * sp];
        for b in 0..x.batch() {
            let xi = x.item(b);
            sq.iter_mut().zip(xi).for_each(|(s, v)| *s = *v * *v);
            let out = &mut scale[b * c * sp..(b + 1) * c * sp];
            for ch in 0..c {
                let dst = &mut out[ch * sp..(ch + 1) * sp];
                dst.iter_mut().for_each(|v| *v = S::zero());
                for cc in ch.saturating_sub(half)..=(ch + half).min(c - 1) {
                    dst.iter_mut().zip(&sq[cc * sp..(cc + 1) * sp]).for_each(|(d, s)| *d += *s);
                }
                dst.iter_mut().for_each(|d| *d = k + alpha * *d);
            }
        }
        scale
    }
}

impl<S: Real> Layer<S> for Lrn<S> {
    fn kind(&self) -> &'static str {
        "lrn"
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn input_shape(&self) -> &[usize] {
        &self.input
    }
    fn output_shape(&self) -> Vec<usize> {
        self.input.clone()
    }

    fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>, NnError> {
        self.check_input(x)?;
        let scale = self.scales(x);
        let mut out = x.clone();
        out.data_mut().iter_mut().zip(&scale).for_each(|(v, s)| *v *= self.pow_neg_beta(*s));
        self.cache = (mode == Mode::Train).then(|| (x.clone(), scale));
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let (x, scale) = self.cache.take().ok_or_else(|| no_forward(&self.name))?;
        self.check_grad(grad, x.batch())?;
        let c = self.input[0];
        let sp: usize = self.input[1..].iter().product();
        let half = self.p.size / 2;
        let coef = S::lit(2.0 * self.p.alpha * self.p.beta);
        // t = dy · a · s^(-beta-1)
        let t: Vec<S> = grad
            .data()
            .iter()
            .zip(x.data())
            .zip(&scale)
            .map(|((g, a), s)| *g * *a * self.pow_neg_beta(*s) / *s)
            .collect();
        let mut dx = Tensor::zeros(grad.shape());
        for b in 0..x.batch() {
            let base = b * c * sp;
            for ch in 0..c {
                let off = base + ch * sp;
                let mut acc = vec![S::zero(); sp];
                for cc in ch.saturating_sub(half)..=(ch + half).min(c - 1) {
                    let o = base + cc * sp;
                    acc.iter_mut().zip(&t[o..o + sp]).for_each(|(a, v)| *a += *v);
                }
                for i in 0..sp {
                    let j = off + i;
                    dx.data_mut()[j] = grad.data()[j] * self.pow_neg_beta(scale[j]) - coef * x.data()[j] * acc[i];
                }
            }
        }
        Ok(dx)
    }
    fn clear_cache(&mut self) {
        self.cache = None;
    }
}

// --------------------------------------------------------------- maxpool

#[derive(Debug)]
pub struct MaxPool2d {
    name: String,
    input: [usize; 3],
    kernel: usize,
    stride: usize,
    out_hw: [usize; 2],
    argmax: Option<(usize, Vec<u32>)>,
}

impl MaxPool2d {
    pub fn new(name: &str, input: [usize; 3], kernel: usize, stride: usize) -> Self {
        let out_hw = [(input[1] - kernel) / stride + 1, (input[2] - kernel) / stride + 1];
        Self { name: name.to_owned(), input, kernel, stride, out_hw, argmax: None }
    }
}

impl<S: Real> Layer<S> for MaxPool2d {
    fn kind(&self) -> &'static str {
        "maxpool"
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn input_shape(&self) -> &[usize] {
        &self.input
    }
    fn output_shape(&self) -> Vec<usize> {
        vec![self.input[0], self.out_hw[0], self.out_hw[1]]
    }

    fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>, NnError> {
        Layer::<S>::check_input(self, x)?;
        let [c, h, w] = self.input;
        let [oh, ow] = self.out_hw;
        let batch = x.batch();
        let mut out = Tensor::zeros(&[batch, c, oh, ow]);
        let mut idx = vec![0u32; batch * c * oh * ow];
        for b in 0..batch {
            let xi = x.item(b);
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = ch * h * w + (oy * self.stride) * w + ox * self.stride;
                        for ky in 0..self.kernel {
                            for kx in 0..self.kernel {
                                let j = ch * h * w + (oy * self.stride + ky) * w + ox * self.stride + kx;
                                if xi[j] > xi[best] {
                                    best = j;
                                }
                            }
                        }
                        let o = ((b * c + ch) * oh + oy) * ow + ox;
                        out.data_mut()[o] = xi[best];
                        idx[o] = best as u32;
                    }
                }
            }
        }
        self.argmax = (mode == Mode::Train).then_some((batch, idx));
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let (batch, idx) = self.argmax.take().ok_or_else(|| no_forward(&self.name))?;
        Layer::<S>::check_grad(self, grad, batch)?;
        let mut dx = Tensor::zeros(&with_batch(batch, &self.input));
        let per_out = grad.item_len();
        for b in 0..batch {
            let d = dx.item_mut(b);
            for (o, g) in grad.item(b).iter().enumerate() {
                d[idx[b * per_out + o] as usize] += *g;
            }
        }
        Ok(dx)
    }
    fn clear_cache(&mut self) {
        self.argmax = None;
    }
}

// ----------------------------------------------------------------- dense

#[derive(Debug)]
pub struct Dense<S: Real> {
    name: String,
    input: Vec<usize>,
    in_features: usize,
    units: usize,
    weight: Param<S>,
    bias: Param<S>,
    x: Option<Tensor<S>>,
}

impl<S: Real> Dense<S> {
    pub fn new(name: &str, input: &[usize], units: usize, rng: &mut impl Rng) -> Self {
        let in_features = input.iter().product();
        Self {
            name: name.to_owned(),
            input: input.to_vec(),
            in_features,
            units,
            weight: Param::trainable("weight", xavier(&[units, in_features], in_features, units, rng)),
            bias: Param::trainable("bias", Tensor::zeros(&[units])),
            x: None,
        }
    }

    fn backward_inner(&mut self, grad: &Tensor<S>, need_dx: bool) -> Result<Option<Tensor<S>>, NnError> {
        let x = self.x.take().ok_or_else(|| no_forward(&self.name))?;
        let batch = x.batch();
        self.check_grad(grad, batch)?;
        let (n_in, n_out) = (self.in_features, self.units);
        matmul(grad.data(), true, x.data(), false, self.weight.grad.as_mut().expect("trainable").data_mut(), n_out, batch, n_in, S::one());
        let db = self.bias.grad.as_mut().expect("trainable").data_mut();
        for b in 0..batch {
            db.iter_mut().zip(grad.item(b)).for_each(|(d, g)| *d += *g);
        }
        if !need_dx {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(&with_batch(batch, &self.input));
        matmul(grad.data(), false, self.weight.value.data(), false, dx.data_mut(), batch, n_out, n_in, S::zero());
        Ok(Some(dx))
    }
}

impl<S: Real> Layer<S> for Dense<S> {
    fn kind(&self) -> &'static str {
        "dense"
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn input_shape(&self) -> &[usize] {
        &self.input
    }
    fn output_shape(&self) -> Vec<usize> {
        vec![self.units]
    }

    fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>, NnError> {
        self.check_input(x)?;
        let batch = x.batch();
        let mut out = Tensor::zeros(&[batch, self.units]);
        for b in 0..batch {
            out.item_mut(b).copy_from_slice(self.bias.value.data());
        }
        matmul(x.data(), false, self.weight.value.data(), true, out.data_mut(), batch, self.in_features, self.units, S::one());
        self.x = (mode == Mode::Train).then(|| x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        Ok(self.backward_inner(grad, true)?.expect("input gradient requested"))
    }

    fn backward_params(&mut self, grad: &Tensor<S>) -> Result<(), NnError> {
        self.backward_inner(grad, false).map(|_| ())
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
    fn clear_cache(&mut self) {
        self.x = None;
    }
}

// --------------------------------------------------------------- dropout

#[derive(Debug)]
pub struct Dropout<S: Real> {
    name: String,
    input: Vec<usize>,
    keep: f64,
    rng: ChaCha8Rng,
    mask: Option<(usize, Vec<S>)>,
}

impl<S: Real> Dropout<S> {
    pub fn new(name: &str, input: &[usize], keep: f64, seed: u64) -> Self {
        Self { name: name.to_owned(), input: input.to_vec(), keep, rng: ChaCha8Rng::seed_from_u64(seed), mask: None }
    }

}

impl<S: Real> Layer<S> for Dropout<S> {
    fn kind(&self) -> &'static str {
        "dropout"
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn input_shape(&self) -> &[usize] {
        &self.input
    }
    fn output_shape(&self) -> Vec<usize> {
        self.input.clone()
    }

    fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>, NnError> {
        self.check_input(x)?;
        if mode == Mode::Eval {
            self.mask = None;
            return Ok(x.clone());
        }
        let scale = S::lit(1.0 / self.keep);
        let mask: Vec<S> = (0..x.len()).map(|_| if self.rng.random_bool(self.keep) { scale } else { S::zero() }).collect();
        let mut out = x.clone();
        out.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= *m);
        self.mask = Some((x.batch(), mask));
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let (batch, mask) = self.mask.take().ok_or_else(|| no_forward(&self.name))?;
        self.check_grad(grad, batch)?;
        let mut dx = grad.clone();
        dx.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= *m);
        Ok(dx)
    }
    fn clear_cache(&mut self) {
        self.mask = None;
    }
    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

// --------------------------------------------------------------- softmax

/// Row-wise softmax over each item's values.
pub fn softmax_rows<S: Real>(x: &Tensor<S>) -> Tensor<S> {
    let mut out = x.clone();
    for b in 0..x.batch() {
        let row = out.item_mut(b);
        let max = row.iter().fold(S::neg_infinity(), |m, v| m.max(*v));
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v = *v / sum);
    }
    out
}

#[derive(Debug)]
pub struct Softmax<S: Real> {
    name: String,
    input: Vec<usize>,
    y: Option<Tensor<S>>,
}

impl<S: Real> Softmax<S> {
    pub fn new(name: &str, input: &[usize]) -> Self {
        Self { name: name.to_owned(), input: input.to_vec(), y: None }
    }
}

impl<S: Real> Layer<S> for Softmax<S> {
    fn kind(&self) -> &'static str {
        "softmax"
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn input_shape(&self) -> &[usize] {
        &self.input
    }
    fn output_shape(&self) -> Vec<usize> {
        self.input.clone()
    }

    fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>, NnError> {
        self.check_input(x)?;
        let y = softmax_rows(x);
        self.y = (mode == Mode::Train).then(|| y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let y = self.y.take().ok_or_else(|| no_forward(&self.name))?;
        self.check_grad(grad, y.batch())?;
        let mut dx = Tensor::zeros(grad.shape());
        for b in 0..y.batch() {
            let (yi, gi) = (y.item(b), grad.item(b));
            let dot: S = yi.iter().zip(gi).map(|(a, g)| *a * *g).sum();
            dx.item_mut(b).iter_mut().zip(yi.iter().zip(gi)).for_each(|(d, (a, g))| *d = *a * (*g - dot));
        }
        Ok(dx)
    }
    fn clear_cache(&mut self) {
        self.y = None;
    }
}

// ------------------------------------------------------------ sequential

/// A chain of single-input layers.
#[derive(Debug)]
pub struct Sequential<S: Real> {
    layers: Vec<Box<dyn Layer<S>>>,
    input: Vec<usize>,
}

impl<S: Real> Sequential<S> {
    /// Builds and shape-checks the chain for per-item input shape `input`.
    pub fn build(input: &[usize], specs: &[(&str, LayerSpec)], rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        let mut layers: Vec<Box<dyn Layer<S>>> = Vec::with_capacity(specs.len());
        let mut shape = input.to_vec();
        let mut names = std::collections::HashSet::new();
        for (name, spec) in specs {
            if !names.insert(*name) {
                return Err(NnError::InvalidSpec(format!("duplicate layer name {name}")));
            }
            let layer = spec.build::<S>(name, &shape, rng)?;
            shape = layer.output_shape();
            layers.push(layer);
        }
        Ok(Self { layers, input: input.to_vec() })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers.last().map(|l| l.output_shape()).unwrap_or_else(|| self.input.clone())
    }

    pub fn layers(&self) -> &[Box<dyn Layer<S>>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer<S>>] {
        &mut self.layers
    }

    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>, NnError> {
        let mut cur: Option<Tensor<S>> = None;
        for layer in &mut self.layers {
            let next = layer.forward(cur.as_ref().unwrap_or(x), mode)?;
            if !next.all_finite() {
                return Err(NnError::NonFinite { layer: layer.name().to_owned() });
            }
            cur = Some(next);
        }
        Ok(cur.unwrap_or_else(|| x.clone()))
    }

    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Backward pass that skips the gradient with respect to the input.
    pub fn backward_params(&mut self, grad: &Tensor<S>) -> Result<(), NnError> {
        let Some((first, rest)) = self.layers.split_first_mut() else { return Ok(()) };
        let mut g = grad.clone();
        for layer in rest.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        first.backward_params(&g)
    }

    /// `(qualified name, param)` pairs in declaration order.
    pub fn named_params(&self) -> Vec<(String, &Param<S>)> {
        self.layers
            .iter()
            .flat_map(|l| l.params().into_iter().map(move |p| (format!("{}.{}", l.name(), p.name), p)))
            .collect()
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param<S>)> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let name = l.name().to_owned();
                l.params_mut().into_iter().map(move |p| (format!("{name}.{}", p.name), p))
            })
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            if let Some(g) = p.grad.as_mut() {
                g.fill(S::zero());
            }
        }
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(|l| l.clear_cache());
    }

    /// Reseeds every random layer from `seed` (layer `i` gets `seed + i`).
    pub fn reseed(&mut self, seed: u64) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.reseed(seed.wrapping_add(i as u64));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn identity_dense() {
        let mut d = Dense::<f64>::new("d", &[4], 4, &mut rng());
        d.weight.value = Tensor::from_fn(&[4, 4], |i| if i % 5 == 0 { 1.0 } else { 0.0 });
        let x = Tensor::from_fn(&[2, 4], |i| i as f64 - 3.0);
        assert_eq!(d.forward(&x, Mode::Eval).unwrap(), x);
    }

    #[test]
    fn conv_delta_reproduces_kernel() {
        // cross-correlation: a centered delta yields the kernel rotated by 180°
        let mut conv = Conv2d::<f64>::new("c", [1, 9, 9], 1, 5, 1, &mut rng());
        conv.weight.value = Tensor::from_fn(&[1, 1, 5, 5], |i| i as f64 + 1.0);
        let mut x = Tensor::zeros(&[1, 1, 9, 9]);
        x.data_mut()[4 * 9 + 4] = 1.0;
        let y = conv.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 1, 5, 5]);
        for i in 0..25 {
            assert_eq!(y.data()[i], 25.0 - i as f64);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::<f64>::from_fn(&[3, 100], |i| ((i * 37) % 11) as f64 * 3.0 - 12.0);
        let y = softmax_rows(&x);
        for b in 0..3 {
            assert!((y.item(b).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_without_forward_errors() {
        let mut d = Dense::<f64>::new("fc", &[3], 2, &mut rng());
        let g = Tensor::zeros(&[1, 2]);
        assert!(matches!(d.backward(&g), Err(NnError::BackwardBeforeForward { layer }) if layer == "fc"));
        d.forward(&Tensor::zeros(&[1, 3]), Mode::Eval).unwrap();
        assert!(d.backward(&g).is_err(), "eval forward does not enable backward");
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let mut seq = Sequential::<f32>::build(
            &[3, 8, 8],
            &[("conv1", LayerSpec::Conv2d { filters: 2, kernel: 3, stride: 1 }), ("relu1", LayerSpec::Relu)],
            &mut rng(),
        )
        .unwrap();
        let err = seq.forward(&Tensor::zeros(&[1, 2, 8, 8]), Mode::Eval).unwrap_err();
        assert!(err.to_string().contains("conv1"), "{err}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut r = rng();
        assert!(LayerSpec::Dense { units: 0 }.build::<f32>("d", &[4], &mut r).is_err());
        assert!(LayerSpec::Dropout { keep: 0.0 }.validate().is_err());
        assert!(LayerSpec::Conv2d { filters: 1, kernel: 9, stride: 1 }.build::<f32>("c", &[1, 5, 5], &mut r).is_err());
        assert!(LayerSpec::Lrn(LrnParams { size: 4, ..Default::default() }).validate().is_err());
        assert!(LayerSpec::MaxPool { kernel: 2, stride: 0 }.validate().is_err());
        assert!(LayerSpec::Concat { widths: vec![] }.validate().is_err());
        assert!(LayerSpec::Concat { widths: vec![2, 3] }.build::<f32>("cat", &[5], &mut r).is_err());
        assert!(Sequential::<f32>::build(&[4], &[("a", LayerSpec::Relu), ("a", LayerSpec::Relu)], &mut r).is_err());
    }

    #[test]
    fn maxpool_shapes() {
        let mut r = rng();
        let seq = Sequential::<f32>::build(
            &[6, 64, 64],
            &[
                ("c1", LayerSpec::Conv2d { filters: 4, kernel: 5, stride: 1 }),
                ("p1", LayerSpec::MaxPool { kernel: 2, stride: 2 }),
                ("c2", LayerSpec::Conv2d { filters: 4, kernel: 5, stride: 1 }),
                ("p2", LayerSpec::MaxPool { kernel: 2, stride: 2 }),
            ],
            &mut r,
        )
        .unwrap();
        assert_eq!(seq.output_shape(), vec![4, 13, 13]);
    }

    #[test]
    fn dropout_eval_is_identity_and_train_preserves_mean() {
        let mut d = Dropout::<f64>::new("drop", &[10_000], 0.75, 9);
        let x = Tensor::full(&[1, 10_000], 1.0);
        assert_eq!(d.forward(&x, Mode::Eval).unwrap(), x);
        let y = d.forward(&x, Mode::Train).unwrap();
        let mean = y.data().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut bn = BatchNorm::<f64>::new("bn", &[2, 1, 1], 0.9, 1e-5);
        let x = Tensor::new(vec![2, 2, 1, 1], vec![1.0, 10.0, 3.0, 30.0]).unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-4 && (y.data()[2] - 1.0).abs() < 1e-4);
        assert!((bn.running_mean.value.data()[0] - 0.2).abs() < 1e-12);
        let e1 = bn.forward(&x, Mode::Eval).unwrap();
        let e2 = bn.forward(&x, Mode::Eval).unwrap();
        assert_eq!(e1, e2);
    }
}
