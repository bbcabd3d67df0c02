//! Parameter storage, forward propagation and reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::spec::{window_geometry, Activation, LayerSpec, ModelSpec};
use super::tensor::{cross_entropy, softmax_in_place, Tensor};
use super::NnError;

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Weights of one layer. Parameterless layers hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    /// kernel laid out `[kh][kw][c_in][c_out]`
    Conv { kernel: Vec<f64>, bias: Vec<f64> },
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        moving_mean: Vec<f64>,
        moving_var: Vec<f64>,
    },
    /// weight laid out `[in][out]`
    Dense { weight: Vec<f64>, bias: Vec<f64> },
    None,
}

impl LayerParams {
    pub fn trainable(&self) -> Vec<&Vec<f64>> {
        match self {
            LayerParams::Conv { kernel, bias } => vec![kernel, bias],
            LayerParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            LayerParams::Dense { weight, bias } => vec![weight, bias],
            LayerParams::None => vec![],
        }
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            LayerParams::Conv { kernel, bias } => vec![kernel, bias],
            LayerParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            LayerParams::Dense { weight, bias } => vec![weight, bias],
            LayerParams::None => vec![],
        }
    }

    /// Every stored tensor as (name, values), in serialization order.
    pub fn named(&self) -> Vec<(&'static str, &Vec<f64>)> {
        match self {
            LayerParams::Conv { kernel, bias } => vec![("kernel", kernel), ("bias", bias)],
            LayerParams::BatchNorm {
                gamma,
                beta,
                moving_mean,
                moving_var,
            } => vec![
                ("gamma", gamma),
                ("beta", beta),
                ("moving_mean", moving_mean),
                ("moving_variance", moving_var),
            ],
            LayerParams::Dense { weight, bias } => vec![("kernel", weight), ("bias", bias)],
            LayerParams::None => vec![],
        }
    }

    pub fn named_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            LayerParams::Conv { kernel, bias } => vec![kernel, bias],
            LayerParams::BatchNorm {
                gamma,
                beta,
                moving_mean,
                moving_var,
            } => vec![gamma, beta, moving_mean, moving_var],
            LayerParams::Dense { weight, bias } => vec![weight, bias],
            LayerParams::None => vec![],
        }
    }
}

/// Gradients for every trainable tensor: `grads[layer][slot]`, slots in
/// [`LayerParams::trainable`] order.
pub type Gradients = Vec<Vec<Vec<f64>>>;

/// A model spec with concrete weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    shapes: Vec<Vec<usize>>,
    params: Vec<LayerParams>,
}

enum Cache {
    Conv { input: Vec<f64>, output: Vec<f64> },
    Pool { argmax: Vec<usize>, input_len: usize },
    BatchNorm { x_hat: Vec<f64>, inv_std: Vec<f64>, batch_stats: bool },
    Dropout { scale: Option<Vec<f64>> },
    Reshape,
    Dense { input: Vec<f64>, output: Vec<f64> },
}

/// Activations recorded by a forward pass, consumed by [`Network::backward`].
pub struct Tape {
    batch: usize,
    caches: Vec<Cache>,
    /// Batch mean and variance per batch-norm layer (train mode only).
    bn_stats: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl Network {
    /// He-uniform initialisation (limit `sqrt(6 / fan_in)`), zero biases,
    /// unit batch-norm scale.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(spec, |fan_in, n| {
            let limit = (6.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
        })
    }

    /// All weights and biases zero; batch-norm at identity.
    pub fn zeroed(spec: ModelSpec) -> Result<Self, NnError> {
        Self::build(spec, |_, n| vec![0.0; n])
    }

    fn build(spec: ModelSpec, mut init: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self, NnError> {
        let shapes = spec.shapes()?;
        let params = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(layer, input)| match *layer {
                LayerSpec::Conv2D { filters, kernel, .. } => {
                    let fan_in = kernel[0] * kernel[1] * input[2];
                    LayerParams::Conv {
                        kernel: init(fan_in, fan_in * filters),
                        bias: vec![0.0; filters],
                    }
                }
                LayerSpec::Dense { units, .. } => LayerParams::Dense {
                    weight: init(input[0], input[0] * units),
                    bias: vec![0.0; units],
                },
                LayerSpec::BatchNorm => {
                    let c = input[input.len() - 1];
                    LayerParams::BatchNorm {
                        gamma: vec![1.0; c],
                        beta: vec![0.0; c],
                        moving_mean: vec![0.0; c],
                        moving_var: vec![1.0; c],
                    }
                }
                _ => LayerParams::None,
            })
            .collect();
        Ok(Self { spec, shapes, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().unwrap().iter().product()
    }

    /// Total stored values across all layers.
    pub fn param_count(&self) -> usize {
        self.params.iter().flat_map(|p| p.named()).map(|(_, v)| v.len()).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<usize, NnError> {
        let shape = x.shape();
        if shape.len() != self.shapes[0].len() + 1 || shape[1..] != self.shapes[0][..] {
            return Err(NnError::ShapeMismatch(format!(
                "model expects (N, {:?}), got {:?}",
                self.shapes[0], shape
            )));
        }
        Ok(shape[0])
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (out, _) = self.forward_impl(x, Mode::Infer, None, false)?;
        Ok(out)
    }

    /// Forward pass recording activations. Train mode uses batch statistics
    /// and draws dropout masks from `rng`; moving averages are not touched
    /// (see [`Network::apply_bn_stats`]).
    pub fn forward_recorded(&self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<(Tensor, Tape), NnError> {
        let (out, tape) = self.forward_impl(x, mode, Some(rng), true)?;
        Ok((out, tape.unwrap()))
    }

    fn forward_impl(
        &self,
        x: &Tensor,
        mode: Mode,
        mut rng: Option<&mut ChaCha8Rng>,
        record: bool,
    ) -> Result<(Tensor, Option<Tape>), NnError> {
        let n = self.check_input(x)?;
        let mut cur = x.data().to_vec();
        let mut caches = Vec::with_capacity(self.params.len());
        let mut bn_stats = Vec::with_capacity(self.params.len());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let in_shape = &self.shapes[i];
            let out_shape = &self.shapes[i + 1];
            let mut stats = None;
            let (next, cache) = match (layer, &self.params[i]) {
                (
                    &LayerSpec::Conv2D {
                        kernel: k,
                        stride,
                        padding,
                        activation,
                        ..
                    },
                    LayerParams::Conv { kernel, bias },
                ) => {
                    let geo = ConvGeometry::new(in_shape, out_shape, k, stride, padding);
                    let mut out = conv_forward(&cur, n, &geo, kernel, bias);
                    apply_activation(&mut out, activation, geo.c_out);
                    if record {
                        (out.clone(), Some(Cache::Conv { input: cur, output: out }))
                    } else {
                        (out, None)
                    }
                }
                (&LayerSpec::MaxPool2D { pool, stride, padding }, _) => {
                    let geo = ConvGeometry::new(in_shape, out_shape, pool, stride, padding);
                    let (out, argmax) = pool_forward(&cur, n, &geo);
                    let input_len = cur.len();
                    (out, record.then_some(Cache::Pool { argmax, input_len }))
                }
                (
                    LayerSpec::BatchNorm,
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        moving_mean,
                        moving_var,
                    },
                ) => {
                    let c = gamma.len();
                    let (mean, var) = match mode {
                        Mode::Train => channel_moments(&cur, c),
                        Mode::Infer => (moving_mean.clone(), moving_var.clone()),
                    };
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                    let x_hat: Vec<f64> = cur
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| (v - mean[j % c]) * inv_std[j % c])
                        .collect();
                    let out = x_hat.iter().enumerate().map(|(j, &v)| gamma[j % c] * v + beta[j % c]).collect();
                    if mode == Mode::Train {
                        stats = Some((mean, var));
                    }
                    (
                        out,
                        record.then_some(Cache::BatchNorm {
                            x_hat,
                            inv_std,
                            batch_stats: mode == Mode::Train,
                        }),
                    )
                }
                (&LayerSpec::Dropout { rate }, _) => {
                    if mode == Mode::Train && rate > 0.0 {
                        let rng = rng
                            .as_deref_mut()
                            .ok_or_else(|| NnError::InvalidSpec("train-mode dropout needs an rng".into()))?;
                        let keep = 1.0 / (1.0 - rate);
                        let scale: Vec<f64> = (0..cur.len()).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
                        let out = cur.iter().zip(&scale).map(|(v, s)| v * s).collect();
                        (out, record.then_some(Cache::Dropout { scale: Some(scale) }))
                    } else {
                        (cur, record.then_some(Cache::Dropout { scale: None }))
                    }
                }
                (LayerSpec::Flatten, _) => (cur, record.then_some(Cache::Reshape)),
                (&LayerSpec::Dense { units, activation }, LayerParams::Dense { weight, bias }) => {
                    let mut out = dense_forward(&cur, n, in_shape[0], units, weight, bias);
                    apply_activation(&mut out, activation, units);
                    if record {
                        (out.clone(), Some(Cache::Dense { input: cur, output: out }))
                    } else {
                        (out, None)
                    }
                }
                (l, p) => unreachable!("layer {l:?} paired with {p:?}"),
            };
            cur = next;
            if let Some(c) = cache {
                caches.push(c);
            }
            bn_stats.push(stats);
        }
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(self.shapes.last().unwrap());
        let out = Tensor::new(out_shape, cur)?;
        let tape = record.then_some(Tape { batch: n, caches, bn_stats });
        Ok((out, tape))
    }

    /// Fold the batch statistics of a train-mode pass into the moving averages.
    pub fn apply_bn_stats(&mut self, tape: &Tape) {
        for (params, stats) in self.params.iter_mut().zip(&tape.bn_stats) {
            if let (
                LayerParams::BatchNorm {
                    moving_mean, moving_var, ..
                },
                Some((mean, var)),
            ) = (params, stats)
            {
                for (m, b) in moving_mean.iter_mut().zip(mean) {
                    *m = BN_MOMENTUM * *m + (1.0 - BN_MOMENTUM) * b;
                }
                for (m, b) in moving_var.iter_mut().zip(var) {
                    *m = BN_MOMENTUM * *m + (1.0 - BN_MOMENTUM) * b;
                }
            }
        }
    }

    fn has_softmax_head(&self) -> bool {
        matches!(
            self.spec.layers.last(),
            Some(LayerSpec::Dense {
                activation: Activation::Softmax,
                ..
            })
        )
    }

    /// Mean cross-entropy of `probs` (N x K) against `labels`.
    pub fn mean_cross_entropy(probs: &Tensor, labels: &[usize]) -> f64 {
        let k = probs.shape()[1];
        probs
            .data()
            .chunks(k)
            .zip(labels)
            .map(|(p, &l)| cross_entropy(p, l))
            .sum::<f64>()
            / labels.len() as f64
    }

    /// Gradients of the mean cross-entropy through a recorded pass. The last
    /// layer must be a softmax dense layer; its logit gradient is `(p - y) / N`.
    /// Also returns the gradient with respect to the network input.
    pub fn backward(&self, tape: &Tape, probs: &Tensor, labels: &[usize]) -> Result<(Gradients, Vec<f64>), NnError> {
        if !self.has_softmax_head() {
            return Err(NnError::MissingSoftmaxHead);
        }
        let n = tape.batch;
        let k = self.output_len();
        if labels.len() != n || probs.len() != n * k {
            return Err(NnError::DataShapeMismatch(format!("{} labels for a batch of {n}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(NnError::DataShapeMismatch(format!("label {bad} outside 0..{k}")));
        }
        let mut grad: Vec<f64> = probs.data().to_vec();
        for (row, &l) in grad.chunks_mut(k).zip(labels) {
            row[l] -= 1.0;
        }
        grad.iter_mut().for_each(|g| *g /= n as f64);

        let last = self.spec.layers.len() - 1;
        let mut grads: Gradients = vec![Vec::new(); self.params.len()];
        for i in (0..self.spec.layers.len()).rev() {
            let in_shape = &self.shapes[i];
            let out_shape = &self.shapes[i + 1];
            let pre_activation = i == last;
            grad = match (&self.spec.layers[i], &self.params[i], &tape.caches[i]) {
                (
                    &LayerSpec::Conv2D {
                        kernel: k,
                        stride,
                        padding,
                        activation,
                        ..
                    },
                    LayerParams::Conv { kernel, .. },
                    Cache::Conv { input, output },
                ) => {
                    let geo = ConvGeometry::new(in_shape, out_shape, k, stride, padding);
                    if !pre_activation {
                        activation_backward(&mut grad, output, activation, geo.c_out);
                    }
                    let (dx, dk, db) = conv_backward(input, &grad, n, &geo, kernel);
                    grads[i] = vec![dk, db];
                    dx
                }
                (_, _, Cache::Pool { argmax, input_len }) => {
                    let mut dx = vec![0.0; *input_len];
                    for (g, &a) in grad.iter().zip(argmax) {
                        dx[a] += g;
                    }
                    dx
                }
                (
                    _,
                    LayerParams::BatchNorm { gamma, .. },
                    Cache::BatchNorm {
                        x_hat,
                        inv_std,
                        batch_stats,
                    },
                ) => {
                    let c = gamma.len();
                    let (dx, dgamma, dbeta) = bn_backward(&grad, x_hat, inv_std, gamma, c, *batch_stats);
                    grads[i] = vec![dgamma, dbeta];
                    dx
                }
                (_, _, Cache::Dropout { scale }) => match scale {
                    Some(s) => grad.iter().zip(s).map(|(g, s)| g * s).collect(),
                    None => grad,
                },
                (_, _, Cache::Reshape) => grad,
                (&LayerSpec::Dense { units, activation }, LayerParams::Dense { weight, .. }, Cache::Dense { input, output }) => {
                    if !pre_activation {
                        activation_backward(&mut grad, output, activation, units);
                    }
                    let (dx, dw, db) = dense_backward(input, &grad, n, in_shape[0], units, weight);
                    grads[i] = vec![dw, db];
                    dx
                }
                _ => unreachable!("tape does not match layer {i}"),
            };
        }
        Ok((grads, grad))
    }

    /// Loss and gradients for one batch without touching moving averages.
    pub fn loss_and_gradients(&self, x: &Tensor, labels: &[usize], mode: Mode, seed: u64) -> Result<(f64, Gradients), NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (probs, tape) = self.forward_recorded(x, mode, &mut rng)?;
        let (grads, _) = self.backward(&tape, &probs, labels)?;
        Ok((Self::mean_cross_entropy(&probs, labels), grads))
    }

    /// Mean cross-entropy of one batch, dropout masks drawn from `seed`.
    pub fn loss(&self, x: &Tensor, labels: &[usize], mode: Mode, seed: u64) -> Result<f64, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (probs, _) = self.forward_impl(x, mode, Some(&mut rng), false)?;
        Ok(Self::mean_cross_entropy(&probs, labels))
    }
}

fn apply_activation(out: &mut [f64], activation: Activation, width: usize) {
    match activation {
        Activation::Relu => out.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Softmax => out.chunks_mut(width).for_each(softmax_in_place),
        Activation::None => {}
    }
}

fn activation_backward(grad: &mut [f64], output: &[f64], activation: Activation, width: usize) {
    match activation {
        Activation::Relu => {
            for (g, &y) in grad.iter_mut().zip(output) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Softmax => {
            for (g, y) in grad.chunks_mut(width).zip(output.chunks(width)) {
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                for (gi, yi) in g.iter_mut().zip(y) {
                    *gi = yi * (*gi - dot);
                }
            }
        }
        Activation::None => {}
    }
}

struct ConvGeometry {
    h: usize,
    w: usize,
    c_in: usize,
    oh: usize,
    ow: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    pad_t: usize,
    pad_l: usize,
}

impl ConvGeometry {
    fn new(input: &[usize], output: &[usize], k: [usize; 2], stride: [usize; 2], padding: super::spec::Padding) -> Self {
        let (_, pad_t) = window_geometry(input[0], k[0], stride[0], padding).unwrap();
        let (_, pad_l) = window_geometry(input[1], k[1], stride[1], padding).unwrap();
        Self {
            h: input[0],
            w: input[1],
            c_in: input[2],
            oh: output[0],
            ow: output[1],
            c_out: output[2],
            kh: k[0],
            kw: k[1],
            sh: stride[0],
            sw: stride[1],
            pad_t,
            pad_l,
        }
    }

    fn in_len(&self) -> usize {
        self.h * self.w * self.c_in
    }

    fn out_len(&self) -> usize {
        self.oh * self.ow * self.c_out
    }

    /// Input row/column for an output position and kernel offset.
    #[inline]
    fn src(&self, o: usize, k: usize, stride: usize, pad: usize, limit: usize) -> Option<usize> {
        let p = (o * stride + k).checked_sub(pad)?;
        (p < limit).then_some(p)
    }
}

fn conv_forward(x: &[f64], n: usize, g: &ConvGeometry, kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * g.out_len()];
    out.par_chunks_mut(g.out_len())
        .zip(x.par_chunks(g.in_len()))
        .for_each(|(out, x)| {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let acc = &mut out[(oy * g.ow + ox) * g.c_out..][..g.c_out];
                    acc.copy_from_slice(bias);
                    for ky in 0..g.kh {
                        let Some(iy) = g.src(oy, ky, g.sh, g.pad_t, g.h) else { continue };
                        for kx in 0..g.kw {
                            let Some(ix) = g.src(ox, kx, g.sw, g.pad_l, g.w) else { continue };
                            let xs = &x[(iy * g.w + ix) * g.c_in..][..g.c_in];
                            let wbase = (ky * g.kw + kx) * g.c_in * g.c_out;
                            for (ci, &xv) in xs.iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                let wr = &kernel[wbase + ci * g.c_out..][..g.c_out];
                                for (a, &w) in acc.iter_mut().zip(wr) {
                                    *a += xv * w;
                                }
                            }
                        }
                    }
                }
            }
        });
    out
}

/// Returns (d input, d kernel, d bias). Per-sample partial sums are reduced
/// in sample order so the result does not depend on the thread count.
fn conv_backward(x: &[f64], gz: &[f64], n: usize, g: &ConvGeometry, kernel: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let partials: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|b| {
            let x = &x[b * g.in_len()..][..g.in_len()];
            let gz = &gz[b * g.out_len()..][..g.out_len()];
            let mut dx = vec![0.0; g.in_len()];
            let mut dk = vec![0.0; kernel.len()];
            let mut db = vec![0.0; g.c_out];
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let go = &gz[(oy * g.ow + ox) * g.c_out..][..g.c_out];
                    if go.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    for (d, &v) in db.iter_mut().zip(go) {
                        *d += v;
                    }
                    for ky in 0..g.kh {
                        let Some(iy) = g.src(oy, ky, g.sh, g.pad_t, g.h) else { continue };
                        for kx in 0..g.kw {
                            let Some(ix) = g.src(ox, kx, g.sw, g.pad_l, g.w) else { continue };
                            let xoff = (iy * g.w + ix) * g.c_in;
                            let wbase = (ky * g.kw + kx) * g.c_in * g.c_out;
                            for ci in 0..g.c_in {
                                let xv = x[xoff + ci];
                                let wr = &kernel[wbase + ci * g.c_out..][..g.c_out];
                                let dkr = &mut dk[wbase + ci * g.c_out..][..g.c_out];
                                let mut acc = 0.0;
                                for co in 0..g.c_out {
                                    dkr[co] += xv * go[co];
                                    acc += wr[co] * go[co];
                                }
                                dx[xoff + ci] += acc;
                            }
                        }
                    }
                }
            }
            (dx, dk, db)
        })
        .collect();

    let mut dx = Vec::with_capacity(n * g.in_len());
    let mut dk = vec![0.0; kernel.len()];
    let mut db = vec![0.0; g.c_out];
    for (px, pk, pb) in partials {
        dx.extend_from_slice(&px);
        dk.iter_mut().zip(&pk).for_each(|(a, b)| *a += b);
        db.iter_mut().zip(&pb).for_each(|(a, b)| *a += b);
    }
    (dx, dk, db)
}

/// Max pooling; out-of-bounds window cells under same padding are skipped.
/// Ties resolve to the first cell in scan order.
fn pool_forward(x: &[f64], n: usize, g: &ConvGeometry) -> (Vec<f64>, Vec<usize>) {
    let c = g.c_in;
    let mut out = vec![f64::NEG_INFINITY; n * g.out_len()];
    let mut argmax = vec![0usize; n * g.out_len()];
    for b in 0..n {
        let in_base = b * g.in_len();
        let out_base = b * g.out_len();
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let o = out_base + (oy * g.ow + ox) * c;
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.sh, g.pad_t, g.h) else { continue };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(ox, kx, g.sw, g.pad_l, g.w) else { continue };
                        let i = in_base + (iy * g.w + ix) * c;
                        for ch in 0..c {
                            if x[i + ch] > out[o + ch] {
                                out[o + ch] = x[i + ch];
                                argmax[o + ch] = i + ch;
                            }
                        }
                    }
                }
            }
        }
    }
    (out, argmax)
}

fn channel_moments(x: &[f64], c: usize) -> (Vec<f64>, Vec<f64>) {
    let m = (x.len() / c) as f64;
    let mut mean = vec![0.0; c];
    for (j, &v) in x.iter().enumerate() {
        mean[j % c] += v;
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0; c];
    for (j, &v) in x.iter().enumerate() {
        let d = v - mean[j % c];
        var[j % c] += d * d;
    }
    var.iter_mut().for_each(|v| *v /= m);
    (mean, var)
}

fn bn_backward(
    g: &[f64],
    x_hat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    c: usize,
    batch_stats: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (j, (&gv, &xh)) in g.iter().zip(x_hat).enumerate() {
        dgamma[j % c] += gv * xh;
        dbeta[j % c] += gv;
    }
    let dx = if batch_stats {
        // dx = gamma * inv_std / m * (m * g - sum(g) - x_hat * sum(g * x_hat))
        let m = (g.len() / c) as f64;
        g.iter()
            .zip(x_hat)
            .enumerate()
            .map(|(j, (&gv, &xh))| {
                let ch = j % c;
                gamma[ch] * inv_std[ch] / m * (m * gv - dbeta[ch] - xh * dgamma[ch])
            })
            .collect()
    } else {
        g.iter().enumerate().map(|(j, &gv)| gv * gamma[j % c] * inv_std[j % c]).collect()
    };
    (dx, dgamma, dbeta)
}

pub(crate) fn dense_forward(x: &[f64], n: usize, d_in: usize, units: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * units];
    out.par_chunks_mut(units).zip(x.par_chunks(d_in)).for_each(|(o, xs)| {
        o.copy_from_slice(bias);
        for (i, &xv) in xs.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (a, &w) in o.iter_mut().zip(&weight[i * units..][..units]) {
                *a += xv * w;
            }
        }
    });
    debug_assert_eq!(out.len(), n * units);
    out
}

fn dense_backward(x: &[f64], gz: &[f64], n: usize, d_in: usize, units: usize, weight: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; n * d_in];
    let mut dw = vec![0.0; d_in * units];
    let mut db = vec![0.0; units];
    for b in 0..n {
        let xs = &x[b * d_in..][..d_in];
        let go = &gz[b * units..][..units];
        for (d, &v) in db.iter_mut().zip(go) {
            *d += v;
        }
        for i in 0..d_in {
            let wr = &weight[i * units..][..units];
            let dwr = &mut dw[i * units..][..units];
            let xv = xs[i];
            let mut acc = 0.0;
            for o in 0..units {
                dwr[o] += xv * go[o];
                acc += wr[o] * go[o];
            }
            dx[b * d_in + i] = acc;
        }
    }
    (dx, dw, db)
}
