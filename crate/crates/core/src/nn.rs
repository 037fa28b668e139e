//! Dense MLP toolkit with hand-written reverse mode.
//!
//! Batches are row-major `(batch, features)` matrices. Weights are stored
//! `(out, in)`, so a layer computes `act(x Wᵀ + b)` row-wise.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Exact (erf-based) GELU.
    Gelu,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Gelu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Gelu),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)),
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + x * pdf
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gelu" => Ok(Activation::Gelu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape `(out, in)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// `W = I`, `b = 0`, identity activation.
    pub fn identity(dim: usize) -> Self {
        Layer {
            weight: Array2::eye(dim),
            bias: Array1::zeros(dim),
            activation: Activation::Identity,
        }
    }
}

/// A chain of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    /// Validates that layer shapes chain and every value is finite.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias length {} != out dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(Error::Shape(format!("layer {i} has a zero dimension")));
            }
            if i > 0 && layers[i - 1].out_dim() != layer.in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but layer {} emits {}",
                    layer.in_dim(),
                    i - 1,
                    layers[i - 1].out_dim()
                )));
            }
            let finite = layer.weight.iter().chain(layer.bias.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Data(format!("layer {i} holds non-finite parameters")));
            }
        }
        Ok(MlpParams { layers })
    }

    /// Single identity layer of width `dim`.
    pub fn identity(dim: usize) -> Self {
        MlpParams {
            layers: vec![Layer::identity(dim)],
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Zero-filled gradients with matching shapes.
    pub fn zeros_like(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    fn param_mut(&mut self, layer: usize, index: usize) -> &mut f64 {
        let l = &mut self.layers[layer];
        let nw = l.weight.len();
        if index < nw {
            let cols = l.weight.ncols();
            &mut l.weight[[index / cols, index % cols]]
        } else {
            &mut l.bias[index - nw]
        }
    }
}

/// Build an MLP with `layer_sizes = [in, hidden.., out]` and one activation
/// per layer. Weights are uniform on `±sqrt(6 / (in + out))`, biases zero.
pub fn init_mlp(layer_sizes: &[usize], activations: &[Activation], seed: u64) -> Result<MlpParams> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "need at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if activations.len() != layer_sizes.len() - 1 {
        return Err(Error::Config(format!(
            "{} layers but {} activations",
            layer_sizes.len() - 1,
            activations.len()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config(format!("zero-width layer in {layer_sizes:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = layer_sizes
        .windows(2)
        .zip(activations)
        .map(|(dims, &activation)| {
            let (fan_in, fan_out) = (dims[0], dims[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.random_range(-bound..bound)
            });
            Layer {
                weight,
                bias: Array1::zeros(fan_out),
                activation,
            }
        })
        .collect();
    MlpParams::new(layers)
}

/// Inverted dropout on hidden-layer outputs during training.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Intermediates retained by a forward pass for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

fn check_width(p: &MlpParams, batch: &ArrayView2<f64>) -> Result<()> {
    if batch.ncols() != p.in_dim() {
        return Err(Error::Shape(format!(
            "batch width {} != MLP input dim {}",
            batch.ncols(),
            p.in_dim()
        )));
    }
    Ok(())
}

fn affine(layer: &Layer, x: &ArrayView2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

/// Inference forward pass, `(B, in) -> (B, out)`.
pub fn mlp_forward(p: &MlpParams, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_width(p, &batch)?;
    let mut x = batch.to_owned();
    for layer in &p.layers {
        let mut z = affine(layer, &x.view());
        if layer.activation != Activation::Identity {
            z.mapv_inplace(|v| layer.activation.apply(v));
        }
        x = z;
    }
    Ok(x)
}

/// Forward pass that records what [`backward`] needs.
pub fn mlp_forward_cached(
    p: &MlpParams,
    batch: ArrayView2<f64>,
    mut dropout: Option<Dropout<'_>>,
) -> Result<(Array2<f64>, ForwardCache)> {
    check_width(p, &batch)?;
    let n = p.layers.len();
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(n),
        pre_activations: Vec::with_capacity(n),
        masks: Vec::with_capacity(n),
    };
    let mut x = batch.to_owned();
    for (i, layer) in p.layers.iter().enumerate() {
        let z = affine(layer, &x.view());
        let mut a = z.mapv(|v| layer.activation.apply(v));
        let mask = match dropout.as_mut() {
            Some(d) if d.rate > 0.0 && i + 1 < n => {
                let keep = 1.0 - d.rate;
                let mask = Array2::from_shape_simple_fn(a.raw_dim(), || {
                    if d.rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                a *= &mask;
                Some(mask)
            }
            _ => None,
        };
        cache.inputs.push(x);
        cache.pre_activations.push(z);
        cache.masks.push(mask);
        x = a;
    }
    Ok((x, cache))
}

/// Per-layer parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients mirroring the shapes of an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    fn matches(&self, p: &MlpParams) -> bool {
        self.layers.len() == p.layers.len()
            && self.layers.iter().zip(&p.layers).all(|(g, l)| {
                g.weight.raw_dim() == l.weight.raw_dim() && g.bias.len() == l.bias.len()
            })
    }
}

/// Reverse pass. `upstream` is `dLoss/dOutput`, shape `(B, out)`.
/// Returns parameter gradients and `dLoss/dInput`.
pub fn backward(
    p: &MlpParams,
    cache: &ForwardCache,
    upstream: ArrayView2<f64>,
) -> Result<(Gradients, Array2<f64>)> {
    if cache.inputs.len() != p.layers.len() {
        return Err(Error::Shape("forward cache does not match MLP depth".into()));
    }
    let out_shape = cache.pre_activations[p.layers.len() - 1].dim();
    if upstream.dim() != out_shape {
        return Err(Error::Shape(format!(
            "upstream gradient shape {:?} != output shape {:?}",
            upstream.dim(),
            out_shape
        )));
    }
    let mut grads = Vec::with_capacity(p.layers.len());
    let mut delta = upstream.to_owned();
    for (i, layer) in p.layers.iter().enumerate().rev() {
        if let Some(mask) = &cache.masks[i] {
            delta *= mask;
        }
        if layer.activation != Activation::Identity {
            Zip::from(&mut delta)
                .and(&cache.pre_activations[i])
                .for_each(|d, &z| *d *= layer.activation.derivative(z));
        }
        let weight = delta.t().dot(&cache.inputs[i]);
        let bias = delta.sum_axis(Axis(0));
        grads.push(LayerGrad { weight, bias });
        delta = delta.dot(&layer.weight);
    }
    grads.reverse();
    Ok((Gradients { layers: grads }, delta))
}

fn check_labels(logits: &ArrayView1<f64>, labels: &[u8]) -> Result<()> {
    if logits.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logits vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if logits.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Data(format!("label {bad} is not binary")));
    }
    Ok(())
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy on raw logits, label 1 meaning positive.
pub fn bce_with_logits(logits: ArrayView1<f64>, labels: &[u8]) -> Result<f64> {
    check_labels(&logits, labels)?;
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let sign = if y == 1 { 1.0 } else { -1.0 };
            softplus(-sign * z)
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Loss and its gradient with respect to each logit.
pub fn bce_with_logits_grad(logits: ArrayView1<f64>, labels: &[u8]) -> Result<(f64, Array1<f64>)> {
    let loss = bce_with_logits(logits, labels)?;
    let scale = 1.0 / labels.len() as f64;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| (sigmoid(z) - y as f64) * scale)
        .collect();
    Ok((loss, grad))
}

/// Central-difference estimate of `d loss / d theta` for every parameter.
pub fn finite_diff_grad<F>(p: &MlpParams, h: f64, mut loss: F) -> Result<Gradients>
where
    F: FnMut(&MlpParams) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut probe = p.clone();
    let mut grads = p.zeros_like();
    for (li, g) in grads.layers.iter_mut().enumerate() {
        let nw = g.weight.len();
        let cols = g.weight.ncols();
        for idx in 0..nw + g.bias.len() {
            let orig = *probe.param_mut(li, idx);
            *probe.param_mut(li, idx) = orig + h;
            let plus = loss(&probe);
            *probe.param_mut(li, idx) = orig - h;
            let minus = loss(&probe);
            *probe.param_mut(li, idx) = orig;
            let est = (plus - minus) / (2.0 * h);
            if idx < nw {
                g.weight[[idx / cols, idx % cols]] = est;
            } else {
                g.bias[idx - nw] = est;
            }
        }
    }
    Ok(grads)
}

/// Hyperparameters of the adaptive-moment optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to weight (not bias) gradients.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(p: &MlpParams, config: AdamConfig) -> Self {
        OptimizerState {
            step: 0,
            first_moment: p.zeros_like(),
            second_moment: p.zeros_like(),
            config,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(p: &mut MlpParams, g: &Gradients, st: &mut OptimizerState) -> Result<()> {
    if !g.matches(p) || !st.first_moment.matches(p) || !st.second_moment.matches(p) {
        return Err(Error::Shape("gradient/optimizer shapes do not mirror parameters".into()));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = st.config;
    st.step += 1;
    let t = st.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let update = |theta: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *theta -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((layer, grad), m), v) in p
        .layers
        .iter_mut()
        .zip(&g.layers)
        .zip(&mut st.first_moment.layers)
        .zip(&mut st.second_moment.layers)
    {
        Zip::from(&mut layer.weight)
            .and(&grad.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(|w, &gw, mw, vw| update(w, gw + weight_decay * *w, mw, vw));
        Zip::from(&mut layer.bias)
            .and(&grad.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|b, &gb, mb, vb| update(b, gb, mb, vb));
    }
    Ok(())
}
