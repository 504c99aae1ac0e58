//! Minimal dense network with a softmax head and hand-written reverse mode.
//!
//! The network maps an `n x D` batch to `n x K` cluster probabilities. A
//! forward pass can be recorded into a [`Tape`]; [`ModelParams::backward`]
//! then turns a gradient on the logits into gradients for every weight and
//! bias, plus the gradient with respect to the input (needed for the
//! virtual-adversarial direction search).

mod optim;

pub use optim::{AdamConfig, OptimizerState};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, pre: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => pre.mapv(|v| v.max(0.0)),
            Activation::Tanh => pre.mapv(f64::tanh),
            Activation::Identity => pre.clone(),
        }
    }

    /// Multiplies `grad` in place by the derivative evaluated at `pre`/`post`.
    fn backprop(self, pre: &Array2<f64>, post: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad).and(pre).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(grad)
                .and(post)
                .for_each(|g, &a| *g *= 1.0 - a * a),
            Activation::Identity => {}
        }
    }
}

/// One affine layer followed by a nonlinearity. `weight` is `in x out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Parameters of the clustering network `f_theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    layers: Vec<Dense>,
}

/// Activations recorded during a forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`.
    acts: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    probs: Array2<f64>,
}

impl Tape {
    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn logits(&self) -> &Array2<f64> {
        self.acts.last().expect("tape has at least the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.acts[0]
    }
}

impl ModelParams {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::Config(format!(
                    "layer {l}: bias length {} does not match output width {}",
                    layer.bias.len(),
                    layer.output_dim()
                )));
            }
            if l > 0 && layers[l - 1].output_dim() != layer.input_dim() {
                return Err(Error::Config(format!(
                    "layer {l}: input width {} does not match previous output width {}",
                    layer.input_dim(),
                    layers[l - 1].output_dim()
                )));
            }
            if !layer
                .weight
                .iter()
                .chain(layer.bias.iter())
                .all(|v| v.is_finite())
            {
                return Err(Error::NonFinite {
                    node: format!("layer {l} parameters"),
                });
            }
        }
        let k = layers.last().map(Dense::output_dim).unwrap_or(0);
        if k < 2 {
            return Err(Error::Config(format!(
                "output dimension must be >= 2, got {k}"
            )));
        }
        Ok(Self { layers })
    }

    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// `fan_in` inputs is drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        k: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        let widths = hidden.iter().copied().chain(std::iter::once(k));
        for (l, width) in widths.enumerate() {
            if width == 0 {
                return Err(Error::Config(format!("layer {l} has zero width")));
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight =
                Array2::from_shape_simple_fn((fan_in, width), || rng.random_range(-bound..bound));
            let bias = Array1::from_shape_simple_fn(width, || rng.random_range(-bound..bound));
            let act = if l == hidden.len() {
                Activation::Identity
            } else {
                activation
            };
            layers.push(Dense {
                weight,
                bias,
                activation: act,
            });
            fan_in = width;
        }
        Self::new(layers)
    }

    /// Same shapes as [`ModelParams::init`], every parameter zero.
    pub fn zeros(
        input_dim: usize,
        hidden: &[usize],
        k: usize,
        activation: Activation,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut fan_in = input_dim;
        for (l, &width) in hidden.iter().chain(std::iter::once(&k)).enumerate() {
            layers.push(Dense {
                weight: Array2::zeros((fan_in, width)),
                bias: Array1::zeros(width),
                activation: if l == hidden.len() {
                    Activation::Identity
                } else {
                    activation
                },
            });
            fan_in = width;
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// Parameter at flat index `i` (layer-major; weights row-major, then bias).
    pub fn param(&self, i: usize) -> f64 {
        let (l, j) = self.locate(i);
        let layer = &self.layers[l];
        if j < layer.weight.len() {
            let cols = layer.weight.ncols();
            layer.weight[[j / cols, j % cols]]
        } else {
            layer.bias[j - layer.weight.len()]
        }
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        let (l, j) = self.locate(i);
        let layer = &mut self.layers[l];
        if j < layer.weight.len() {
            let cols = layer.weight.ncols();
            layer.weight[[j / cols, j % cols]] = value;
        } else {
            let nw = layer.weight.len();
            layer.bias[j - nw] = value;
        }
    }

    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            let n = layer.num_params();
            if i < n {
                return (l, i);
            }
            i -= n;
        }
        panic!("parameter index out of range");
    }

    /// Sum of squares of every weight and bias.
    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weight
                    .iter()
                    .chain(l.bias.iter())
                    .map(|v| v * v)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Config(format!(
                "batch has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Cluster probabilities `softmax(f(x))`, one row per input row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(&self.logits(x)?))
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for layer in &self.layers {
            let pre = a.dot(&layer.weight) + &layer.bias;
            a = layer.activation.apply(&pre);
        }
        Ok(a)
    }

    /// Output of the last hidden layer (the input itself for a single-layer net).
    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for layer in &self.layers[..self.layers.len() - 1] {
            let pre = a.dot(&layer.weight) + &layer.bias;
            a = layer.activation.apply(&pre);
        }
        Ok(a)
    }

    /// Forward pass that keeps every intermediate needed by `backward`.
    pub fn record(&self, x: ArrayView2<f64>) -> Result<Tape> {
        self.check_input(&x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = acts[l].dot(&layer.weight) + &layer.bias;
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    node: format!("layer {l} pre-activation"),
                });
            }
            acts.push(layer.activation.apply(&z));
            pre.push(z);
        }
        let probs = softmax_rows(acts.last().unwrap());
        Ok(Tape { acts, pre, probs })
    }

    /// Reverse pass from a gradient on the logits.
    ///
    /// Returns parameter gradients and the gradient with respect to the
    /// recorded input.
    pub fn backward(
        &self,
        tape: &Tape,
        grad_logits: &Array2<f64>,
    ) -> Result<(GradientSet, Array2<f64>)> {
        let (grads, dx) = self.reverse(tape, grad_logits, true)?;
        Ok((grads.expect("parameter gradients requested"), dx))
    }

    /// Reverse pass from a gradient on the softmax probabilities.
    pub fn backward_from_probs(
        &self,
        tape: &Tape,
        grad_probs: &Array2<f64>,
    ) -> Result<(GradientSet, Array2<f64>)> {
        self.backward(tape, &softmax_backward(&tape.probs, grad_probs))
    }

    /// Gradient with respect to the input only; skips weight gradients.
    pub fn input_gradient(&self, tape: &Tape, grad_logits: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.reverse(tape, grad_logits, false)?.1)
    }

    fn reverse(
        &self,
        tape: &Tape,
        grad_logits: &Array2<f64>,
        want_params: bool,
    ) -> Result<(Option<GradientSet>, Array2<f64>)> {
        if grad_logits.dim() != tape.logits().dim() {
            return Err(Error::Config(format!(
                "logit gradient shape {:?} does not match recorded logits {:?}",
                grad_logits.dim(),
                tape.logits().dim()
            )));
        }
        if !grad_logits.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                node: "logit gradient".into(),
            });
        }
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_logits.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            layer
                .activation
                .backprop(&tape.pre[l], &tape.acts[l + 1], &mut g);
            if want_params {
                let weight = tape.acts[l].t().dot(&g);
                let bias = g.sum_axis(Axis(0));
                layer_grads.push(LayerGrad { weight, bias });
            }
            g = g.dot(&layer.weight.t());
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    node: format!("layer {l} input gradient"),
                });
            }
        }
        let grads = if want_params {
            layer_grads.reverse();
            let set = GradientSet {
                layers: layer_grads,
            };
            if !set.is_finite() {
                return Err(Error::NonFinite {
                    node: "parameter gradients".into(),
                });
            }
            Some(set)
        } else {
            None
        };
        Ok((grads, g))
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Maps a gradient on softmax outputs to a gradient on the logits:
/// `dz = p * (g - <p, g>)` row by row.
pub fn softmax_backward(probs: &Array2<f64>, grad_probs: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.dim());
    for ((p, g), mut o) in probs
        .rows()
        .into_iter()
        .zip(grad_probs.rows())
        .zip(out.rows_mut())
    {
        let inner = p.dot(&g);
        Zip::from(&mut o)
            .and(&p)
            .and(&g)
            .for_each(|o, &p, &g| *o = p * (g - inner));
    }
    out
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("probability {v} is negative or NaN")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    Ok(entropy_unchecked(p.iter().copied()))
}

pub(crate) fn entropy_unchecked(p: impl Iterator<Item = f64>) -> f64 {
    -p.map(|v| {
        if v > 0.0 {
            v * v.max(PROB_FLOOR).ln()
        } else {
            0.0
        }
    })
    .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients shaped like a [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerGrad] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Entry at flat index `i`, same ordering as [`ModelParams::param`].
    pub fn get(&self, mut i: usize) -> f64 {
        for layer in &self.layers {
            let nw = layer.weight.len();
            if i < nw {
                let cols = layer.weight.ncols();
                return layer.weight[[i / cols, i % cols]];
            }
            i -= nw;
            if i < layer.bias.len() {
                return layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("gradient index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn matches(&self, params: &ModelParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.weight.dim() == p.weight.dim() && g.bias.len() == p.bias.len())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    /// `self += scale * params`; the gradient of `(scale / 2) * ||theta||^2`.
    pub fn add_scaled_params(&mut self, scale: f64, params: &ModelParams) {
        for (a, p) in self.layers.iter_mut().zip(&params.layers) {
            a.weight.scaled_add(scale, &p.weight);
            a.bias.scaled_add(scale, &p.bias);
        }
    }
}
