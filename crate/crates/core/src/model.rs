//! Feed-forward softmax classifier trained with plain mini-batch SGD.
//!
//! Model file layout (little-endian):
//!
//! ```text
//! "CMLP" | version: u32 = 1 | L: u64 (weight layers) | L+1 dims: u64
//! activation: u8 (0 = relu, 1 = tanh)
//! for each layer: weights (out x in, row-major f64), then biases (out f64)
//! ```

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::codec::{self, Reader, Writer};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{mix, rng_from_seed, DetRng};
use crate::LOG_EPS;

const MAGIC: &[u8; 4] = b"CMLP";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::invalid("activation", format!("`{name}` (expected relu or tanh)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Layer widths of the network. Empty `hidden_dims` is multinomial logistic regression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize, activation: Activation) -> Result<Self> {
        let arch = Architecture {
            input_dim,
            hidden_dims,
            num_classes,
            activation,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("architecture", "num_classes must be at least 2"));
        }
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::invalid("architecture", "all layer widths must be at least 1"));
        }
        Ok(())
    }

    /// `[input, hidden..., classes]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.num_classes);
        dims
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// `outputs x inputs`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Mini-batch SGD hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Parameters start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 21,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 0,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("train config", "epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train config", "batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("train config", "learning_rate must be positive and finite"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::invalid("train config", "init_scale must be positive and finite"));
        }
        Ok(())
    }
}

/// Max-subtracted softmax. Finite for any finite logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `-ln(p_y + 1e-45)`.
pub fn cross_entropy(probs: &[f64], y: usize) -> Result<f64> {
    let p = probs
        .get(y)
        .ok_or_else(|| Error::invalid("class id", format!("{y} out of range for {} classes", probs.len())))?;
    Ok(-(p + LOG_EPS).ln())
}

/// Per-example scratch space for forward/backward passes.
struct Scratch {
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
    /// `acts[0]` is the input, `acts[k+1]` the output of layer `k` (softmax for the last).
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Scratch {
    fn new(arch: &Architecture) -> Self {
        let dims = arch.dims();
        Scratch {
            pre: dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
            acts: dims.iter().map(|&d| vec![0.0; d]).collect(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }
}

/// A trained (or initialized) network; plays the role of `f(x)` with its final softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    arch: Architecture,
    layers: Vec<Layer>,
}

impl Classifier {
    /// All-zero parameters: every input maps to the uniform distribution.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let dims = arch.dims();
        let layers = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Classifier {
            arch: arch.clone(),
            layers,
        })
    }

    /// Uniform `[-scale, scale]` initialization, layer by layer, weights before biases.
    pub fn init(arch: &Architecture, scale: f64, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = rng_from_seed(seed);
        for layer in &mut model.layers {
            for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *p = scale * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        Ok(model)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameter `k` in file order.
    pub fn param(&self, k: usize) -> f64 {
        let (l, i) = self.locate(k);
        let layer = &self.layers[l];
        if i < layer.weights.len() {
            layer.weights[i]
        } else {
            layer.bias[i - layer.weights.len()]
        }
    }

    pub fn set_param(&mut self, k: usize, v: f64) {
        let (l, i) = self.locate(k);
        let layer = &mut self.layers[l];
        if i < layer.weights.len() {
            layer.weights[i] = v;
        } else {
            layer.bias[i - layer.weights.len()] = v;
        }
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if k < layer.param_count() {
                return (l, k);
            }
            k -= layer.param_count();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    /// Class probabilities for `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut scratch = Scratch::new(&self.arch);
        self.forward_into(x, &mut scratch);
        Ok(scratch.acts.pop().unwrap())
    }

    fn forward_into(&self, x: &[f64], s: &mut Scratch) {
        s.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let (before, after) = s.acts.split_at_mut(k + 1);
            layer.affine(&before[k], &mut s.pre[k]);
            let out = &mut after[0];
            if k == last {
                out.copy_from_slice(&s.pre[k]);
                softmax_in_place(out);
            } else {
                for (o, &z) in out.iter_mut().zip(&s.pre[k]) {
                    *o = self.arch.activation.apply(z);
                }
            }
        }
    }

    /// Forward + backward for one example; accumulates parameter gradients into `grads`
    /// (layout matches `layers`) and returns the clamped cross-entropy loss.
    fn accumulate(&self, x: &[f64], y: usize, s: &mut Scratch, grads: &mut [Layer]) -> f64 {
        self.forward_into(x, s);
        let probs = s.acts.last().unwrap();
        let p_y = probs[y];
        let loss = -(p_y + LOG_EPS).ln();

        // d/dz_k of -ln(p_y + eps) = (p_y / (p_y + eps)) * (p_k - [k == y])
        let factor = p_y / (p_y + LOG_EPS);
        s.delta.clear();
        s.delta
            .extend(probs.iter().enumerate().map(|(k, &p)| factor * (p - if k == y { 1.0 } else { 0.0 })));

        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let g = &mut grads[k];
            let input = &s.acts[k];
            for (o, &d) in s.delta.iter().enumerate() {
                g.bias[o] += d;
                if d != 0.0 {
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, &a) in row.iter_mut().zip(input) {
                        *gw += d * a;
                    }
                }
            }
            if k == 0 {
                break;
            }
            s.delta_prev.clear();
            s.delta_prev.resize(layer.inputs, 0.0);
            for (o, &d) in s.delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (dp, &w) in s.delta_prev.iter_mut().zip(row) {
                        *dp += w * d;
                    }
                }
            }
            let act = self.arch.activation;
            for ((dp, &z), &a) in s.delta_prev.iter_mut().zip(&s.pre[k - 1]).zip(&s.acts[k]) {
                *dp *= act.derivative(z, a);
            }
            std::mem::swap(&mut s.delta, &mut s.delta_prev);
        }
        loss
    }

    fn zero_grads(&self) -> Vec<Layer> {
        self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect()
    }

    /// Loss and the analytic gradient of `cross_entropy(forward(x), y)`, flattened in parameter order.
    pub fn loss_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        self.check_label(y)?;
        let mut s = Scratch::new(&self.arch);
        let mut grads = self.zero_grads();
        let loss = self.accumulate(x, y, &mut s, &mut grads);
        let flat = grads
            .into_iter()
            .flat_map(|l| l.weights.into_iter().chain(l.bias))
            .collect();
        Ok((loss, flat))
    }

    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_label(y)?;
        cross_entropy(&self.forward(x)?, y)
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.arch.num_classes {
            return Err(Error::invalid(
                "class id",
                format!("{y} out of range for {} classes", self.arch.num_classes),
            ));
        }
        Ok(())
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.dim() != self.arch.input_dim || ds.num_classes() != self.arch.num_classes {
            return Err(Error::Shape(format!(
                "dataset is {}-dimensional with {} classes, model expects {} and {}",
                ds.dim(),
                ds.num_classes(),
                self.arch.input_dim,
                self.arch.num_classes
            )));
        }
        Ok(())
    }

    /// Mean loss over the given rows of `ds`.
    pub fn mean_loss(&self, ds: &Dataset, ids: &[usize]) -> Result<f64> {
        self.check_dataset(ds)?;
        let mut s = Scratch::new(&self.arch);
        let mut total = 0.0;
        for &j in ids {
            self.forward_into(ds.row(j), &mut s);
            total -= (s.acts.last().unwrap()[ds.label(j)] + LOG_EPS).ln();
        }
        Ok(total / ids.len() as f64)
    }

    /// Fraction of rows whose top-probability class equals the label (first index wins ties).
    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        self.check_dataset(ds)?;
        let mut s = Scratch::new(&self.arch);
        let mut hits = 0usize;
        for j in 0..ds.len() {
            self.forward_into(ds.row(j), &mut s);
            let probs = s.acts.last().unwrap();
            let top = (0..probs.len()).fold(0, |best, k| if probs[k] > probs[best] { k } else { best });
            hits += usize::from(top == ds.label(j));
        }
        Ok(hits as f64 / ds.len() as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(MAGIC, VERSION);
        let dims = self.arch.dims();
        w.u64(self.layers.len() as u64);
        for d in dims {
            w.u64(d as u64);
        }
        w.u8(self.arch.activation.code());
        for layer in &self.layers {
            w.f64s(&layer.weights);
            w.f64s(&layer.bias);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "model");
        r.header(MAGIC, VERSION)?;
        let l_at = r.offset();
        let num_layers = r.dim()?;
        if num_layers == 0 {
            return Err(r.error_at(l_at, "model has no layers"));
        }
        r.require(num_layers + 1, 8)?;
        let mut dims = Vec::with_capacity(num_layers + 1);
        for _ in 0..=num_layers {
            let at = r.offset();
            let d = r.dim()?;
            if d == 0 {
                return Err(r.error_at(at, "zero layer width"));
            }
            dims.push(d);
        }
        let act_at = r.offset();
        let activation = Activation::from_code(r.u8()?)
            .ok_or_else(|| r.error_at(act_at, "unknown activation code"))?;
        let arch = Architecture {
            input_dim: dims[0],
            hidden_dims: dims[1..num_layers].to_vec(),
            num_classes: dims[num_layers],
            activation,
        };
        if arch.num_classes < 2 {
            return Err(r.error_at(l_at, "fewer than two classes"));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for w in dims.windows(2) {
            let n = codec::checked_len(&r, &[w[0], w[1]])?;
            let at = r.offset();
            let weights = r.f64s(n)?;
            let bias = r.f64s(w[1])?;
            if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
                return Err(r.error_at(at, "non-finite parameter"));
            }
            layers.push(Layer {
                inputs: w[0],
                outputs: w[1],
                weights,
                bias,
            });
        }
        r.finish()?;
        Ok(Classifier { arch, layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }
}

/// Train on every row of `ds`.
pub fn train(ds: &Dataset, arch: &Architecture, cfg: &TrainConfig) -> Result<Classifier> {
    let ids: Vec<usize> = (0..ds.len()).collect();
    train_on(ds, &ids, arch, cfg)
}

/// Train on the rows `ids` of `ds`. Deterministic in `(ds, ids, arch, cfg)`.
pub fn train_on(ds: &Dataset, ids: &[usize], arch: &Architecture, cfg: &TrainConfig) -> Result<Classifier> {
    Ok(fit(ds, ids, arch, cfg, false)?.0)
}

/// Like [`train_on`], also returning the mean training loss after every epoch.
pub fn train_traced(
    ds: &Dataset,
    ids: &[usize],
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(Classifier, Vec<f64>)> {
    fit(ds, ids, arch, cfg, true)
}

fn fit(
    ds: &Dataset,
    ids: &[usize],
    arch: &Architecture,
    cfg: &TrainConfig,
    trace: bool,
) -> Result<(Classifier, Vec<f64>)> {
    cfg.validate()?;
    arch.validate()?;
    if ids.is_empty() {
        return Err(Error::invalid("training set", "no examples"));
    }
    if let Some(&j) = ids.iter().find(|&&j| j >= ds.len()) {
        return Err(Error::Shape(format!("example id {j} outside dataset of {}", ds.len())));
    }
    let mut model = Classifier::init(arch, cfg.init_scale, mix(cfg.seed, 0))?;
    model.check_dataset(ds)?;

    let mut order_rng: DetRng = rng_from_seed(mix(cfg.seed, 1));
    let mut order = ids.to_vec();
    let mut scratch = Scratch::new(arch);
    let mut grads = model.zero_grads();
    let mut history = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            for g in &mut grads {
                g.weights.iter_mut().for_each(|v| *v = 0.0);
                g.bias.iter_mut().for_each(|v| *v = 0.0);
            }
            let mut batch_loss = 0.0;
            for &j in chunk {
                batch_loss += model.accumulate(ds.row(j), ds.label(j), &mut scratch, &mut grads);
            }
            let step = cfg.learning_rate / chunk.len() as f64;
            let mut finite = batch_loss.is_finite();
            for (layer, g) in model.layers.iter_mut().zip(&grads) {
                for (p, d) in layer
                    .weights
                    .iter_mut()
                    .chain(layer.bias.iter_mut())
                    .zip(g.weights.iter().chain(&g.bias))
                {
                    *p -= step * d;
                    finite &= p.is_finite();
                }
            }
            if !finite {
                return Err(Error::Diverged { epoch, batch });
            }
        }
        if trace {
            history.push(model.mean_loss(ds, ids)?);
        }
    }
    Ok((model, history))
}

/// Compare analytic gradients against central finite differences.
///
/// Returns the maximum over checked parameters of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-7)`.
/// Models with more than 4096 parameters are checked on an evenly strided subset.
pub fn gradient_check(model: &Classifier, x: &[f64], y: usize, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::invalid("epsilon", format!("{epsilon} not in (0, 1e-2]")));
    }
    let (_, analytic) = model.loss_gradient(x, y)?;
    let total = model.param_count();
    let stride = total.div_ceil(4096).max(1);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in (0..total).step_by(stride) {
        let orig = model.param(k);
        probe.set_param(k, orig + epsilon);
        let up = probe.loss(x, y)?;
        probe.set_param(k, orig - epsilon);
        let down = probe.loss(x, y)?;
        probe.set_param(k, orig);
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    Ok(worst)
}
