//! A small multilayer perceptron with hand-written backpropagation.
//!
//! Hidden layers use one activation throughout; the output layer is linear
//! and trained with softmax cross-entropy under momentum SGD.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::LayerSnapshot;
use crate::scalar::Scalar;
use crate::stats::compute_stat_vector;
use crate::trace::VarKind;

use super::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Tanh => T::one() - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Number of hidden layers, 1..=8.
    pub depth: usize,
    /// Hidden width, 4..=256 (smaller widths allowed for gradient checks).
    pub width: usize,
    pub activation: Activation,
    /// Multiplier on the `1/sqrt(fan_in)` standard deviation of weight init.
    pub init_scale: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epoch: u32,
    /// Constant every bias starts at.
    pub bias_init: f64,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec {
            depth: 2,
            width: 32,
            activation: Activation::Relu,
            init_scale: 1.0,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            max_epoch: 20,
            bias_init: 0.0,
        }
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if !(1..=8).contains(&self.depth) {
            return fail(format!("depth {} outside 1..=8", self.depth));
        }
        if !(1..=256).contains(&self.width) {
            return fail(format!("width {} outside 1..=256", self.width));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return fail("init_scale must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must be in [0, 1)".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.max_epoch == 0 {
            return fail("max_epoch must be positive".into());
        }
        if !self.bias_init.is_finite() {
            return fail("bias_init must be finite".into());
        }
        Ok(())
    }

    /// Trainable parameter count for the given input/output sizes.
    pub fn param_count(&self, n_features: usize, n_classes: usize) -> usize {
        let mut fan_in = n_features;
        let mut total = 0;
        for _ in 0..self.depth {
            total += (fan_in + 1) * self.width;
            fan_in = self.width;
        }
        total + (fan_in + 1) * n_classes
    }
}

/// Fully connected layer; weights are row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    vel_w: Vec<T>,
    vel_b: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    fn forward(&self, x: &[T], batch: usize) -> Vec<T> {
        let mut z = Vec::with_capacity(batch * self.n_out);
        for b in 0..batch {
            let row = &x[b * self.n_in..(b + 1) * self.n_in];
            for o in 0..self.n_out {
                let w = &self.weights[o * self.n_in..(o + 1) * self.n_in];
                let dot = row.iter().zip(w).fold(self.bias[o], |acc, (&xi, &wi)| acc + xi * wi);
                z.push(dot);
            }
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    pub layers: Vec<Dense<T>>,
    pub activation: Activation,
}

/// Parameter gradients, aligned with `ModelState::layers`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<Vec<T>>,
}

struct ForwardPass<T> {
    /// `inputs[l]` feeds layer `l`; the last entry holds the logits.
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
}

impl<T: Scalar> ModelState<T> {
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, n_features: usize, n_classes: usize, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.depth + 1);
        let mut fan_in = n_features;
        for l in 0..=spec.depth {
            let n_out = if l == spec.depth { n_classes } else { spec.width };
            let sd = spec.init_scale / (fan_in as f64).sqrt();
            let normal = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
            let weights = (0..n_out * fan_in).map(|_| T::of(normal.sample(rng))).collect();
            let bias_value = if l == spec.depth { 0.0 } else { spec.bias_init };
            layers.push(Dense {
                n_in: fan_in,
                n_out,
                weights,
                bias: vec![T::of(bias_value); n_out],
                vel_w: vec![T::zero(); n_out * fan_in],
                vel_b: vec![T::zero(); n_out],
            });
            fan_in = n_out;
        }
        Ok(ModelState {
            layers,
            activation: spec.activation,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    fn forward(&self, x: &[T], batch: usize) -> ForwardPass<T> {
        let last = self.layers.len() - 1;
        let mut inputs = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&inputs[l], batch);
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            inputs.push(a);
        }
        ForwardPass { inputs, pre }
    }

    /// Logits for a batch.
    pub fn predict(&self, x: &[T], batch: usize) -> Vec<T> {
        self.forward(x, batch).inputs.pop().unwrap_or_default()
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn loss(&self, x: &[T], labels: &[usize]) -> T {
        let logits = self.predict(x, labels.len());
        let k = self.n_classes();
        let total = labels
            .iter()
            .enumerate()
            .map(|(b, &y)| cross_entropy(&logits[b * k..(b + 1) * k], y))
            .sum::<T>();
        total / T::of_usize(labels.len())
    }

    /// Mean loss, parameter gradients, and per-hidden-layer activations.
    pub fn loss_and_gradients(&self, x: &[T], labels: &[usize]) -> (T, Gradients<T>, Vec<Vec<T>>) {
        let batch = labels.len();
        let k = self.n_classes();
        let fp = self.forward(x, batch);
        let logits = fp.inputs.last().expect("logits");
        let nb = T::of_usize(batch);

        let mut loss = T::zero();
        let mut delta = vec![T::zero(); batch * k];
        for (b, &y) in labels.iter().enumerate() {
            let row = &logits[b * k..(b + 1) * k];
            loss = loss + cross_entropy(row, y);
            let p = softmax(row);
            for c in 0..k {
                let target = if c == y { T::one() } else { T::zero() };
                delta[b * k + c] = (p[c] - target) / nb;
            }
        }

        let n_layers = self.layers.len();
        let mut gw = vec![Vec::new(); n_layers];
        let mut gb = vec![Vec::new(); n_layers];
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let input = &fp.inputs[l];
            let mut dw = vec![T::zero(); layer.n_out * layer.n_in];
            let mut db = vec![T::zero(); layer.n_out];
            for b in 0..batch {
                let d_row = &delta[b * layer.n_out..(b + 1) * layer.n_out];
                let x_row = &input[b * layer.n_in..(b + 1) * layer.n_in];
                for (o, &d) in d_row.iter().enumerate() {
                    db[o] = db[o] + d;
                    let w_row = &mut dw[o * layer.n_in..(o + 1) * layer.n_in];
                    for (g, &xi) in w_row.iter_mut().zip(x_row) {
                        *g = *g + d * xi;
                    }
                }
            }
            if l > 0 {
                let z_prev = &fp.pre[l - 1];
                let a_prev = input;
                let mut next = vec![T::zero(); batch * layer.n_in];
                for b in 0..batch {
                    let d_row = &delta[b * layer.n_out..(b + 1) * layer.n_out];
                    let out = &mut next[b * layer.n_in..(b + 1) * layer.n_in];
                    for (o, &d) in d_row.iter().enumerate() {
                        let w_row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                        for (acc, &w) in out.iter_mut().zip(w_row) {
                            *acc = *acc + d * w;
                        }
                    }
                    for (i, acc) in out.iter_mut().enumerate() {
                        let idx = b * layer.n_in + i;
                        *acc = *acc * self.activation.derivative(z_prev[idx], a_prev[idx]);
                    }
                }
                delta = next;
            }
            gw[l] = dw;
            gb[l] = db;
        }

        let mut acts: Vec<Vec<T>> = fp.inputs;
        acts.remove(0);
        (loss / nb, Gradients { weights: gw, bias: gb }, acts)
    }

    /// Momentum SGD: `v = momentum * v + g; p -= lr * v`.
    pub fn apply_gradients(&mut self, grads: &Gradients<T>, learning_rate: f64, momentum: f64) {
        let lr = T::of(learning_rate);
        let mu = T::of(momentum);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for ((w, v), &g) in layer.weights.iter_mut().zip(&mut layer.vel_w).zip(&grads.weights[l]) {
                *v = mu * *v + g;
                *w = *w - lr * *v;
            }
            for ((b, v), &g) in layer.bias.iter_mut().zip(&mut layer.vel_b).zip(&grads.bias[l]) {
                *v = mu * *v + g;
                *b = *b - lr * *v;
            }
        }
    }

    /// Fraction of rows whose arg-max logit matches the label.
    pub fn accuracy(&self, x: &[T], labels: &[usize]) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let k = self.n_classes();
        let logits = self.predict(x, labels.len());
        let hits = labels
            .iter()
            .enumerate()
            .filter(|(b, &y)| argmax(&logits[b * k..(b + 1) * k]) == y)
            .count();
        hits as f64 / labels.len() as f64
    }
}

fn softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
    let s = e.iter().copied().sum::<T>();
    e.into_iter().map(|v| v / s).collect()
}

fn cross_entropy<T: Scalar>(row: &[T], label: usize) -> T {
    let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
    lse - row[label]
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Less))
        .map_or(0, |(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochResult {
    /// Sample-weighted mean training loss over the epoch.
    pub train_loss: f64,
    /// Holdout accuracy after the epoch.
    pub val_accuracy: f64,
    /// grad, weight and act snapshots for every layer, canonical order.
    pub layers: Vec<LayerSnapshot>,
}

pub fn layer_name(index: usize) -> String {
    format!("dense{index}")
}

fn to_scalar<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

/// Training and holdout data converted to the model's scalar type.
#[derive(Debug, Clone)]
pub struct TrainData<T> {
    pub train_x: Vec<T>,
    pub train_y: Vec<usize>,
    pub val_x: Vec<T>,
    pub val_y: Vec<usize>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl<T: Scalar> TrainData<T> {
    pub fn new(train: &Dataset, val: &Dataset) -> Self {
        TrainData {
            train_x: to_scalar(&train.features),
            train_y: train.labels.clone(),
            val_x: to_scalar(&val.features),
            val_y: val.labels.clone(),
            n_features: train.n_features,
            n_classes: train.n_classes,
        }
    }
}

/// One pass over shuffled minibatches. Gradient and activation statistics
/// come from the last minibatch; weight statistics from the end of the epoch.
pub fn train_epoch<T: Scalar, R: Rng + ?Sized>(
    model: &mut ModelState<T>,
    data: &TrainData<T>,
    spec: &MlpSpec,
    rng: &mut R,
) -> Result<EpochResult> {
    let n = data.train_y.len();
    if n == 0 {
        return Err(Error::invalid("empty training set"));
    }
    let d = data.n_features;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut loss_sum = 0.0;
    let mut last: Option<(Gradients<T>, Vec<Vec<T>>)> = None;
    let mut xb = Vec::with_capacity(spec.batch_size * d);
    let mut yb = Vec::with_capacity(spec.batch_size);
    for chunk in order.chunks(spec.batch_size) {
        xb.clear();
        yb.clear();
        for &i in chunk {
            xb.extend_from_slice(&data.train_x[i * d..(i + 1) * d]);
            yb.push(data.train_y[i]);
        }
        let (loss, grads, acts) = model.loss_and_gradients(&xb, &yb);
        loss_sum += loss.to_f64_lossy() * chunk.len() as f64;
        model.apply_gradients(&grads, spec.learning_rate, spec.momentum);
        last = Some((grads, acts));
    }
    let (grads, acts) = last.expect("at least one minibatch");

    let mut layers = Vec::with_capacity(3 * model.layers.len());
    for (l, g) in grads.weights.iter().enumerate() {
        layers.push(snapshot(l, VarKind::Grad, g)?);
    }
    for (l, layer) in model.layers.iter().enumerate() {
        layers.push(snapshot(l, VarKind::Weight, &layer.weights)?);
    }
    for (l, a) in acts.iter().enumerate() {
        layers.push(snapshot(l, VarKind::Act, a)?);
    }

    Ok(EpochResult {
        train_loss: loss_sum / n as f64,
        val_accuracy: model.accuracy(&data.val_x, &data.val_y),
        layers,
    })
}

fn snapshot<T: Scalar>(l: usize, kind: VarKind, values: &[T]) -> Result<LayerSnapshot> {
    Ok(LayerSnapshot {
        layer_index: l as u32,
        layer_name: layer_name(l),
        var_kind: kind,
        stats: compute_stat_vector(values)?.cast::<f64>(),
    })
}
