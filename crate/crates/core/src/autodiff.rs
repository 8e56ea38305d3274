//! Small feedforward approximators with reverse-mode gradients.
//!
//! Every network in the crate (generator, discriminator body, value function,
//! posterior) is an [`Approximator`]: a stack of affine layers with leaky-relu
//! hidden activations and either a linear or a softmax head. Parameters live in
//! one flat [`ParamVector`] so that trust-region updates can do vector
//! arithmetic on them directly.
//!
//! Flat layout, per layer in order: the `fan_out x fan_in` weight matrix in
//! row-major order followed by the `fan_out` biases.

use std::ops::{Deref, DerefMut};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;

use crate::error::{check_len, Error, Result};
use crate::rng::SimRng;

/// Negative-side slope of the hidden activation.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::LeakyRelu => "leaky-relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "leaky-relu" => Ok(Activation::LeakyRelu),
            other => Err(Error::Parse(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    Linear,
    Softmax,
}

impl OutputHead {
    pub fn name(self) -> &'static str {
        match self {
            OutputHead::Linear => "linear",
            OutputHead::Softmax => "softmax",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(OutputHead::Linear),
            "softmax" => Ok(OutputHead::Softmax),
            other => Err(Error::Parse(format!("unknown output head '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApproximatorSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_head: OutputHead,
}

impl ApproximatorSpec {
    pub fn new(input_dim: usize, hidden_layers: &[usize], output_dim: usize, head: OutputHead) -> Self {
        Self {
            input_dim,
            hidden_layers: hidden_layers.to_vec(),
            output_dim,
            hidden_activation: Activation::LeakyRelu,
            output_head: head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidSpec("input and output dims must be >= 1".into()));
        }
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return Err(Error::InvalidSpec("hidden layer of size 0".into()));
        }
        if self.output_head == OutputHead::Softmax && self.output_dim < 2 {
            return Err(Error::InvalidSpec("softmax head needs output_dim >= 2".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, input side first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden_layers.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }

    pub fn param_len(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| (i + 1) * o).sum()
    }
}

/// Flat real parameter (or gradient) vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(&self.0).sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &[f64]) {
        for (a, b) in self.0.iter_mut().zip(other) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn extend_from_slice(&mut self, other: &[f64]) {
        self.0.extend_from_slice(other);
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl LayerSlot {
    fn weights<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        let end = self.offset + self.fan_in * self.fan_out;
        ArrayView2::from_shape((self.fan_out, self.fan_in), &params[self.offset..end])
            .expect("layer slot shape")
    }

    fn bias<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        let start = self.offset + self.fan_in * self.fan_out;
        ArrayView1::from(&params[start..start + self.fan_out])
    }
}

/// A feedforward network with a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Approximator {
    spec: ApproximatorSpec,
    params: ParamVector,
    slots: Vec<LayerSlot>,
}

/// Per-layer values kept from a forward pass for the backward pass.
struct ForwardTrace {
    /// Inputs to each layer (`activations[0]` is the network input).
    activations: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&l| l - lse).collect()
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let p = softmax(row.as_slice().expect("contiguous row"));
        row.assign(&ArrayView1::from(&p));
    }
    out
}

impl Approximator {
    /// Builds a network with scaled-uniform weights and zero biases.
    pub fn build(spec: ApproximatorSpec, init_seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = SimRng::seed_from_u64(init_seed);
        for slot in net.slots.clone() {
            let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite init limit");
            let end = slot.offset + slot.fan_in * slot.fan_out;
            for w in &mut net.params[slot.offset..end] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(net)
    }

    pub fn zeros(spec: ApproximatorSpec) -> Result<Self> {
        spec.validate()?;
        let mut slots = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in spec.layer_dims() {
            slots.push(LayerSlot {
                fan_in,
                fan_out,
                offset,
            });
            offset += (fan_in + 1) * fan_out;
        }
        Ok(Self {
            params: ParamVector::zeros(offset),
            spec,
            slots,
        })
    }

    pub fn spec(&self) -> &ApproximatorSpec {
        &self.spec
    }

    pub fn param_len(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn get_params(&self) -> ParamVector {
        self.params.clone()
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        check_len("set_params", self.params.len(), params.len())?;
        self.params = params;
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("forward input", self.spec.input_dim, input.len())?;
        let batch = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(batch)?.into_raw_vec_and_offset().0)
    }

    /// Head output for each row of `inputs`.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let logits = self.logits_batch(inputs)?;
        Ok(match self.spec.output_head {
            OutputHead::Linear => logits,
            OutputHead::Softmax => softmax_rows(&logits),
        })
    }

    /// Output of the last affine layer, before the head is applied.
    pub fn logits_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("forward input", self.spec.input_dim, inputs.ncols())?;
        let mut act = inputs.to_owned();
        let last = self.slots.len() - 1;
        for (l, slot) in self.slots.iter().enumerate() {
            let mut z = times_t(&act, slot.weights(&self.params));
            z += &slot.bias(&self.params);
            if l < last {
                z.mapv_inplace(leaky);
            }
            act = z;
        }
        Ok(act)
    }

    fn trace(&self, inputs: ArrayView2<f64>) -> ForwardTrace {
        let last = self.slots.len() - 1;
        let mut activations = Vec::with_capacity(self.slots.len());
        let mut pre = Vec::with_capacity(last);
        let mut act = inputs.to_owned();
        for (l, slot) in self.slots.iter().enumerate() {
            let mut z = times_t(&act, slot.weights(&self.params));
            z += &slot.bias(&self.params);
            activations.push(act);
            if l < last {
                act = z.mapv(leaky);
                pre.push(z);
            } else {
                act = z;
            }
        }
        ForwardTrace {
            activations,
            pre,
            logits: act,
        }
    }

    /// Gradient of `sum_b <output_b, output_grad_b>` with respect to the parameters,
    /// where `output` is the head output.
    pub fn backward(&self, batch: &[(Vec<f64>, Vec<f64>)]) -> Result<ParamVector> {
        if batch.is_empty() {
            return Ok(ParamVector::zeros(self.params.len()));
        }
        let mut inputs = Array2::zeros((batch.len(), self.spec.input_dim));
        let mut grads = Array2::zeros((batch.len(), self.spec.output_dim));
        for (b, (x, g)) in batch.iter().enumerate() {
            check_len("backward input", self.spec.input_dim, x.len())?;
            check_len("backward output gradient", self.spec.output_dim, g.len())?;
            inputs.row_mut(b).assign(&ArrayView1::from(x.as_slice()));
            grads.row_mut(b).assign(&ArrayView1::from(g.as_slice()));
        }
        self.backward_batch(inputs.view(), grads.view())
    }

    /// Batched form of [`Approximator::backward`].
    pub fn backward_batch(
        &self,
        inputs: ArrayView2<f64>,
        output_grads: ArrayView2<f64>,
    ) -> Result<ParamVector> {
        check_len("backward input", self.spec.input_dim, inputs.ncols())?;
        check_len("backward output gradient", self.spec.output_dim, output_grads.ncols())?;
        check_len("backward batch", inputs.nrows(), output_grads.nrows())?;
        let trace = self.trace(inputs);
        let logit_grads = match self.spec.output_head {
            OutputHead::Linear => output_grads.to_owned(),
            OutputHead::Softmax => {
                // d<p, g>/dz = p * (g - <p, g>)
                let p = softmax_rows(&trace.logits);
                let mut d = Array2::zeros(p.raw_dim());
                for ((mut drow, prow), grow) in d.rows_mut().into_iter().zip(p.rows()).zip(output_grads.rows()) {
                    let inner = prow.dot(&grow);
                    for ((dv, &pv), &gv) in drow.iter_mut().zip(prow).zip(grow) {
                        *dv = pv * (gv - inner);
                    }
                }
                d
            }
        };
        Ok(self.backprop(&trace, logit_grads))
    }

    /// Gradient of `sum_b <logits_b, logit_grads_b>`, bypassing the head.
    pub fn backward_logits_batch(
        &self,
        inputs: ArrayView2<f64>,
        logit_grads: ArrayView2<f64>,
    ) -> Result<ParamVector> {
        check_len("backward input", self.spec.input_dim, inputs.ncols())?;
        check_len("backward logit gradient", self.spec.output_dim, logit_grads.ncols())?;
        check_len("backward batch", inputs.nrows(), logit_grads.nrows())?;
        let trace = self.trace(inputs);
        Ok(self.backprop(&trace, logit_grads.to_owned()))
    }

    fn backprop(&self, trace: &ForwardTrace, mut delta: Array2<f64>) -> ParamVector {
        let mut grad = ParamVector::zeros(self.params.len());
        for l in (0..self.slots.len()).rev() {
            let slot = self.slots[l];
            let dw = delta.t().dot(&trace.activations[l]);
            let db = delta.sum_axis(Axis(0));
            let w_end = slot.offset + slot.fan_in * slot.fan_out;
            grad[slot.offset..w_end].copy_from_slice(dw.as_standard_layout().as_slice().expect("contiguous"));
            grad[w_end..w_end + slot.fan_out].copy_from_slice(db.as_slice().expect("contiguous"));
            if l > 0 {
                let mut next = delta.dot(&slot.weights(&self.params));
                next.zip_mut_with(&trace.pre[l - 1], |d, &z| *d *= leaky_grad(z));
                delta = next;
            }
        }
        grad
    }

    /// Forward-mode directional derivative of the logits along `tangent`
    /// in parameter space. Returns `(logits, d logits)`.
    pub fn jvp_logits_batch(
        &self,
        inputs: ArrayView2<f64>,
        tangent: &[f64],
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        check_len("jvp input", self.spec.input_dim, inputs.ncols())?;
        check_len("jvp tangent", self.params.len(), tangent.len())?;
        let last = self.slots.len() - 1;
        let mut act = inputs.to_owned();
        let mut dact: Option<Array2<f64>> = None;
        for (l, slot) in self.slots.iter().enumerate() {
            let w = slot.weights(&self.params);
            let dw = slot.weights(tangent);
            let mut z = times_t(&act, w);
            z += &slot.bias(&self.params);
            let mut dz = times_t(&act, dw);
            dz += &slot.bias(tangent);
            if let Some(da) = &dact {
                dz += &times_t(da, w);
            }
            if l < last {
                dz.zip_mut_with(&z, |d, &zv| *d *= leaky_grad(zv));
                z.mapv_inplace(leaky);
            }
            act = z;
            dact = Some(dz);
        }
        Ok((act, dact.expect("at least one layer")))
    }
}

/// `a * w^T` in row-major layout; gemm may hand back column-major output
/// when `a` has a single column.
fn times_t(a: &Array2<f64>, w: ArrayView2<f64>) -> Array2<f64> {
    let z = a.dot(&w.t());
    if z.is_standard_layout() {
        z
    } else {
        z.as_standard_layout().into_owned()
    }
}

/// Stacks equally sized rows into a matrix.
pub fn stack_rows(rows: &[Vec<f64>], width: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((rows.len(), width));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        check_len("stack_rows", width, src.len())?;
        dst.assign(&ArrayView1::from(src.as_slice()));
    }
    Ok(out)
}
