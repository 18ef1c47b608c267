use std::hash::Hasher;

use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use super::loss::{loss_and_grad, Loss, Target};
use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// d activation / d z, given both the pre-activation and its output.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "identity" => Activation::Identity,
            _ => return None,
        })
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer. `weight` is stored `[in, out]` so a batch
/// `[n, in]` maps to `x · W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn input_width(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_width(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Feed-forward network over the dense + activation vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Per-layer intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    output: Tensor,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn into_output(self) -> Tensor {
        self.output
    }

    /// Pre-activation of the final layer.
    pub fn logits(&self) -> &Tensor {
        self.pre.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Gradients in the same layer order and shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Tensor::zeros(l.weight.shape()),
                    bias: Tensor::zeros(l.bias.shape()),
                })
                .collect(),
        }
    }

    /// Parameter-order views `w0, b0, w1, b1, ...`.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.data()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight.data_mut().iter_mut().for_each(|v| *v *= s);
            l.bias.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Result of a backward pass: parameter gradients and, on request, the
/// gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: Gradients,
    pub input_grad: Option<Tensor>,
}

impl Mlp {
    /// Glorot-uniform initialised network; `widths` lists input, hidden and
    /// output widths, `activations` one tag per layer.
    pub fn new(widths: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(Error::Shape(format!(
                "{} widths need {} activations, got {}",
                widths.len(),
                widths.len().saturating_sub(1),
                activations.len()
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = (0..fan_in * fan_out)
                    .map(|_| rng.uniform_range(-a, a))
                    .collect();
                Dense {
                    weight: Tensor::from_parts(vec![fan_in, fan_out], weight),
                    bias: Tensor::zeros(&[fan_out]),
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.shape().len() != 2 || l.bias.shape() != [l.output_width()] {
                return Err(Error::Shape(format!(
                    "layer {i}: weight {:?} and bias {:?} are inconsistent",
                    l.weight.shape(),
                    l.bias.shape()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].output_width(),
                    i + 1,
                    pair[1].input_width()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").output_width()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(Dense::output_width))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameter views in order `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.data()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let Dense { weight, bias, .. } = l;
                [weight.data_mut(), bias.data_mut()]
            })
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Hash over the exact bit patterns of every parameter.
    pub fn digest(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for p in self.params() {
            for v in p {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "network expects {} input features, got {}",
                self.input_width(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, &h);
            let act = layer.activation;
            z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            check_finite(&z, i)?;
            h = z;
        }
        Ok(reshape_batch(h, x))
    }

    /// Forward pass that keeps every layer's input and pre-activation.
    pub fn forward_trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = Tensor::from_parts(vec![x.rows(), x.cols()], x.data().to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, &h);
            check_finite(&z, i)?;
            let act = layer.activation;
            let a = z.map(|v| act.apply(v));
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Ok(Trace {
            inputs,
            pre,
            output: h,
        })
    }

    /// Backpropagates a gradient given with respect to the network output
    /// (post-activation).
    pub fn backward_output(
        &self,
        trace: &Trace,
        grad_output: &Tensor,
        want_input_grad: bool,
    ) -> Result<Backprop> {
        if grad_output.len() != trace.output.len() {
            return Err(Error::Shape(format!(
                "output gradient has {} entries, output has {}",
                grad_output.len(),
                trace.output.len()
            )));
        }
        let last = self.layers.len() - 1;
        let act = self.layers[last].activation;
        let dz: Vec<f64> = grad_output
            .data()
            .iter()
            .zip(trace.pre[last].data())
            .zip(trace.output.data())
            .map(|((g, &z), &a)| g * act.derivative(z, a))
            .collect();
        let dz = Tensor::from_parts(trace.pre[last].shape().to_vec(), dz);
        self.backward_preact(trace, dz, want_input_grad)
    }

    /// Backpropagates a gradient given with respect to the final
    /// pre-activation.
    pub fn backward_preact(
        &self,
        trace: &Trace,
        mut dz: Tensor,
        want_input_grad: bool,
    ) -> Result<Backprop> {
        let n = dz.rows();
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut input_grad = None;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let (fan_in, fan_out) = (layer.input_width(), layer.output_width());
            let input = &trace.inputs[i];

            let mut dw = vec![0.0; fan_in * fan_out];
            gemm(fan_in, n, fan_out, input.data(), true, dz.data(), false, &mut dw, false);
            let mut db = vec![0.0; fan_out];
            for r in 0..n {
                for (b, g) in db.iter_mut().zip(dz.row(r)) {
                    *b += g;
                }
            }
            let dw = Tensor::from_parts(vec![fan_in, fan_out], dw);
            let db = Tensor::from_parts(vec![fan_out], db);
            check_finite(&dw, i)?;
            layers.push(LayerGrad {
                weight: dw,
                bias: db,
            });

            if i == 0 && !want_input_grad {
                break;
            }
            let mut dx = vec![0.0; n * fan_in];
            gemm(n, fan_out, fan_in, dz.data(), false, layer.weight.data(), true, &mut dx, false);
            if i == 0 {
                input_grad = Some(Tensor::from_parts(vec![n, fan_in], dx));
                break;
            }
            let prev_act = self.layers[i - 1].activation;
            for ((g, &z), &a) in dx
                .iter_mut()
                .zip(trace.pre[i - 1].data())
                .zip(trace.inputs[i].data())
            {
                *g *= prev_act.derivative(z, a);
            }
            dz = Tensor::from_parts(vec![n, fan_in], dx);
        }
        layers.reverse();
        Ok(Backprop {
            grads: Gradients { layers },
            input_grad,
        })
    }

    /// Batch-mean loss and parameter gradients.
    pub fn backward(&self, x: &Tensor, loss: Loss, target: Target<'_>) -> Result<(f64, Gradients)> {
        let trace = self.forward_trace(x)?;
        let last = self.layers.last().expect("non-empty");
        let (value, dz) = loss_and_grad(
            loss,
            last.activation,
            trace.logits(),
            trace.output(),
            target,
        )?;
        if !value.is_finite() {
            return Err(Error::NumericalFault {
                layer: self.layers.len() - 1,
                detail: "loss is not finite".into(),
            });
        }
        let bp = self.backward_preact(&trace, dz, false)?;
        Ok((value, bp.grads))
    }

    /// Batch-mean loss of a traced forward pass and its gradient with
    /// respect to the final pre-activation.
    pub fn loss_grad(&self, trace: &Trace, loss: Loss, target: Target<'_>) -> Result<(f64, Tensor)> {
        let last = self.layers.last().expect("non-empty");
        loss_and_grad(loss, last.activation, trace.logits(), trace.output(), target)
    }

    /// Batch-mean loss without gradients.
    pub fn loss(&self, x: &Tensor, loss: Loss, target: Target<'_>) -> Result<f64> {
        let trace = self.forward_trace(x)?;
        let last = self.layers.last().expect("non-empty");
        let (value, _) = loss_and_grad(loss, last.activation, trace.logits(), trace.output(), target)?;
        Ok(value)
    }
}

fn affine(layer: &Dense, h: &Tensor) -> Tensor {
    let n = h.rows();
    let (fan_in, fan_out) = (layer.input_width(), layer.output_width());
    let mut z = Vec::with_capacity(n * fan_out);
    for _ in 0..n {
        z.extend_from_slice(layer.bias.data());
    }
    gemm(n, fan_in, fan_out, h.data(), false, layer.weight.data(), false, &mut z, true);
    Tensor::from_parts(vec![n, fan_out], z)
}

fn check_finite(t: &Tensor, layer: usize) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericalFault {
            layer,
            detail: "non-finite activation or gradient".into(),
        })
    }
}

/// Restores the caller's leading batch dimensions on the output.
fn reshape_batch(out: Tensor, x: &Tensor) -> Tensor {
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("non-empty") = out.cols();
    Tensor::from_parts(shape, out.into_data())
}
