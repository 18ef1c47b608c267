use serde::{Deserialize, Serialize};

use super::mlp::Activation;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean over all elements of `(y - t)^2`.
    Mse,
    /// Softmax cross-entropy over the final pre-activation; class-index targets.
    CrossEntropy,
    /// Binary cross-entropy on a sigmoid output; targets in `[0, 1]`.
    Bce,
}

#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Values(&'a Tensor),
    Classes(&'a [usize]),
}

/// Batch-mean loss and its gradient with respect to the final
/// pre-activation `z`.
pub(crate) fn loss_and_grad(
    loss: Loss,
    activation: Activation,
    z: &Tensor,
    out: &Tensor,
    target: Target<'_>,
) -> Result<(f64, Tensor)> {
    match (loss, target) {
        (Loss::Mse, Target::Values(t)) => {
            check_same(out, t)?;
            let n = out.len() as f64;
            let mut value = 0.0;
            let grad = out
                .data()
                .iter()
                .zip(t.data())
                .zip(z.data())
                .map(|((&y, &t), &z)| {
                    let d = y - t;
                    value += d * d;
                    2.0 * d / n * activation.derivative(z, y)
                })
                .collect();
            Ok((value / n, Tensor::from_parts(z.shape().to_vec(), grad)))
        }
        (Loss::CrossEntropy, Target::Classes(classes)) => {
            let (rows, cols) = (z.rows(), z.cols());
            if classes.len() != rows {
                return Err(Error::Shape(format!(
                    "{} class targets for a batch of {rows}",
                    classes.len()
                )));
            }
            if let Some(&c) = classes.iter().find(|&&c| c >= cols) {
                return Err(Error::Contract(format!("class index {c} out of range 0..{cols}")));
            }
            let mut value = 0.0;
            let mut grad = Vec::with_capacity(rows * cols);
            for (r, &class) in classes.iter().enumerate() {
                let logits = z.row(r);
                let (lse, probs) = softmax_with_lse(logits);
                value += lse - logits[class];
                grad.extend(
                    probs
                        .iter()
                        .enumerate()
                        .map(|(j, p)| (p - if j == class { 1.0 } else { 0.0 }) / rows as f64),
                );
            }
            Ok((value / rows as f64, Tensor::from_parts(z.shape().to_vec(), grad)))
        }
        (Loss::Bce, Target::Values(t)) => {
            if activation != Activation::Sigmoid {
                return Err(Error::Contract(
                    "binary cross-entropy needs a sigmoid output layer".into(),
                ));
            }
            check_same(out, t)?;
            if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Contract("bce targets must lie in [0, 1]".into()));
            }
            let n = z.len() as f64;
            let mut value = 0.0;
            let grad = z
                .data()
                .iter()
                .zip(out.data())
                .zip(t.data())
                .map(|((&z, &p), &t)| {
                    // -t ln p - (1-t) ln(1-p) == softplus(z) - t z
                    value += softplus(z) - t * z;
                    (p - t) / n
                })
                .collect();
            Ok((value / n, Tensor::from_parts(z.shape().to_vec(), grad)))
        }
        (loss, _) => Err(Error::Contract(format!(
            "target kind does not match loss {loss:?}"
        ))),
    }
}

fn check_same(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.len() != b.len() || a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "output {:?} and target {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Log-sum-exp and the softmax probabilities of one logit row.
pub fn softmax_with_lse(logits: &[f64]) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    (m + s.ln(), exps.into_iter().map(|e| e / s).collect())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_with_lse(logits).1
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}
