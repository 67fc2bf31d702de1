use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Supervision for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Class(usize),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// `−log softmax(x/τ)_y`.
    SoftmaxCe { temperature: f64 },
    /// Mean over outputs of `max(0, m/2 − x_i·y_i)` with `y_i = +1` for the
    /// labelled class and `−1` elsewhere.
    MulticlassHinge { margin: f64 },
    /// `1 − x_y/‖x‖`; only defined for outputs with `‖x‖ ≥ min_output_norm`.
    CosineSimilarity { min_output_norm: f64 },
    /// `(x − y)²` on a scalar output with `|y| ≤ target_bound`.
    SquaredError { target_bound: f64 },
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match self {
            LossSpec::SoftmaxCe { temperature } => ("temperature", *temperature),
            LossSpec::MulticlassHinge { margin } => ("margin", *margin),
            LossSpec::CosineSimilarity { min_output_norm } => ("min_output_norm", *min_output_norm),
            LossSpec::SquaredError { target_bound } => ("target_bound", *target_bound),
        };
        let ok = match self {
            LossSpec::SquaredError { .. } => v >= 0.0 && v.is_finite(),
            _ => v > 0.0 && v.is_finite(),
        };
        if !ok {
            return Err(Error::Model(format!("invalid loss {name} = {v}")));
        }
        Ok(())
    }
}

fn class_of(target: Target, classes: usize) -> Result<usize> {
    match target {
        Target::Class(c) if c < classes => Ok(c),
        Target::Class(c) => Err(Error::Shape {
            expected: vec![classes],
            actual: vec![c],
        }),
        Target::Value(_) => Err(Error::Config("classification loss needs a class label".into())),
    }
}

/// Loss value and its gradient with respect to the network output.
pub fn loss_value_and_grad(loss: &LossSpec, output: &Tensor, target: Target) -> Result<(f64, Tensor)> {
    let x = output.data();
    let c = x.len();
    match *loss {
        LossSpec::SoftmaxCe { temperature } => {
            let y = class_of(target, c)?;
            let z: Vec<f64> = x.iter().map(|v| v / temperature).collect();
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum = z.iter().fold(0.0, |acc, v| acc + (v - max).exp());
            let lse = max + sum.ln();
            let grad = z
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let p = (v - lse).exp();
                    (p - if i == y { 1.0 } else { 0.0 }) / temperature
                })
                .collect();
            Ok((lse - z[y], Tensor::vector(grad)))
        }
        LossSpec::MulticlassHinge { margin } => {
            let y = class_of(target, c)?;
            let n = c as f64;
            let mut value = 0.0;
            let mut grad = vec![0.0; c];
            for (i, xi) in x.iter().enumerate() {
                let sign = if i == y { 1.0 } else { -1.0 };
                let slack = margin / 2.0 - xi * sign;
                if slack > 0.0 {
                    value += slack / n;
                    grad[i] = -sign / n;
                }
            }
            Ok((value, Tensor::vector(grad)))
        }
        LossSpec::CosineSimilarity { min_output_norm } => {
            let y = class_of(target, c)?;
            let norm = output.sum_squares().sqrt();
            if norm < min_output_norm {
                return Err(Error::LossBound(format!(
                    "output norm {norm} below declared minimum {min_output_norm}"
                )));
            }
            let cos = x[y] / norm;
            let grad = x
                .iter()
                .enumerate()
                .map(|(i, xi)| {
                    let e = if i == y { 1.0 } else { 0.0 };
                    -(e - cos * xi / norm) / norm
                })
                .collect();
            Ok((1.0 - cos, Tensor::vector(grad)))
        }
        LossSpec::SquaredError { target_bound } => {
            let Target::Value(y) = target else {
                return Err(Error::Config("squared error needs a real-valued target".into()));
            };
            if c != 1 {
                return Err(Error::Shape {
                    expected: vec![1],
                    actual: vec![c],
                });
            }
            if y.abs() > target_bound {
                return Err(Error::LossBound(format!(
                    "target {y} exceeds declared bound {target_bound}"
                )));
            }
            let r = x[0] - y;
            Ok((r * r, Tensor::vector(vec![2.0 * r])))
        }
    }
}

/// Bound on `‖∂ℓ/∂x‖` over outputs with `‖x‖ ≤ output_bound`. Only the
/// squared error depends on `output_bound`; the other losses are globally
/// Lipschitz.
pub fn loss_lipschitz(loss: &LossSpec, output_bound: f64) -> f64 {
    match *loss {
        LossSpec::SoftmaxCe { temperature } => std::f64::consts::SQRT_2 / temperature,
        LossSpec::MulticlassHinge { .. } => 1.0,
        LossSpec::CosineSimilarity { min_output_norm } => 1.0 / min_output_norm,
        LossSpec::SquaredError { target_bound } => 2.0 * (output_bound + target_bound),
    }
}
