use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{forward, loss_value_and_grad, vjp, BoundOptions, LayerSpec, LossSpec, Target};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// A feed-forward network `f = f_K ∘ … ∘ f_1` followed by a loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub loss: LossSpec,
    #[serde(default)]
    pub bounds: BoundOptions,
}

/// One parameter tensor per layer; parameterless layers hold an empty tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params(pub Vec<Tensor>);

impl Params {
    pub fn layer(&self, k: usize) -> &Tensor {
        &self.0[k]
    }

    pub fn layer_mut(&mut self, k: usize) -> &mut Tensor {
        &mut self.0[k]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.0.iter()
    }

    pub fn zeros_like(&self) -> Self {
        Params(self.0.iter().map(|t| Tensor::zeros(t.shape())).collect())
    }

    /// Squared Euclidean norm of all parameters concatenated.
    pub fn sum_squares(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, t| acc + t.sum_squares())
    }

    pub fn flat_norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    pub fn axpy(&mut self, alpha: f64, other: &Params) -> Result<()> {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|t| t.scale(factor));
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Tensor::is_finite)
    }
}

impl ModelSpec {
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>, loss: LossSpec) -> Result<Self> {
        let m = Self {
            input_dim,
            layers,
            loss,
            bounds: BoundOptions::default(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_bounds(mut self, bounds: BoundOptions) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Model("a model needs at least one layer".into()));
        }
        self.loss.validate()?;
        for (k, l) in self.layers.iter().enumerate() {
            l.validate().map_err(|e| Error::Layer {
                layer: k,
                reason: e.to_string(),
            })?;
        }
        self.dims().map(|_| ())
    }

    /// Dimensions of `x_1 … x_{K+1}`.
    pub fn dims(&self) -> Result<Vec<usize>> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.input_dim);
        for (k, l) in self.layers.iter().enumerate() {
            let d = l.out_dim(*dims.last().unwrap()).map_err(|e| Error::Layer {
                layer: k,
                reason: e.to_string(),
            })?;
            dims.push(d);
        }
        Ok(dims)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.dims().map(|d| *d.last().unwrap()).unwrap_or(0)
    }

    /// Uniform(−1/√fan_in, 1/√fan_in) initialization; callers clip afterwards.
    pub fn init_params(&self, rng: &mut RngState) -> Params {
        let tensors = self
            .layers
            .iter()
            .map(|l| {
                let fan_in = match l {
                    LayerSpec::Dense { in_dim, .. } => *in_dim,
                    LayerSpec::Conv2d {
                        c_in,
                        filter_h,
                        filter_w,
                        ..
                    } => c_in * filter_h * filter_w,
                    _ => return Tensor::empty(),
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut t = Tensor::zeros(&l.param_shape());
                for v in t.data_mut() {
                    *v = rng.inner().random_range(-bound..=bound);
                }
                t
            })
            .collect();
        Params(tensors)
    }

    pub fn check_params(&self, params: &Params) -> Result<()> {
        if params.len() != self.layers.len() {
            return Err(Error::Model(format!(
                "expected {} parameter tensors, got {}",
                self.layers.len(),
                params.len()
            )));
        }
        for (k, (l, p)) in self.layers.iter().zip(params.iter()).enumerate() {
            if l.has_params() && p.shape() != l.param_shape().as_slice() {
                return Err(Error::Layer {
                    layer: k,
                    reason: format!("parameter shape {:?}, expected {:?}", p.shape(), l.param_shape()),
                });
            }
        }
        Ok(())
    }

    /// Activations `x_1 … x_{K+1}` for a single input.
    pub fn forward_all(&self, params: &Params, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (k, l) in self.layers.iter().enumerate() {
            let y = forward(l, params.layer(k), acts.last().unwrap()).map_err(|e| Error::Layer {
                layer: k,
                reason: e.to_string(),
            })?;
            acts.push(y);
        }
        Ok(acts)
    }

    pub fn predict(&self, params: &Params, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_all(params, x)?.pop().unwrap())
    }

    /// Loss and per-layer parameter gradient for one sample.
    pub fn sample_grad(&self, params: &Params, x: &Tensor, target: Target) -> Result<(f64, Params)> {
        let acts = self.forward_all(params, x)?;
        let (loss, mut upstream) = loss_value_and_grad(&self.loss, acts.last().unwrap(), target)?;
        let mut grads = vec![Tensor::empty(); self.layers.len()];
        for k in (0..self.layers.len()).rev() {
            let (gx, gp) = vjp(&self.layers[k], params.layer(k), &acts[k], &upstream).map_err(|e| {
                Error::Layer {
                    layer: k,
                    reason: e.to_string(),
                }
            })?;
            grads[k] = gp;
            upstream = gx;
        }
        Ok((loss, Params(grads)))
    }

    pub fn loss(&self, params: &Params, x: &Tensor, target: Target) -> Result<f64> {
        let out = self.predict(params, x)?;
        Ok(loss_value_and_grad(&self.loss, &out, target)?.0)
    }
}
