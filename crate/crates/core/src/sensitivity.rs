//! Per-layer gradient sensitivity bounds.
//!
//! A forward pass propagates bounds `X_k ≥ ‖x_k‖` from the input bound and
//! the recorded weight norms; a backward pass propagates loss-gradient bounds
//! `l_k` and yields `Δ_k = l_{k+1} · L_θ(X_k)`, a bound on the norm of any
//! single sample's gradient with respect to `θ_k`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    input_lipschitz_given_norm, loss_lipschitz, output_norm_bound, param_lipschitz, weight_norm, ModelSpec,
    Params,
};

/// Relative slack allowed between a layer's measured norm and its recorded
/// bound before the parameters count as unclipped.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// `X_1 … X_{K+1}`.
    pub x_bounds: Vec<f64>,
    /// `l_1 … l_{K+1}`; the last entry is the loss bound.
    pub l: Vec<f64>,
    /// `Δ_1 … Δ_K`.
    pub delta: Vec<f64>,
    pub u_theta: Vec<f64>,
}

/// Forward pass only: `X_1 … X_{K+1}`.
pub fn input_norm_bounds(model: &ModelSpec, u_theta: &[f64], x1: f64) -> Result<Vec<f64>> {
    let dims = model.dims()?;
    if u_theta.len() != model.num_layers() {
        return Err(Error::Model(format!(
            "expected {} weight norms, got {}",
            model.num_layers(),
            u_theta.len()
        )));
    }
    let mut xs = Vec::with_capacity(dims.len());
    xs.push(x1);
    for (k, layer) in model.layers.iter().enumerate() {
        let next = output_norm_bound(layer, xs[k], u_theta[k], dims[k + 1], &model.bounds);
        xs.push(next);
    }
    Ok(xs)
}

/// Loss-gradient bound `l_{K+1}` for a model whose weight norms are `u_theta`.
pub fn loss_bound(model: &ModelSpec, u_theta: &[f64], x1: f64) -> Result<f64> {
    let xs = input_norm_bounds(model, u_theta, x1)?;
    Ok(loss_lipschitz(&model.loss, *xs.last().unwrap()))
}

pub fn layer_sensitivity(
    model: &ModelSpec,
    params: &Params,
    u_theta: &[f64],
    x1: f64,
    l_loss: f64,
) -> Result<SensitivityReport> {
    if !(x1 > 0.0) || !x1.is_finite() {
        return Err(Error::Config(format!("input norm bound must be positive, got {x1}")));
    }
    if !(l_loss >= 0.0) || !l_loss.is_finite() {
        return Err(Error::Config(format!("loss bound must be >= 0, got {l_loss}")));
    }
    model.check_params(params)?;
    let x_bounds = input_norm_bounds(model, u_theta, x1)?;
    for (k, layer) in model.layers.iter().enumerate() {
        if !layer.has_params() {
            continue;
        }
        let bound = u_theta[k];
        let norm = weight_norm(layer, params.layer(k), &model.bounds)?;
        if !(bound >= 0.0) || norm > bound + NORM_TOLERANCE * bound.max(1.0) {
            return Err(Error::Unclipped { layer: k, norm, bound });
        }
    }
    Ok(backward(model, x_bounds, u_theta.to_vec(), l_loss))
}

fn backward(model: &ModelSpec, x_bounds: Vec<f64>, u_theta: Vec<f64>, l_loss: f64) -> SensitivityReport {
    let k_layers = model.num_layers();
    let mut l = vec![0.0; k_layers + 1];
    let mut delta = vec![0.0; k_layers];
    l[k_layers] = l_loss;
    for k in (0..k_layers).rev() {
        let layer = &model.layers[k];
        l[k] = l[k + 1] * input_lipschitz_given_norm(layer, u_theta[k], &model.bounds);
        delta[k] = if layer.has_params() {
            l[k + 1] * param_lipschitz(layer, x_bounds[k])
        } else {
            0.0
        };
    }
    SensitivityReport {
        x_bounds,
        l,
        delta,
        u_theta,
    }
}

impl SensitivityReport {
    /// `Δ` recomputed from this report's own `X` and `l`.
    pub fn recompute_delta(&self, model: &ModelSpec) -> Vec<f64> {
        model
            .layers
            .iter()
            .enumerate()
            .map(|(k, layer)| {
                if layer.has_params() {
                    self.l[k + 1] * param_lipschitz(layer, self.x_bounds[k])
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// One line per layer: `k X_k l_k Δ_k` with 1-based `k`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("k\tX_k\tl_k\tdelta_k\n");
        for k in 0..self.delta.len() {
            let _ = writeln!(
                out,
                "{}\t{:e}\t{:e}\t{:e}",
                k + 1,
                self.x_bounds[k],
                self.l[k],
                self.delta[k]
            );
        }
        out
    }
}
