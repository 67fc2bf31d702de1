//! Layer zoo: forward maps, vector-Jacobian products and analytic Lipschitz
//! bounds with respect to the layer input and the layer parameters.
//!
//! Layer-level functions report shape problems as [`Error::Shape`]; the model
//! wraps them with the offending layer index.

mod loss;
mod model;

pub use loss::{loss_lipschitz, loss_value_and_grad, LossSpec, Target};
pub use model::{ModelSpec, Params};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{frobenius_norm, spectral_norm_of, PowerIteration, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupNormSpec {
    pub dim: usize,
    /// Partition of `0..dim` into non-empty disjoint groups.
    pub groups: Vec<Vec<usize>>,
    pub alpha: f64,
    pub kappa: f64,
}

pub const DEFAULT_KAPPA: f64 = 1e-5;

impl GroupNormSpec {
    /// Contiguous groups of (almost) equal size; the first `dim % n` groups
    /// take one extra feature.
    pub fn contiguous(dim: usize, num_groups: usize, alpha: f64, kappa: f64) -> Result<Self> {
        if num_groups == 0 || num_groups > dim {
            return Err(Error::Model(format!(
                "cannot split {dim} features into {num_groups} non-empty groups"
            )));
        }
        let base = dim / num_groups;
        let extra = dim % num_groups;
        let mut groups = Vec::with_capacity(num_groups);
        let mut start = 0;
        for g in 0..num_groups {
            let size = base + usize::from(g < extra);
            groups.push((start..start + size).collect());
            start += size;
        }
        let spec = Self {
            dim,
            groups,
            alpha,
            kappa,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.kappa > 0.0) {
            return Err(Error::Model(format!(
                "group norm needs alpha > 0 and kappa > 0, got alpha={} kappa={}",
                self.alpha, self.kappa
            )));
        }
        let mut seen = vec![false; self.dim];
        for g in &self.groups {
            if g.is_empty() {
                return Err(Error::Model("group norm has an empty group".into()));
            }
            for &j in g {
                if j >= self.dim || seen[j] {
                    return Err(Error::Model(format!(
                        "group norm partition invalid at feature {j}"
                    )));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Model("group norm partition does not cover all features".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `y = Wᵀx (+ b)`, parameters stored as `(in_dim [+1], out_dim)` with
    /// the bias in the last row.
    Dense {
        in_dim: usize,
        out_dim: usize,
        #[serde(default)]
        with_bias: bool,
    },
    /// Stride-1 convolution over `c_in x height x width` images with zero
    /// padding past the bottom/right edges; output keeps the spatial size.
    /// Parameters are `(c_out, c_in, filter_h, filter_w)`.
    Conv2d {
        c_in: usize,
        c_out: usize,
        height: usize,
        width: usize,
        filter_h: usize,
        filter_w: usize,
    },
    GroupNorm(GroupNormSpec),
    Activation { function: Activation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightNorm {
    #[default]
    Spectral,
    Frobenius,
}

/// Knobs shared by every bound computation on a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub norm: WeightNorm,
    /// Use 1/4 for the sigmoid input bound instead of the tabulated 1/2.
    pub sharp_sigmoid: bool,
    pub power: PowerIteration,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            norm: WeightNorm::Spectral,
            sharp_sigmoid: false,
            power: PowerIteration::default(),
        }
    }
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec::Dense {
            in_dim,
            out_dim,
            with_bias: false,
        }
    }

    pub fn relu() -> Self {
        LayerSpec::Activation {
            function: Activation::Relu,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    /// Output dimension for an input of dimension `in_dim`.
    pub fn out_dim(&self, in_dim: usize) -> Result<usize> {
        let (expected, out) = match self {
            LayerSpec::Dense { in_dim: i, out_dim, .. } => (*i, *out_dim),
            LayerSpec::Conv2d {
                c_in,
                c_out,
                height,
                width,
                ..
            } => (c_in * height * width, c_out * height * width),
            LayerSpec::GroupNorm(g) => (g.dim, g.dim),
            LayerSpec::Activation { .. } => (in_dim, in_dim),
        };
        if expected != in_dim {
            return Err(Error::Shape {
                expected: vec![expected],
                actual: vec![in_dim],
            });
        }
        Ok(out)
    }

    pub fn param_shape(&self) -> Vec<usize> {
        match self {
            LayerSpec::Dense {
                in_dim,
                out_dim,
                with_bias,
            } => vec![in_dim + usize::from(*with_bias), *out_dim],
            LayerSpec::Conv2d {
                c_in,
                c_out,
                filter_h,
                filter_w,
                ..
            } => vec![*c_out, *c_in, *filter_h, *filter_w],
            _ => vec![0],
        }
    }

    /// Rows and columns of the matrix whose norm bounds this layer.
    pub fn matricization(&self) -> Option<(usize, usize)> {
        match self {
            LayerSpec::Dense {
                in_dim,
                out_dim,
                with_bias,
            } => Some((in_dim + usize::from(*with_bias), *out_dim)),
            LayerSpec::Conv2d {
                c_in,
                c_out,
                filter_h,
                filter_w,
                ..
            } => Some((*c_out, c_in * filter_h * filter_w)),
            _ => None,
        }
    }

    /// Number of filter taps `h'w'` for convolutions, 1 otherwise.
    fn taps(&self) -> f64 {
        match self {
            LayerSpec::Conv2d {
                filter_h, filter_w, ..
            } => (filter_h * filter_w) as f64,
            _ => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::Dense { in_dim, out_dim, .. } if *in_dim == 0 || *out_dim == 0 => {
                Err(Error::Model("dense layer with zero dimension".into()))
            }
            LayerSpec::Conv2d {
                c_in,
                c_out,
                height,
                width,
                filter_h,
                filter_w,
            } if [c_in, c_out, height, width, filter_h, filter_w].iter().any(|v| **v == 0) => {
                Err(Error::Model("conv layer with zero dimension".into()))
            }
            LayerSpec::GroupNorm(g) => g.validate(),
            _ => Ok(()),
        }
    }
}

fn check_len(t: &Tensor, len: usize) -> Result<()> {
    if t.len() != len {
        return Err(Error::Shape {
            expected: vec![len],
            actual: t.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_params(layer: &LayerSpec, params: &Tensor) -> Result<()> {
    if layer.has_params() && params.shape() != layer.param_shape().as_slice() {
        return Err(Error::Shape {
            expected: layer.param_shape(),
            actual: params.shape().to_vec(),
        });
    }
    Ok(())
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Per-group statistics: centred values, and the clamped denominator.
struct GroupStats {
    centred: Vec<f64>,
    std: f64,
    denom: f64,
}

fn group_stats(g: &GroupNormSpec, x: &[f64], members: &[usize]) -> GroupStats {
    let n = members.len() as f64;
    let mean = members.iter().fold(0.0, |acc, &j| acc + x[j]) / n;
    let centred: Vec<f64> = members.iter().map(|&j| x[j] - mean).collect();
    let var = centred.iter().fold(0.0, |acc, c| acc + c * c) / n;
    let std = (var + g.kappa).sqrt();
    GroupStats {
        centred,
        std,
        denom: g.alpha.max(std),
    }
}

pub fn forward(layer: &LayerSpec, params: &Tensor, x: &Tensor) -> Result<Tensor> {
    let in_dim = x.len();
    let out_dim = layer.out_dim(in_dim)?;
    check_params(layer, params)?;
    let xs = x.data();
    let mut out = vec![0.0; out_dim];
    match layer {
        LayerSpec::Dense {
            in_dim, with_bias, ..
        } => {
            let w = params.data();
            for (i, xi) in xs.iter().enumerate() {
                let row = &w[i * out_dim..(i + 1) * out_dim];
                for (o, wij) in out.iter_mut().zip(row) {
                    *o += wij * xi;
                }
            }
            if *with_bias {
                let bias = &w[in_dim * out_dim..];
                for (o, b) in out.iter_mut().zip(bias) {
                    *o += b;
                }
            }
        }
        LayerSpec::Conv2d {
            c_in,
            c_out,
            height,
            width,
            filter_h,
            filter_w,
        } => {
            let th = params.data();
            for c in 0..*c_out {
                for i in 0..*height {
                    for j in 0..*width {
                        let mut acc = 0.0;
                        for d in 0..*c_in {
                            for r in 0..*filter_h {
                                if i + r >= *height {
                                    break;
                                }
                                for s in 0..*filter_w {
                                    if j + s >= *width {
                                        break;
                                    }
                                    acc += th[((c * c_in + d) * filter_h + r) * filter_w + s]
                                        * xs[(d * height + i + r) * width + j + s];
                                }
                            }
                        }
                        out[(c * height + i) * width + j] = acc;
                    }
                }
            }
        }
        LayerSpec::GroupNorm(g) => {
            for members in &g.groups {
                let st = group_stats(g, xs, members);
                for (&j, c) in members.iter().zip(&st.centred) {
                    out[j] = c / st.denom;
                }
            }
        }
        LayerSpec::Activation { function } => {
            for (o, v) in out.iter_mut().zip(xs) {
                *o = match function {
                    Activation::Relu => v.max(0.0),
                    Activation::Tanh => v.tanh(),
                    Activation::Sigmoid => sigmoid(*v),
                };
            }
        }
    }
    Ok(Tensor::vector(out))
}

/// Returns `(∂L/∂x, ∂L/∂θ)` given `upstream = ∂L/∂y`. Parameterless layers
/// return an empty parameter gradient.
pub fn vjp(layer: &LayerSpec, params: &Tensor, x: &Tensor, upstream: &Tensor) -> Result<(Tensor, Tensor)> {
    let in_dim = x.len();
    let out_dim = layer.out_dim(in_dim)?;
    check_params(layer, params)?;
    check_len(upstream, out_dim)?;
    let xs = x.data();
    let g = upstream.data();
    let mut gx = vec![0.0; in_dim];
    let gp = match layer {
        LayerSpec::Dense { with_bias, .. } => {
            let w = params.data();
            let mut gw = vec![0.0; w.len()];
            for (i, xi) in xs.iter().enumerate() {
                let row = &w[i * out_dim..(i + 1) * out_dim];
                gx[i] = row.iter().zip(g).fold(0.0, |acc, (a, b)| acc + a * b);
                for (gwij, gj) in gw[i * out_dim..(i + 1) * out_dim].iter_mut().zip(g) {
                    *gwij = xi * gj;
                }
            }
            if *with_bias {
                gw[in_dim * out_dim..].copy_from_slice(g);
            }
            Tensor::new(params.shape().to_vec(), gw)?
        }
        LayerSpec::Conv2d {
            c_in,
            c_out,
            height,
            width,
            filter_h,
            filter_w,
        } => {
            let th = params.data();
            let mut gt = vec![0.0; th.len()];
            for c in 0..*c_out {
                for i in 0..*height {
                    for j in 0..*width {
                        let gy = g[(c * height + i) * width + j];
                        for d in 0..*c_in {
                            for r in 0..*filter_h {
                                if i + r >= *height {
                                    break;
                                }
                                for s in 0..*filter_w {
                                    if j + s >= *width {
                                        break;
                                    }
                                    let ti = ((c * c_in + d) * filter_h + r) * filter_w + s;
                                    let xi = (d * height + i + r) * width + j + s;
                                    gx[xi] += th[ti] * gy;
                                    gt[ti] += xs[xi] * gy;
                                }
                            }
                        }
                    }
                }
            }
            Tensor::new(params.shape().to_vec(), gt)?
        }
        LayerSpec::GroupNorm(spec) => {
            for members in &spec.groups {
                let st = group_stats(spec, xs, members);
                let n = members.len() as f64;
                let g_mean = members.iter().fold(0.0, |acc, &j| acc + g[j]) / n;
                if st.std > spec.alpha {
                    // y = c / s(x),  Jᵀg = (P g)/s − c (cᵀg) / (n s³)
                    let cg = members
                        .iter()
                        .zip(&st.centred)
                        .fold(0.0, |acc, (&j, c)| acc + c * g[j]);
                    let s3 = st.std * st.std * st.std;
                    for (&j, c) in members.iter().zip(&st.centred) {
                        gx[j] = (g[j] - g_mean) / st.std - c * cg / (n * s3);
                    }
                } else {
                    for &j in members {
                        gx[j] = (g[j] - g_mean) / spec.alpha;
                    }
                }
            }
            Tensor::empty()
        }
        LayerSpec::Activation { function } => {
            for ((gxi, xi), gi) in gx.iter_mut().zip(xs).zip(g) {
                let d = match function {
                    Activation::Relu => {
                        if *xi > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Activation::Tanh => 1.0 - xi.tanh().powi(2),
                    Activation::Sigmoid => {
                        let s = sigmoid(*xi);
                        s * (1.0 - s)
                    }
                };
                *gxi = gi * d;
            }
            Tensor::empty()
        }
    };
    Ok((Tensor::vector(gx), gp))
}

/// Norm of a layer's parameters under the configured matrix norm; zero for
/// parameterless layers.
pub fn weight_norm(layer: &LayerSpec, params: &Tensor, opts: &BoundOptions) -> Result<f64> {
    let Some((rows, cols)) = layer.matricization() else {
        return Ok(0.0);
    };
    check_params(layer, params)?;
    Ok(match opts.norm {
        WeightNorm::Frobenius => frobenius_norm(params),
        WeightNorm::Spectral => spectral_norm_of(params.data(), rows, cols, opts.power).value,
    })
}

/// Lipschitz bound with respect to the input, given the layer's weight norm
/// (ignored for parameterless layers).
pub fn input_lipschitz_given_norm(layer: &LayerSpec, weight_norm: f64, opts: &BoundOptions) -> f64 {
    match layer {
        LayerSpec::Dense { .. } => weight_norm,
        LayerSpec::Conv2d { .. } => layer.taps().sqrt() * weight_norm,
        LayerSpec::GroupNorm(g) => 1.0 / g.alpha,
        LayerSpec::Activation { function } => match function {
            Activation::Relu | Activation::Tanh => 1.0,
            Activation::Sigmoid if opts.sharp_sigmoid => 0.25,
            Activation::Sigmoid => 0.5,
        },
    }
}

pub fn input_lipschitz(layer: &LayerSpec, params: &Tensor, opts: &BoundOptions) -> Result<f64> {
    let norm = weight_norm(layer, params, opts)?;
    Ok(input_lipschitz_given_norm(layer, norm, opts))
}

/// Lipschitz bound with respect to the parameters, given `x_bound ≥ ‖x‖`.
pub fn param_lipschitz(layer: &LayerSpec, x_bound: f64) -> f64 {
    match layer {
        LayerSpec::Dense { with_bias: false, .. } => x_bound,
        LayerSpec::Dense { with_bias: true, .. } => (x_bound * x_bound + 1.0).sqrt(),
        LayerSpec::Conv2d { .. } => layer.taps().sqrt() * x_bound,
        _ => 0.0,
    }
}

/// Bound on `‖y‖` given `‖x‖ ≤ x_bound` and the layer's weight norm.
pub fn output_norm_bound(
    layer: &LayerSpec,
    x_bound: f64,
    weight_norm: f64,
    out_dim: usize,
    opts: &BoundOptions,
) -> f64 {
    match layer {
        LayerSpec::Dense { with_bias: false, .. } => x_bound * weight_norm,
        LayerSpec::Dense { with_bias: true, .. } => weight_norm * (x_bound * x_bound + 1.0).sqrt(),
        LayerSpec::Conv2d { .. } => x_bound * layer.taps().sqrt() * weight_norm,
        LayerSpec::GroupNorm(g) => (out_dim as f64).sqrt().min(x_bound / g.alpha),
        LayerSpec::Activation {
            function: Activation::Sigmoid,
        } => (out_dim as f64).sqrt(),
        LayerSpec::Activation { .. } => x_bound * input_lipschitz_given_norm(layer, 0.0, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> Tensor {
        Tensor::vector(data.to_vec())
    }

    #[test]
    fn relu_forward_and_vjp() {
        let l = LayerSpec::relu();
        let y = forward(&l, &Tensor::empty(), &v(&[-1.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
        let (gx, gp) = vjp(&l, &Tensor::empty(), &v(&[-1.0, 2.0]), &v(&[5.0, 7.0])).unwrap();
        assert_eq!(gx.data(), &[0.0, 7.0]);
        assert!(gp.is_empty());
    }

    #[test]
    fn dense_identity() {
        let l = LayerSpec::dense(2, 2);
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = forward(&l, &w, &v(&[1.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn dense_param_grad_is_outer_product() {
        let l = LayerSpec::dense(2, 3);
        let w = Tensor::new(vec![2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let x = v(&[2.0, -1.0]);
        let up = v(&[1.0, 0.5, -3.0]);
        let (_, gw) = vjp(&l, &w, &x, &up).unwrap();
        assert_eq!(gw.data(), &[2.0, 1.0, -6.0, -1.0, -0.5, 3.0]);
    }

    #[test]
    fn dense_bias_row() {
        let l = LayerSpec::Dense {
            in_dim: 1,
            out_dim: 2,
            with_bias: true,
        };
        let w = Tensor::new(vec![2, 2], vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let y = forward(&l, &w, &v(&[3.0])).unwrap();
        assert_eq!(y.data(), &[13.0, 26.0]);
        let (_, gw) = vjp(&l, &w, &v(&[3.0]), &v(&[1.0, -1.0])).unwrap();
        assert_eq!(gw.data(), &[3.0, -3.0, 1.0, -1.0]);
    }

    #[test]
    fn group_norm_constant_group_is_zero() {
        let g = GroupNormSpec::contiguous(4, 2, 0.5, DEFAULT_KAPPA).unwrap();
        let y = forward(&LayerSpec::GroupNorm(g), &Tensor::empty(), &v(&[3.0, 3.0, 1.0, 2.0])).unwrap();
        assert_eq!(&y.data()[..2], &[0.0, 0.0]);
        assert!(y.data()[2] < 0.0 && y.data()[3] > 0.0);
    }

    #[test]
    fn group_norm_partition_validation() {
        assert!(GroupNormSpec::contiguous(3, 4, 1.0, 1e-5).is_err());
        let bad = GroupNormSpec {
            dim: 3,
            groups: vec![vec![0, 1], vec![1, 2]],
            alpha: 1.0,
            kappa: 1e-5,
        };
        assert!(bad.validate().is_err());
        let uncovered = GroupNormSpec {
            dim: 3,
            groups: vec![vec![0, 1]],
            alpha: 1.0,
            kappa: 1e-5,
        };
        assert!(uncovered.validate().is_err());
        let g = GroupNormSpec::contiguous(7, 3, 1.0, 1e-5).unwrap();
        assert_eq!(g.groups, vec![vec![0, 1, 2], vec![3, 4], vec![5, 6]]);
    }

    #[test]
    fn conv_single_tap_is_channel_mix() {
        let l = LayerSpec::Conv2d {
            c_in: 1,
            c_out: 1,
            height: 2,
            width: 2,
            filter_h: 2,
            filter_w: 2,
        };
        let th = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = forward(&l, &th, &v(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        // top-left sees all four taps; bottom-right only the first
        assert_eq!(y.data(), &[10.0, 4.0, 3.0, 1.0]);
    }

    #[test]
    fn tabulated_input_bounds() {
        let o = BoundOptions::default();
        let e = Tensor::empty();
        assert_eq!(input_lipschitz(&LayerSpec::relu(), &e, &o).unwrap(), 1.0);
        let sig = LayerSpec::Activation {
            function: Activation::Sigmoid,
        };
        assert_eq!(input_lipschitz(&sig, &e, &o).unwrap(), 0.5);
        let sharp = BoundOptions {
            sharp_sigmoid: true,
            ..o
        };
        assert_eq!(input_lipschitz(&sig, &e, &sharp).unwrap(), 0.25);
        let gn = LayerSpec::GroupNorm(GroupNormSpec::contiguous(4, 1, 0.25, 1e-5).unwrap());
        assert_eq!(input_lipschitz(&gn, &e, &o).unwrap(), 4.0);
    }

    #[test]
    fn tabulated_param_bounds() {
        assert_eq!(param_lipschitz(&LayerSpec::dense(3, 2), 2.0), 2.0);
        let biased = LayerSpec::Dense {
            in_dim: 3,
            out_dim: 2,
            with_bias: true,
        };
        assert_eq!(param_lipschitz(&biased, 0.0), 1.0);
        let conv = LayerSpec::Conv2d {
            c_in: 1,
            c_out: 1,
            height: 4,
            width: 4,
            filter_h: 3,
            filter_w: 3,
        };
        assert_eq!(param_lipschitz(&conv, 1.0), 3.0);
        assert_eq!(param_lipschitz(&LayerSpec::relu(), 5.0), 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let l = LayerSpec::dense(3, 2);
        let w = Tensor::zeros(&[3, 2]);
        assert!(forward(&l, &w, &v(&[1.0, 2.0])).is_err());
        assert!(forward(&l, &Tensor::zeros(&[2, 3]), &v(&[1.0, 2.0, 3.0])).is_err());
        assert!(vjp(&l, &w, &v(&[1.0, 2.0, 3.0]), &v(&[1.0])).is_err());
    }
}
