#![allow(dead_code)]

use lipdp::layers::{forward, Activation, GroupNormSpec, LayerSpec, LossSpec, ModelSpec, Target};
use lipdp::{Params, Tensor};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Random vector with norm uniform in `[0, radius]`.
pub fn ball_point(r: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    let mut v = normal_vec(r, n);
    let s = norm(&v);
    let target = radius * r.random::<f64>();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x *= target / s);
    }
    v
}

pub fn svd_norm(rows: usize, cols: usize, data: &[f64]) -> f64 {
    let m = DMatrix::from_row_slice(rows, cols, data);
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Matrix of a linear map `R^n -> R^m`, built column by column.
pub fn jacobian_of_linear<F: Fn(&[f64]) -> Vec<f64>>(f: F, n: usize, m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(m, n);
    let mut e = vec![0.0; n];
    for c in 0..n {
        e[c] = 1.0;
        let col = f(&e);
        for (r, v) in col.iter().enumerate() {
            j[(r, c)] = *v;
        }
        e[c] = 0.0;
    }
    j
}

pub fn max_singular(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn random_activation(r: &mut ChaCha8Rng) -> Activation {
    match r.random_range(0..3) {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        _ => Activation::Sigmoid,
    }
}

pub fn random_loss(r: &mut ChaCha8Rng) -> LossSpec {
    match r.random_range(0..4) {
        0 => LossSpec::SoftmaxCe {
            temperature: r.random_range(0.2..3.0),
        },
        1 => LossSpec::MulticlassHinge {
            margin: r.random_range(0.1..2.0),
        },
        2 => LossSpec::CosineSimilarity {
            min_output_norm: r.random_range(1e-3..0.1),
        },
        _ => LossSpec::SquaredError {
            target_bound: r.random_range(0.0..5.0),
        },
    }
}

/// Random model of at most 4 layers with every width at most 16; the
/// last layer is dense and sized for `loss`.
pub fn random_model(r: &mut ChaCha8Rng, loss: LossSpec) -> ModelSpec {
    let depth = r.random_range(1..=4);
    let mut layers = Vec::new();
    let input_dim;
    let mut dim;
    if depth > 1 && r.random_bool(0.25) {
        let c_in = r.random_range(1..=2);
        let height = r.random_range(1..=3);
        let width = r.random_range(1..=2);
        let c_out = r.random_range(1..=2);
        layers.push(LayerSpec::Conv2d {
            c_in,
            c_out,
            height,
            width,
            filter_h: r.random_range(1..=height),
            filter_w: r.random_range(1..=width),
        });
        input_dim = c_in * height * width;
        dim = c_out * height * width;
    } else {
        input_dim = r.random_range(1..=16);
        dim = input_dim;
    }
    while layers.len() + 1 < depth {
        let l = match r.random_range(0..3) {
            0 => {
                let out = r.random_range(1..=16);
                let l = LayerSpec::Dense {
                    in_dim: dim,
                    out_dim: out,
                    with_bias: r.random_bool(0.5),
                };
                dim = out;
                l
            }
            1 => LayerSpec::GroupNorm(
                GroupNormSpec::contiguous(dim, r.random_range(1..=dim), r.random_range(0.05..1.5), 1e-5).unwrap(),
            ),
            _ => LayerSpec::Activation {
                function: random_activation(r),
            },
        };
        layers.push(l);
    }
    let out = match loss {
        LossSpec::SquaredError { .. } => 1,
        _ => r.random_range(2..=5),
    };
    layers.push(LayerSpec::Dense {
        in_dim: dim,
        out_dim: out,
        with_bias: r.random_bool(0.5),
    });
    ModelSpec::new(input_dim, layers, loss).unwrap()
}

pub fn random_target(r: &mut ChaCha8Rng, model: &ModelSpec) -> Target {
    match model.loss {
        LossSpec::SquaredError { target_bound } => Target::Value(r.random_range(-target_bound..=target_bound)),
        _ => Target::Class(r.random_range(0..model.output_dim())),
    }
}

/// Parameters with per-layer scales spread over two orders of magnitude.
pub fn random_params(r: &mut ChaCha8Rng, model: &ModelSpec) -> Params {
    Params(
        model
            .layers
            .iter()
            .map(|l| {
                if !l.has_params() {
                    return Tensor::empty();
                }
                let shape = l.param_shape();
                let n = shape.iter().product();
                let scale = 10f64.powf(r.random_range(-1.0..1.0));
                let data = normal_vec(r, n).into_iter().map(|v| v * scale).collect();
                Tensor::new(shape, data).unwrap()
            })
            .collect(),
    )
}

/// `⟨w, layer(θ, x)⟩`.
pub fn probe(layer: &LayerSpec, params: &Tensor, x: &Tensor, w: &[f64]) -> f64 {
    let y = forward(layer, params, x).unwrap();
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Central differences of `f` at `x`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-3)`; the floor keeps central-difference
/// rounding (about 1e-10 absolute) from dominating near-zero gradients.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-3)
}
