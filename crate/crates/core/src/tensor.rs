//! Dense row-major tensors, matrix norms and Gaussian noise.
//!
//! Every reduction in this module sums left to right so that results are
//! bit-reproducible across runs; the sensitivity bounds and therefore the
//! noise scales depend on it.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Rank-1 tensor owning `data`.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Zero-length tensor used as the parameter slot of parameterless layers.
    pub fn empty() -> Self {
        Self {
            shape: vec![0],
            data: Vec::new(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc + a * b))
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc + v * v)
    }

    fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            });
        }
        Ok(())
    }
}

pub fn frobenius_norm(t: &Tensor) -> f64 {
    t.sum_squares().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

/// Outcome of a power iteration. `value` is always a lower bound on the
/// largest singular value; `converged` is false when the iteration budget ran
/// out before the estimated remaining error dropped below the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest singular value of a rank-2 tensor.
pub fn spectral_norm(matrix: &Tensor, cfg: PowerIteration) -> Result<SpectralNorm> {
    if matrix.shape.len() != 2 || matrix.is_empty() {
        return Err(Error::Shape {
            expected: vec![0, 0],
            actual: matrix.shape.clone(),
        });
    }
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::Config(format!(
            "power iteration needs tol > 0 and max_iter >= 1, got {cfg:?}"
        )));
    }
    Ok(spectral_norm_of(
        &matrix.data,
        matrix.shape[0],
        matrix.shape[1],
        cfg,
    ))
}

/// Power iteration on `AᵀA` for a row-major `rows x cols` slice.
///
/// Starts from the normalized all-ones vector. The estimate `sqrt(‖AᵀAv‖)`
/// is non-decreasing, so convergence is judged by extrapolating the
/// geometric tail of successive relative increments.
pub(crate) fn spectral_norm_of(a: &[f64], rows: usize, cols: usize, cfg: PowerIteration) -> SpectralNorm {
    debug_assert_eq!(a.len(), rows * cols);
    if a.iter().all(|v| *v == 0.0) {
        return SpectralNorm {
            value: 0.0,
            converged: true,
            iterations: 0,
        };
    }

    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut u = vec![0.0; rows];
    let mut w = vec![0.0; cols];
    let mut restarted = false;
    let mut prev_est = 0.0;
    let mut prev_delta = f64::INFINITY;
    let mut est = 0.0;

    let mut iter = 0;
    while iter < cfg.max_iter {
        iter += 1;
        mat_vec(a, rows, cols, &v, &mut u);
        mat_t_vec(a, rows, cols, &u, &mut w);
        let w_norm = norm(&w);
        if w_norm == 0.0 {
            if restarted {
                break;
            }
            // start vector lies in the null space; perturb once and restart
            restarted = true;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = 1.0 + (i as f64 + 1.0) / cols as f64;
            }
            let n = norm(&v);
            v.iter_mut().for_each(|x| *x /= n);
            prev_est = 0.0;
            prev_delta = f64::INFINITY;
            continue;
        }
        est = w_norm.sqrt();
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / w_norm;
        }

        let delta = (est - prev_est).abs() / est;
        if delta == 0.0 {
            return SpectralNorm {
                value: est,
                converged: true,
                iterations: iter,
            };
        }
        if delta <= cfg.tol && prev_delta.is_finite() {
            let ratio = delta / prev_delta;
            if ratio < 1.0 && delta * ratio / (1.0 - ratio) <= cfg.tol {
                return SpectralNorm {
                    value: est,
                    converged: true,
                    iterations: iter,
                };
            }
        }
        prev_est = est;
        prev_delta = delta;
    }
    SpectralNorm {
        value: est,
        converged: false,
        iterations: iter,
    }
}

fn mat_vec(a: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        out[r] = row.iter().zip(v).fold(0.0, |acc, (x, y)| acc + x * y);
    }
}

fn mat_t_vec(a: &[f64], rows: usize, cols: usize, u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for r in 0..rows {
        let ur = u[r];
        let row = &a[r * cols..(r + 1) * cols];
        for (o, x) in out.iter_mut().zip(row) {
            *o += x * ur;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
}

/// I.i.d. zero-mean Gaussian entries with the given standard deviation.
/// `std == 0` yields exact zeros and leaves the stream untouched.
pub fn gaussian_noise(shape: &[usize], std: f64, rng: &mut RngState) -> Result<Tensor> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::Config(format!("noise std must be finite and >= 0, got {std}")));
    }
    let mut t = Tensor::zeros(shape);
    if std == 0.0 {
        return Ok(t);
    }
    let gen = rng.inner();
    for v in t.data_mut() {
        let z: f64 = StandardNormal.sample(gen);
        *v = std * z;
    }
    Ok(t)
}
