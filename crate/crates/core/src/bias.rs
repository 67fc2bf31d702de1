//! Clipping-bias laboratory: expected (clipped) gradients of a linear
//! regression with finite-support errors, their roots, and clip-error
//! trajectories of per-sample clipping.

use serde::{Deserialize, Serialize};

use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::layers::ModelSpec;
use crate::optim::{train, TrainConfig, Variant};
use crate::rng::RngState;

/// `y = a·x + b + e`, `x ~ U[0, 1]`, `e` drawn from `errors` (value, probability).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasScenario {
    pub a: f64,
    pub b: f64,
    pub errors: Vec<(f64, f64)>,
    /// Per-sample clip threshold; `f64::INFINITY` disables clipping.
    pub clip: f64,
}

impl BiasScenario {
    /// `P(9) = 0.1`, `P(-1) = 0.9`, `a = b = 0`, `C = 1`.
    pub fn skewed() -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            errors: vec![(9.0, 0.1), (-1.0, 0.9)],
            clip: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.errors.is_empty() {
            return Err(Error::Config("error distribution is empty".into()));
        }
        if self.errors.iter().any(|(e, p)| !e.is_finite() || !(*p >= 0.0)) {
            return Err(Error::Config("error atoms need finite values and p >= 0".into()));
        }
        let total: f64 = self.errors.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("error probabilities sum to {total}, not 1")));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config(format!("clip threshold must be > 0, got {}", self.clip)));
        }
        if !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::Config("a and b must be finite".into()));
        }
        Ok(())
    }

    /// Per-sample squared-loss gradient at `x` for error `e`, clipped when `clipped`.
    fn sample_gradient(&self, theta: (f64, f64), x: f64, e: f64, clipped: bool) -> [f64; 2] {
        let r = (theta.0 - self.a) * x + (theta.1 - self.b) - e;
        let g = [2.0 * r * x, 2.0 * r];
        if !clipped || self.clip.is_infinite() {
            return g;
        }
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if norm > self.clip {
            let f = self.clip / norm;
            [g[0] * f, g[1] * f]
        } else {
            g
        }
    }
}

/// Tolerances of the adaptive quadrature.
pub const QUADRATURE_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 48;

fn simpson<F: Fn(f64) -> [f64; 2]>(f: &F, a: f64, fa: [f64; 2], b: f64, fb: [f64; 2]) -> ([f64; 2], f64, [f64; 2]) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let h = (b - a) / 6.0;
    let s = [h * (fa[0] + 4.0 * fm[0] + fb[0]), h * (fa[1] + 4.0 * fm[1] + fb[1])];
    (s, m, fm)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> [f64; 2]>(
    f: &F,
    a: f64,
    fa: [f64; 2],
    b: f64,
    fb: [f64; 2],
    whole: [f64; 2],
    m: f64,
    fm: [f64; 2],
    tol: f64,
    depth: u32,
) -> [f64; 2] {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let err = [
        left[0] + right[0] - whole[0],
        left[1] + right[1] - whole[1],
    ];
    if depth == 0 || (err[0].abs() <= 15.0 * tol && err[1].abs() <= 15.0 * tol) {
        return [
            left[0] + right[0] + err[0] / 15.0,
            left[1] + right[1] + err[1] / 15.0,
        ];
    }
    let l = adaptive(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1);
    let r = adaptive(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1);
    [l[0] + r[0], l[1] + r[1]]
}

/// Adaptive Simpson integral of a 2-vector function over `[a, b]`.
pub fn integrate2<F: Fn(f64) -> [f64; 2]>(f: F, a: f64, b: f64, tol: f64) -> [f64; 2] {
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    adaptive(&f, a, fa, b, fb, whole, m, fm, tol, MAX_DEPTH)
}

/// `E_{e,x}[∇ℓ]` (or of its clipped version) at `theta`.
pub fn expected_gradient(scenario: &BiasScenario, theta: (f64, f64), clipped: bool) -> Result<(f64, f64)> {
    scenario.validate()?;
    let mut total = [0.0, 0.0];
    for &(e, p) in &scenario.errors {
        if p == 0.0 {
            continue;
        }
        let g = integrate2(|x| scenario.sample_gradient(theta, x, e, clipped), 0.0, 1.0, QUADRATURE_TOL);
        total[0] += p * g[0];
        total[1] += p * g[1];
    }
    Ok((total[0], total[1]))
}

/// Closed form of the unclipped expected gradient.
pub fn unclipped_closed_form(scenario: &BiasScenario, theta: (f64, f64)) -> (f64, f64) {
    let mean_e: f64 = scenario.errors.iter().map(|(e, p)| e * p).sum();
    let d1 = theta.0 - scenario.a;
    let d2 = theta.1 - scenario.b - mean_e;
    (2.0 * (d1 / 3.0 + d2 / 2.0), 2.0 * (d1 / 2.0 + d2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step of the Jacobian.
    pub fd_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub theta: (f64, f64),
    pub residual: f64,
    pub iterations: usize,
}

fn norm2(v: (f64, f64)) -> f64 {
    (v.0 * v.0 + v.1 * v.1).sqrt()
}

/// Root of the expected clipped gradient, by damped Newton from `(a, b)`.
pub fn find_clipped_fixed_point(scenario: &BiasScenario) -> Result<FixedPoint> {
    find_clipped_fixed_point_with(scenario, NewtonConfig::default())
}

pub fn find_clipped_fixed_point_with(scenario: &BiasScenario, cfg: NewtonConfig) -> Result<FixedPoint> {
    scenario.validate()?;
    let g = |t: (f64, f64)| expected_gradient(scenario, t, true);
    let mut theta = (scenario.a, scenario.b);
    let mut r = g(theta)?;
    let mut res = norm2(r);
    for it in 0..cfg.max_iter {
        if res <= cfg.tol {
            return Ok(FixedPoint {
                theta,
                residual: res,
                iterations: it,
            });
        }
        let h = cfg.fd_step;
        let gp1 = g((theta.0 + h, theta.1))?;
        let gm1 = g((theta.0 - h, theta.1))?;
        let gp2 = g((theta.0, theta.1 + h))?;
        let gm2 = g((theta.0, theta.1 - h))?;
        let j11 = (gp1.0 - gm1.0) / (2.0 * h);
        let j21 = (gp1.1 - gm1.1) / (2.0 * h);
        let j12 = (gp2.0 - gm2.0) / (2.0 * h);
        let j22 = (gp2.1 - gm2.1) / (2.0 * h);
        let det = j11 * j22 - j12 * j21;
        let step = if det.abs() > 1e-14 {
            ((j22 * r.0 - j12 * r.1) / det, (-j21 * r.0 + j11 * r.1) / det)
        } else {
            r
        };
        let mut lambda = 1.0;
        loop {
            let cand = (theta.0 - lambda * step.0, theta.1 - lambda * step.1);
            let rc = g(cand)?;
            let nc = norm2(rc);
            if nc < res || lambda < 1e-8 {
                theta = cand;
                r = rc;
                res = nc;
                break;
            }
            lambda *= 0.5;
        }
    }
    if res <= cfg.tol {
        return Ok(FixedPoint {
            theta,
            residual: res,
            iterations: cfg.max_iter,
        });
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        last: theta,
        residual: res,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub theta1: f64,
    pub theta2: f64,
    pub g1: f64,
    pub g2: f64,
    pub clipped_g1: f64,
    pub clipped_g2: f64,
}

/// Expected gradient field on a `steps × steps` grid over the given box.
pub fn vector_field(
    scenario: &BiasScenario,
    theta1: (f64, f64),
    theta2: (f64, f64),
    steps: usize,
) -> Result<Vec<FieldRow>> {
    if steps < 2 {
        return Err(Error::Config("grid needs at least 2 steps per axis".into()));
    }
    let lerp = |r: (f64, f64), i: usize| r.0 + (r.1 - r.0) * i as f64 / (steps - 1) as f64;
    let mut rows = Vec::with_capacity(steps * steps);
    for i in 0..steps {
        for j in 0..steps {
            let t = (lerp(theta1, i), lerp(theta2, j));
            let g = expected_gradient(scenario, t, false)?;
            let c = expected_gradient(scenario, t, true)?;
            rows.push(FieldRow {
                theta1: t.0,
                theta2: t.1,
                g1: g.0,
                g2: g.1,
                clipped_g1: c.0,
                clipped_g2: c.1,
            });
        }
    }
    Ok(rows)
}

pub fn write_field_csv<W: std::io::Write>(rows: &[FieldRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|e| Error::io("<field>", e))?;
    Ok(())
}

/// Per iteration of a classic-variant run: `(‖g_true − g_clipped‖, ‖g_clipped‖)`
/// with both averages taken over the same batch before noise.
pub fn clip_error_trajectory(
    model: &ModelSpec,
    data: &DatasetHandle,
    cfg: &TrainConfig,
    rng: &RngState,
) -> Result<Vec<(f64, f64)>> {
    let cfg = TrainConfig {
        track_clip_error: true,
        ..cfg.clone()
    };
    Ok(train(model, data, &cfg, Variant::Classic, rng)?.diagnostics.clip_trajectory)
}

/// Samples from the scenario: `x ~ U[0,1]`, `y = a x + b + e`.
pub fn sample_scenario(scenario: &BiasScenario, n: usize, rng: &mut RngState) -> Result<(Vec<f64>, Vec<f64>)> {
    use rand::distr::{weighted::WeightedIndex, Distribution};
    use rand::Rng;
    scenario.validate()?;
    let w = WeightedIndex::new(scenario.errors.iter().map(|(_, p)| *p))
        .map_err(|e| Error::Config(format!("error distribution: {e}")))?;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.inner().random();
        let e = scenario.errors[w.sample(rng.inner())].0;
        xs.push(x);
        ys.push(scenario.a * x + scenario.b + e);
    }
    Ok((xs, ys))
}
