//! Private training: Lip-DP-SGD (weight clipping with analytic per-layer
//! sensitivities), its fixed-norm variant, and the per-sample gradient
//! clipping baseline.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::RdpLedger;
use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::layers::{weight_norm, ModelSpec, Params};
use crate::rng::{streams, RngState};
use crate::sensitivity::{layer_sensitivity, loss_bound, SensitivityReport};
use crate::tensor::gaussian_noise;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    Fixed,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl StepRule {
    pub fn adam() -> Self {
        StepRule::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Divisor of the noised gradient sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// Divide by the expected batch size `s`.
    #[default]
    ExpectedBatch,
    /// Divide by the realized batch size `|V|`.
    RealizedBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Weight clipping with sensitivities from the current weight norms.
    Lip,
    /// Per-sample gradient clipping.
    Classic,
    /// Weight clipping that always rescales to norm `C`.
    Fix,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Lip => "lip",
            Variant::Classic => "classic",
            Variant::Fix => "fix",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lip" => Ok(Variant::Lip),
            "classic" => Ok(Variant::Classic),
            "fix" => Ok(Variant::Fix),
            _ => Err(Error::Config(format!("unknown variant '{s}' (lip|classic|fix)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub noise_multiplier: f64,
    pub expected_batch_size: usize,
    pub clip_threshold: f64,
    pub learning_rate: f64,
    pub step_rule: StepRule,
    pub averaging: AveragingMode,
    pub l2_weight: f64,
    /// Record per-iteration clip-error statistics (classic variant only).
    pub track_clip_error: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            noise_multiplier: 1.0,
            expected_batch_size: 64,
            clip_threshold: 1.0,
            learning_rate: 1e-3,
            step_rule: StepRule::adam(),
            averaging: AveragingMode::ExpectedBatch,
            l2_weight: 0.0,
            track_clip_error: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.expected_batch_size == 0 || self.expected_batch_size > n {
            return fail(format!(
                "expected batch size {} must lie in 1..={n}",
                self.expected_batch_size
            ));
        }
        if !(self.noise_multiplier >= 0.0) || !self.noise_multiplier.is_finite() {
            return fail(format!("noise multiplier {} must be >= 0", self.noise_multiplier));
        }
        if !(self.clip_threshold > 0.0) || !(self.learning_rate > 0.0) || !(self.l2_weight >= 0.0) {
            return fail("clip threshold and learning rate must be > 0, l2 weight >= 0".into());
        }
        if let StepRule::Adam { beta1, beta2, eps } = self.step_rule {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return fail(format!("invalid adam parameters {beta1} {beta2} {eps}"));
            }
        }
        Ok(())
    }

    /// Noised steps per epoch: one pass over the data in expectation.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        ((n as f64 / self.expected_batch_size as f64).round() as usize).max(1)
    }

    pub fn total_steps(&self, n: usize) -> usize {
        self.epochs * self.steps_per_epoch(n)
    }

    pub fn sampling_rate(&self, n: usize) -> f64 {
        self.expected_batch_size as f64 / n as f64
    }
}

/// Includes each index independently with probability `s/n`, redrawing
/// until the batch is non-empty.
pub fn poisson_sample(n: usize, s: usize, rng: &mut RngState) -> Result<Vec<usize>> {
    if s == 0 || s > n {
        return Err(Error::Config(format!("need 1 <= s <= n, got s={s}, n={n}")));
    }
    let q = s as f64 / n as f64;
    loop {
        let batch: Vec<usize> = (0..n).filter(|_| rng.inner().random::<f64>() < q).collect();
        if !batch.is_empty() {
            return Ok(batch);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipMode {
    /// Rescale only layers whose norm exceeds `C`.
    AtMost,
    /// Rescale every non-zero layer to norm exactly `C`.
    Exactly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipResult {
    /// Recorded norm per layer; zero for parameterless layers.
    pub u_theta: Vec<f64>,
    pub params: Params,
}

pub fn clip_weights(model: &ModelSpec, params: Params, c: f64, mode: ClipMode) -> Result<ClipResult> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("clip threshold must be > 0, got {c}")));
    }
    model.check_params(&params)?;
    let mut params = params;
    let mut u_theta = vec![0.0; model.num_layers()];
    for (k, layer) in model.layers.iter().enumerate() {
        if !layer.has_params() {
            continue;
        }
        let norm = weight_norm(layer, params.layer(k), &model.bounds)?;
        if norm == 0.0 {
            continue;
        }
        let target = match mode {
            ClipMode::AtMost => c.min(norm),
            ClipMode::Exactly => c,
        };
        if target != norm {
            params.layer_mut(k).scale(target / norm);
        }
        u_theta[k] = target;
    }
    Ok(ClipResult { u_theta, params })
}

/// Step-rule state; owned by one training run.
#[derive(Debug, Clone)]
pub struct Optimizer {
    rule: StepRule,
    learning_rate: f64,
    first: Option<Params>,
    second: Option<Params>,
    t: i32,
}

impl Optimizer {
    pub fn new(rule: StepRule, learning_rate: f64) -> Self {
        Self {
            rule,
            learning_rate,
            first: None,
            second: None,
            t: 0,
        }
    }

    /// Applies one update in place using the already-privatized gradient.
    pub fn apply(&mut self, params: &mut Params, grad: &Params) -> Result<()> {
        match self.rule {
            StepRule::Fixed => params.axpy(-self.learning_rate, grad),
            StepRule::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let m = self.first.get_or_insert_with(|| grad.zeros_like());
                let v = self.second.get_or_insert_with(|| grad.zeros_like());
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for k in 0..params.len() {
                    let g = grad.layer(k).data();
                    let mk = m.layer_mut(k).data_mut();
                    let vk = v.layer_mut(k).data_mut();
                    let p = params.layer_mut(k).data_mut();
                    for i in 0..g.len() {
                        mk[i] = beta1 * mk[i] + (1.0 - beta1) * g[i];
                        vk[i] = beta2 * vk[i] + (1.0 - beta2) * g[i] * g[i];
                        p[i] -= self.learning_rate * (mk[i] / c1) / ((vk[i] / c2).sqrt() + eps);
                    }
                }
                Ok(())
            }
        }
    }
}

/// Per-sample losses and gradients; computed in parallel, returned in batch order.
pub fn per_sample_grads(
    model: &ModelSpec,
    params: &Params,
    data: &DatasetHandle,
    batch: &[usize],
) -> Result<Vec<(f64, Params)>> {
    batch
        .par_iter()
        .map(|&i| model.sample_grad(params, data.row(i), data.target(i)))
        .collect()
}

/// Mean loss and mean gradient over the whole dataset.
pub fn full_gradient(model: &ModelSpec, params: &Params, data: &DatasetHandle) -> Result<(f64, Params)> {
    let all: Vec<usize> = (0..data.len()).collect();
    let grads = per_sample_grads(model, params, data, &all)?;
    let mut sum = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &grads {
        loss += l;
        sum.axpy(1.0, g)?;
    }
    let n = data.len() as f64;
    sum.scale(1.0 / n);
    Ok((loss / n, sum))
}

fn batch_divisor(cfg: &TrainConfig, batch_len: usize) -> f64 {
    match cfg.averaging {
        AveragingMode::ExpectedBatch => cfg.expected_batch_size as f64,
        AveragingMode::RealizedBatch => batch_len as f64,
    }
}

/// Scales `v` to norm at most `c`; returns the factor applied.
fn clip_factor(norm: f64, c: f64) -> f64 {
    if norm > c {
        c / norm
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub clip: ClipResult,
    /// Mean per-sample loss on the batch, evaluated before the update.
    pub batch_loss: f64,
    /// Classic variant: per-layer `‖g_true − g_clipped‖` and `‖g_clipped‖`
    /// (both averaged over `|V|`), plus the same two norms over all layers.
    pub clip_error: Option<ClipError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipError {
    pub per_layer_error: Vec<f64>,
    pub per_layer_clipped: Vec<f64>,
    pub error_norm: f64,
    pub clipped_norm: f64,
}

/// One Lip-DP-SGD update: noised per-layer gradient sum with std `σΔ_k`,
/// averaged, optionally regularized, applied, then weight-clipped.
#[allow(clippy::too_many_arguments)]
pub fn lip_dp_sgd_step(
    model: &ModelSpec,
    params: &Params,
    data: &DatasetHandle,
    batch: &[usize],
    report: &SensitivityReport,
    cfg: &TrainConfig,
    optimizer: &mut Optimizer,
    noise: &mut RngState,
    mode: ClipMode,
) -> Result<StepOutcome> {
    let grads = per_sample_grads(model, params, data, batch)?;
    let mut sum = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &grads {
        loss += l;
        sum.axpy(1.0, g)?;
    }
    let divisor = batch_divisor(cfg, batch.len());
    for k in 0..model.num_layers() {
        if !model.layers[k].has_params() {
            continue;
        }
        let std = cfg.noise_multiplier * report.delta[k];
        let b = gaussian_noise(sum.layer(k).shape(), std, noise)?;
        let g = sum.layer_mut(k);
        g.axpy(1.0, &b)?;
        g.scale(1.0 / divisor);
        if cfg.l2_weight > 0.0 {
            g.axpy(cfg.l2_weight, params.layer(k))?;
        }
    }
    let mut next = params.clone();
    optimizer.apply(&mut next, &sum)?;
    let clip = clip_weights(model, next, cfg.clip_threshold, mode)?;
    Ok(StepOutcome {
        clip,
        batch_loss: loss / batch.len() as f64,
        clip_error: None,
    })
}

/// One DP-SGD update: every per-sample gradient (all layers concatenated)
/// is clipped to norm `C`, the sum is noised with std `σC` and averaged.
pub fn dp_sgd_step(
    model: &ModelSpec,
    params: &Params,
    data: &DatasetHandle,
    batch: &[usize],
    cfg: &TrainConfig,
    optimizer: &mut Optimizer,
    noise: &mut RngState,
) -> Result<StepOutcome> {
    let grads = per_sample_grads(model, params, data, batch)?;
    let c = cfg.clip_threshold;
    let mut clipped_sum = params.zeros_like();
    let mut raw_sum = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &grads {
        loss += l;
        let f = clip_factor(g.flat_norm(), c);
        clipped_sum.axpy(f, g)?;
        if cfg.track_clip_error {
            raw_sum.axpy(1.0, g)?;
        }
    }

    let clip_error = if cfg.track_clip_error {
        let inv = 1.0 / batch.len() as f64;
        let mut per_layer_error = Vec::with_capacity(model.num_layers());
        let mut per_layer_clipped = Vec::with_capacity(model.num_layers());
        for k in 0..model.num_layers() {
            let mut diff = raw_sum.layer(k).clone();
            diff.axpy(-1.0, clipped_sum.layer(k))?;
            per_layer_error.push(diff.sum_squares().sqrt() * inv);
            per_layer_clipped.push(clipped_sum.layer(k).sum_squares().sqrt() * inv);
        }
        let norm_of = |v: &[f64]| v.iter().fold(0.0, |acc, x| acc + x * x).sqrt();
        Some(ClipError {
            error_norm: norm_of(&per_layer_error),
            clipped_norm: norm_of(&per_layer_clipped),
            per_layer_error,
            per_layer_clipped,
        })
    } else {
        None
    };

    let divisor = batch_divisor(cfg, batch.len());
    let std = cfg.noise_multiplier * c;
    for k in 0..model.num_layers() {
        if !model.layers[k].has_params() {
            continue;
        }
        let b = gaussian_noise(clipped_sum.layer(k).shape(), std, noise)?;
        let g = clipped_sum.layer_mut(k);
        g.axpy(1.0, &b)?;
        g.scale(1.0 / divisor);
        if cfg.l2_weight > 0.0 {
            g.axpy(cfg.l2_weight, params.layer(k))?;
        }
    }
    let mut next = params.clone();
    optimizer.apply(&mut next, &clipped_sum)?;
    let u_theta = model
        .layers
        .iter()
        .zip(next.iter())
        .map(|(l, p)| weight_norm(l, p, &model.bounds))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepOutcome {
        clip: ClipResult { u_theta, params: next },
        batch_loss: loss / batch.len() as f64,
        clip_error,
    })
}

/// One diagnostics row per (iteration, layer with parameters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub iteration: usize,
    pub layer: usize,
    pub weight_norm: f64,
    /// Per-layer sensitivity; empty for the classic variant.
    pub delta: Option<f64>,
    pub loss: f64,
    pub clip_error: Option<f64>,
    pub clipped_norm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub rows: Vec<DiagnosticRow>,
    /// Classic variant with clip tracking: `(‖g_true − g_clip‖, ‖g_clip‖)`
    /// over all parameters, one entry per iteration.
    pub clip_trajectory: Vec<(f64, f64)>,
}

impl Diagnostics {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush().map_err(|e| Error::io("<diagnostics>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params,
    pub u_theta: Vec<f64>,
    pub ledger: RdpLedger,
    pub diagnostics: Diagnostics,
}

/// Runs `cfg.epochs` epochs of the chosen variant.
///
/// Batch sampling, noise and initialization draw from separate streams of
/// `rng`'s seed, so runs differing only in `σ` see the same batches.
pub fn train(
    model: &ModelSpec,
    data: &DatasetHandle,
    cfg: &TrainConfig,
    variant: Variant,
    rng: &RngState,
) -> Result<TrainOutcome> {
    let mut init_rng = rng.stream(streams::INIT);
    let params = model.init_params(&mut init_rng);
    train_from(model, data, cfg, variant, rng, params)
}

/// Like [`train`] but starting from the given parameters.
pub fn train_from(
    model: &ModelSpec,
    data: &DatasetHandle,
    cfg: &TrainConfig,
    variant: Variant,
    rng: &RngState,
    initial: Params,
) -> Result<TrainOutcome> {
    cfg.validate(data.len())?;
    model.check_params(&initial)?;
    if model.input_dim != data.dim() {
        return Err(Error::Config(format!(
            "model expects {} inputs, dataset has {}",
            model.input_dim,
            data.dim()
        )));
    }
    let n = data.len();
    let x1 = data.x1();
    let mut sampling = rng.stream(streams::SAMPLING);
    let mut noise = rng.stream(streams::NOISE);
    let mut optimizer = Optimizer::new(cfg.step_rule, cfg.learning_rate);
    let mut ledger = RdpLedger::new(cfg.sampling_rate(n), cfg.noise_multiplier)?;
    let mut diagnostics = Diagnostics::default();

    let mode = match variant {
        Variant::Fix => ClipMode::Exactly,
        _ => ClipMode::AtMost,
    };
    let ClipResult {
        mut u_theta,
        mut params,
    } = match variant {
        Variant::Classic => {
            let u = model
                .layers
                .iter()
                .zip(initial.iter())
                .map(|(l, p)| weight_norm(l, p, &model.bounds))
                .collect::<Result<Vec<_>>>()?;
            ClipResult {
                u_theta: u,
                params: initial,
            }
        }
        _ => clip_weights(model, initial, cfg.clip_threshold, mode)?,
    };

    for iteration in 0..cfg.total_steps(n) {
        let batch = poisson_sample(n, cfg.expected_batch_size, &mut sampling)?;
        let (outcome, deltas) = match variant {
            Variant::Classic => {
                let o = dp_sgd_step(model, &params, data, &batch, cfg, &mut optimizer, &mut noise)?;
                (o, None)
            }
            Variant::Lip | Variant::Fix => {
                let l_loss = loss_bound(model, &u_theta, x1)?;
                let report = layer_sensitivity(model, &params, &u_theta, x1, l_loss)?;
                let o = lip_dp_sgd_step(
                    model,
                    &params,
                    data,
                    &batch,
                    &report,
                    cfg,
                    &mut optimizer,
                    &mut noise,
                    mode,
                )?;
                (o, Some(report.delta))
            }
        };
        if !outcome.batch_loss.is_finite()
            || !outcome.clip.params.is_finite()
            || outcome.clip.u_theta.iter().any(|u| !u.is_finite())
        {
            return Err(Error::NonFiniteLoss { iteration });
        }
        ledger.step();
        for (k, layer) in model.layers.iter().enumerate() {
            if !layer.has_params() {
                continue;
            }
            diagnostics.rows.push(DiagnosticRow {
                iteration,
                layer: k,
                weight_norm: outcome.clip.u_theta[k],
                delta: deltas.as_ref().map(|d| d[k]),
                loss: outcome.batch_loss,
                clip_error: outcome.clip_error.as_ref().map(|c| c.per_layer_error[k]),
                clipped_norm: outcome.clip_error.as_ref().map(|c| c.per_layer_clipped[k]),
            });
        }
        if let Some(c) = &outcome.clip_error {
            diagnostics.clip_trajectory.push((c.error_norm, c.clipped_norm));
        }
        u_theta = outcome.clip.u_theta;
        params = outcome.clip.params;
    }

    Ok(TrainOutcome {
        params,
        u_theta,
        ledger,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Labels;
    use crate::layers::{LayerSpec, LossSpec};
    use crate::tensor::Tensor;

    fn toy_data(n: usize) -> DatasetHandle {
        let rows = (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                vec![0.8 * a.cos(), 0.8 * a.sin()]
            })
            .collect();
        let labels = Labels::Classes {
            labels: (0..n).map(|i| usize::from(i < n / 2)).collect(),
            num_classes: 2,
        };
        DatasetHandle::new(rows, labels, 1.0, "toy").unwrap()
    }

    fn linear_model() -> ModelSpec {
        ModelSpec::new(2, vec![LayerSpec::dense(2, 2)], LossSpec::SoftmaxCe { temperature: 1.0 }).unwrap()
    }

    #[test]
    fn full_rate_samples_everything() {
        let mut rng = RngState::new(0);
        for _ in 0..10 {
            assert_eq!(poisson_sample(7, 7, &mut rng).unwrap(), (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn poisson_batches_are_never_empty() {
        let mut rng = RngState::new(3);
        for _ in 0..2000 {
            assert!(!poisson_sample(50, 1, &mut rng).unwrap().is_empty());
        }
        assert!(poisson_sample(5, 0, &mut rng).is_err());
        assert!(poisson_sample(5, 6, &mut rng).is_err());
    }

    #[test]
    fn clip_weights_scales_down_only() {
        let m = linear_model();
        let big = Params(vec![Tensor::new(vec![2, 2], vec![2.0, 0.0, 0.0, 0.5]).unwrap()]);
        let r = clip_weights(&m, big, 1.0, ClipMode::AtMost).unwrap();
        assert!((r.u_theta[0] - 1.0).abs() < 1e-12);
        let n = weight_norm(&m.layers[0], r.params.layer(0), &m.bounds).unwrap();
        assert!((n - 1.0).abs() < 1e-9);

        let small = Params(vec![Tensor::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.1]).unwrap()]);
        let r = clip_weights(&m, small.clone(), 1.0, ClipMode::AtMost).unwrap();
        assert_eq!(r.params, small);
        assert!((r.u_theta[0] - 0.5).abs() < 1e-6);

        let zero = Params(vec![Tensor::zeros(&[2, 2])]);
        let r = clip_weights(&m, zero.clone(), 1.0, ClipMode::Exactly).unwrap();
        assert_eq!(r.params, zero);
        assert_eq!(r.u_theta[0], 0.0);
    }

    #[test]
    fn fixed_mode_scales_up() {
        let m = linear_model();
        let small = Params(vec![Tensor::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.1]).unwrap()]);
        let r = clip_weights(&m, small, 2.0, ClipMode::Exactly).unwrap();
        assert_eq!(r.u_theta[0], 2.0);
        let n = weight_norm(&m.layers[0], r.params.layer(0), &m.bounds).unwrap();
        assert!((n - 2.0).abs() < 1e-9);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = Params(vec![Tensor::vector(vec![1.0, -1.0])]);
        let g = Params(vec![Tensor::vector(vec![0.3, -5.0])]);
        let mut opt = Optimizer::new(StepRule::adam(), 0.01);
        opt.apply(&mut p, &g).unwrap();
        assert!((p.layer(0).data()[0] - 0.99).abs() < 1e-6);
        assert!((p.layer(0).data()[1] + 0.99).abs() < 1e-6);
    }

    #[test]
    fn zero_epochs_returns_clipped_init() {
        let m = linear_model();
        let d = toy_data(20);
        let cfg = TrainConfig {
            epochs: 0,
            clip_threshold: 0.1,
            expected_batch_size: 5,
            ..TrainConfig::default()
        };
        let out = train(&m, &d, &cfg, Variant::Lip, &RngState::new(1)).unwrap();
        assert!(out.u_theta[0] <= 0.1 + 1e-12);
        assert_eq!(out.ledger.steps, 0);
        assert_eq!(out.ledger.to_epsilon_delta(0.05).unwrap().epsilon, 0.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let m = linear_model();
        let d = toy_data(10);
        let cfg = TrainConfig {
            expected_batch_size: 11,
            ..TrainConfig::default()
        };
        assert!(train(&m, &d, &cfg, Variant::Lip, &RngState::new(1)).is_err());
    }

    #[test]
    fn non_finite_loss_reports_iteration() {
        let m = linear_model();
        let d = toy_data(10);
        let cfg = TrainConfig {
            epochs: 1,
            expected_batch_size: 10,
            noise_multiplier: 0.0,
            learning_rate: f64::MAX,
            step_rule: StepRule::Fixed,
            clip_threshold: 1.0,
            ..TrainConfig::default()
        };
        let r = train(&m, &d, &cfg, Variant::Classic, &RngState::new(1));
        assert!(matches!(r, Err(Error::NonFiniteLoss { iteration: 0 })), "{r:?}");
    }
}
