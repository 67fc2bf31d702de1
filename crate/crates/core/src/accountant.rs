//! Privacy accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Per-step Rényi DP at order α is `ln(A_α)/(α−1)` with
//! `A_α = E_{z∼N(0,σ²)}[((1−q) + q·exp((2z−1)/(2σ²)))^α]`. Integer orders use
//! the exact binomial expansion of that expectation; fractional orders
//! integrate it numerically. Steps compose additively and the ledger is
//! converted to (ε, δ) by minimizing over the order grid.
//!
//! Noise is calibrated to add/remove adjacency (the noised sum moves by at
//! most one per-sample bound). Under replace-one adjacency the same sum moves
//! by up to twice that bound, so a replace-one guarantee needs σ doubled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer orders 2..=64 followed by the two fractional low orders.
pub fn default_orders() -> Vec<f64> {
    let mut orders: Vec<f64> = (2..=64).map(f64::from).collect();
    orders.extend([1.5, 1.25]);
    orders
}

/// `σ = sensitivity · √(2 ln(1.25/δ)) / ε`.
pub fn gaussian_sigma_for(epsilon: f64, delta: f64, sensitivity: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) || !(sensitivity >= 0.0) {
        return Err(Error::Config(format!(
            "gaussian calibration needs eps > 0, 0 < delta < 1, sensitivity >= 0 (got {epsilon}, {delta}, {sensitivity})"
        )));
    }
    Ok(sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    // sum of logs is exact enough for n <= a few hundred
    let k = k.min(n - k);
    (1..=k).fold(0.0, |acc, i| acc + ((n - k + i) as f64).ln() - (i as f64).ln())
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().fold(0.0, |acc, t| acc + (t - max).exp()).ln()
}

/// Per-step RDP of the subsampled Gaussian mechanism at order `alpha`.
///
/// Returns `f64::INFINITY` (non-private) when `sigma == 0` and `q > 0`.
pub fn rdp_step(q: f64, sigma: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) || !(sigma >= 0.0) || !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::Config(format!(
            "rdp needs 0 <= q <= 1, sigma >= 0, alpha > 1 (got q={q}, sigma={sigma}, alpha={alpha})"
        )));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    if q == 1.0 {
        return Ok(alpha / (2.0 * sigma * sigma));
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_integer(q, sigma, alpha as u64)
    } else {
        log_a_quadrature(q, sigma, alpha)
    };
    Ok((log_a / (alpha - 1.0)).max(0.0))
}

fn log_a_integer(q: f64, sigma: f64, alpha: u64) -> f64 {
    let lq = q.ln();
    let l1q = (-q).ln_1p();
    let s2 = 2.0 * sigma * sigma;
    let terms: Vec<f64> = (0..=alpha)
        .map(|j| {
            let jf = j as f64;
            ln_binomial(alpha, j) + (alpha - j) as f64 * l1q + jf * lq + jf * (jf - 1.0) / s2
        })
        .collect();
    log_sum_exp(&terms)
}

/// `ln A_α` by the trapezoidal rule in log space. The integrand is smooth and
/// decays like a Gaussian on both sides, where the trapezoidal rule converges
/// faster than any power of the step.
fn log_a_quadrature(q: f64, sigma: f64, alpha: f64) -> f64 {
    let s2 = sigma * sigma;
    let ln_q = q.ln();
    let ln_1q = (-q).ln_1p();
    let log_integrand = |z: f64| {
        let ratio = (2.0 * z - 1.0) / (2.0 * s2);
        // ln((1−q) + q e^ratio), stable for both signs of `ratio`
        let mix = if ratio > 0.0 {
            ratio + ln_q + (ln_1q - ratio - ln_q).exp().ln_1p()
        } else {
            ln_1q + (ln_q + ratio - ln_1q).exp().ln_1p()
        };
        -z * z / (2.0 * s2) - 0.5 * (2.0 * std::f64::consts::PI * s2).ln() + alpha * mix
    };
    let lo = -40.0 * sigma - 1.0;
    let hi = alpha + 40.0 * sigma + 1.0;
    let h = sigma / 64.0;
    let n = ((hi - lo) / h).ceil() as usize;
    let logs: Vec<f64> = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5f64.ln() } else { 0.0 };
            log_integrand(lo + i as f64 * h) + w
        })
        .collect();
    log_sum_exp(&logs) + h.ln()
}

/// Composition record: per-step RDP at each order and the number of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpLedger {
    pub orders: Vec<f64>,
    pub rdp_per_step: Vec<f64>,
    pub q: f64,
    pub sigma: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpend {
    pub epsilon: f64,
    pub delta: f64,
    /// Order achieving the minimum; `None` when no step was taken.
    pub argmin_order: Option<f64>,
}

impl RdpLedger {
    pub fn new(q: f64, sigma: f64) -> Result<Self> {
        Self::with_orders(q, sigma, default_orders())
    }

    pub fn with_orders(q: f64, sigma: f64, orders: Vec<f64>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::Config("order grid is empty".into()));
        }
        let rdp_per_step = orders
            .iter()
            .map(|&a| rdp_step(q, sigma, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            orders,
            rdp_per_step,
            q,
            sigma,
            steps: 0,
        })
    }

    pub fn step(&mut self) {
        self.steps += 1;
    }

    pub fn compose(&mut self, steps: u64) {
        self.steps += steps;
    }

    /// Accumulated `ε(α)` for every order.
    pub fn eps_at_order(&self) -> Vec<f64> {
        let t = self.steps as f64;
        self.rdp_per_step
            .iter()
            .map(|r| if self.steps == 0 { 0.0 } else { t * r })
            .collect()
    }

    pub fn to_epsilon_delta(&self, delta: f64) -> Result<PrivacySpend> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
        }
        if self.steps == 0 {
            return Ok(PrivacySpend {
                epsilon: 0.0,
                delta,
                argmin_order: None,
            });
        }
        let log_inv_delta = (1.0 / delta).ln();
        let mut best = (f64::INFINITY, None);
        for (&alpha, eps) in self.orders.iter().zip(self.eps_at_order()) {
            let candidate = eps + log_inv_delta / (alpha - 1.0);
            if candidate < best.0 {
                best = (candidate, Some(alpha));
            }
        }
        Ok(PrivacySpend {
            epsilon: best.0,
            delta,
            argmin_order: best.1,
        })
    }

    pub fn record(&self, delta: f64) -> Result<LedgerRecord> {
        let spend = self.to_epsilon_delta(delta)?;
        Ok(LedgerRecord {
            q: self.q,
            sigma: self.sigma,
            steps: self.steps,
            orders: self.orders.clone(),
            eps_at_order: self.eps_at_order(),
            epsilon: spend.epsilon,
            delta,
            argmin_order: spend.argmin_order,
        })
    }
}

/// Serialized form of a ledger together with its (ε, δ) conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub q: f64,
    pub sigma: f64,
    pub steps: u64,
    pub orders: Vec<f64>,
    #[serde(with = "float_vec")]
    pub eps_at_order: Vec<f64>,
    #[serde(with = "float")]
    pub epsilon: f64,
    pub delta: f64,
    pub argmin_order: Option<f64>,
}

/// JSON has no infinity; non-private spends are written as the string "inf".
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonFloat {
    Num(f64),
    Text(String),
}

impl From<f64> for JsonFloat {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            JsonFloat::Text("inf".into())
        } else {
            JsonFloat::Num(v)
        }
    }
}

impl JsonFloat {
    fn into_f64<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            JsonFloat::Num(v) => Ok(v),
            JsonFloat::Text(t) if t == "inf" => Ok(f64::INFINITY),
            JsonFloat::Text(t) => Err(E::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

mod float {
    use super::JsonFloat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        JsonFloat::from(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        JsonFloat::deserialize(d)?.into_f64()
    }
}

mod float_vec {
    use super::JsonFloat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| JsonFloat::from(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<JsonFloat>::deserialize(d)?.into_iter().map(JsonFloat::into_f64).collect()
    }
}

impl LedgerRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Rebuilds the ledger this record was written from.
    pub fn ledger(&self) -> Result<RdpLedger> {
        let mut l = RdpLedger::with_orders(self.q, self.sigma, self.orders.clone())?;
        l.compose(self.steps);
        Ok(l)
    }
}

/// Smallest noise multiplier (to relative precision 1e-6) for which `steps`
/// compositions at rate `q` stay within `target_epsilon` at `delta`.
pub fn calibrate_sigma(q: f64, steps: u64, target_epsilon: f64, delta: f64) -> Result<f64> {
    let eps_for = |sigma: f64| -> Result<f64> {
        let mut l = RdpLedger::new(q, sigma)?;
        l.compose(steps);
        Ok(l.to_epsilon_delta(delta)?.epsilon)
    };
    let (mut lo, mut hi) = (1e-2, 1.0);
    while eps_for(hi)? > target_epsilon {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Config(format!("cannot reach epsilon {target_epsilon}")));
        }
    }
    while (hi - lo) / hi > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if eps_for(mid)? > target_epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
