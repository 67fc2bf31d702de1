//! Seeded synthetic datasets.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::bias::{sample_scenario, BiasScenario};
use crate::data::{rescale_to_bound, DatasetHandle, Labels};
use crate::error::{Error, Result};
use crate::rng::RngState;

/// Regression data `y = a x + b + e` from a bias scenario, with the scalar
/// feature `x ∈ [0, 1]` (already within `x1 = 1`).
pub fn asymmetric_regression(scenario: &BiasScenario, n: usize, seed: u64) -> Result<DatasetHandle> {
    let mut rng = RngState::with_stream(seed, crate::rng::streams::DATA);
    let (xs, ys) = sample_scenario(scenario, n, &mut rng)?;
    DatasetHandle::new(
        xs.into_iter().map(|x| vec![x]).collect(),
        Labels::Values(ys),
        1.0,
        format!("synthetic:regression:{seed}"),
    )
}

/// Two-class tabular task: Gaussian class clusters in `dim` dimensions with
/// `label_noise` flipped labels, rescaled so the largest row has norm `x1`.
pub fn tabular_classification(n: usize, dim: usize, label_noise: f64, x1: f64, seed: u64) -> Result<DatasetHandle> {
    if dim == 0 || !(0.0..=0.5).contains(&label_noise) {
        return Err(Error::Config(format!("need dim >= 1 and label noise in [0, 0.5], got {dim}, {label_noise}")));
    }
    let mut rng = RngState::with_stream(seed, crate::rng::streams::DATA);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let direction: Vec<f64> = (0..dim).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let sign = if class == 1 { 1.0 } else { -1.0 };
        let row: Vec<f64> = direction
            .iter()
            .map(|d| sign * d + normal.sample(rng.inner()))
            .collect();
        let flip = rng.inner().random::<f64>() < label_noise;
        rows.push(row);
        labels.push(if flip { 1 - class } else { class });
    }
    rescale_to_bound(&mut rows, x1);
    DatasetHandle::new(
        rows,
        Labels::Classes { labels, num_classes: 2 },
        x1,
        format!("synthetic:tabular:{seed}"),
    )
}
