//! Experiment configuration, orchestration and result emission.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::accountant::LedgerRecord;
use crate::data::{load_csv, load_idx, load_preprocessed, CsvSchema, DatasetHandle, Labels};
use crate::error::{Error, Result};
use crate::layers::{Activation, BoundOptions, GroupNormSpec, LayerSpec, LossSpec, ModelSpec, Params, DEFAULT_KAPPA};
use crate::optim::{train, Diagnostics, TrainConfig, Variant};
use crate::rng::{streams, RngState};
use crate::synthetic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum DatasetConfig {
    Csv {
        path: PathBuf,
        schema: CsvSchema,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        x1: f64,
    },
    /// Output of `save_preprocessed`.
    Preprocessed { path: PathBuf },
    /// Gaussian two-class clusters.
    SyntheticTabular {
        n: usize,
        dim: usize,
        label_noise: f64,
        x1: f64,
        seed: u64,
    },
}

impl DatasetConfig {
    pub fn load(&self) -> Result<DatasetHandle> {
        match self {
            DatasetConfig::Csv { path, schema } => Ok(load_csv(path, schema)?.0),
            DatasetConfig::Idx { images, labels, x1 } => load_idx(images, labels, *x1),
            DatasetConfig::Preprocessed { path } => load_preprocessed(path),
            DatasetConfig::SyntheticTabular {
                n,
                dim,
                label_noise,
                x1,
                seed,
            } => synthetic::tabular_classification(*n, *dim, *label_noise, *x1, *seed),
        }
    }
}

/// Layer description with the input size inferred from the previous layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerConfig {
    Dense {
        out_dim: usize,
        #[serde(default)]
        with_bias: bool,
    },
    Conv2d {
        c_in: usize,
        c_out: usize,
        height: usize,
        width: usize,
        filter_h: usize,
        filter_w: usize,
    },
    GroupNorm {
        num_groups: usize,
        alpha: f64,
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
    Activation { function: Activation },
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<LayerConfig>,
    pub loss: LossSpec,
    #[serde(default)]
    pub bounds: BoundOptions,
}

impl ModelConfig {
    pub fn build(&self, input_dim: usize) -> Result<ModelSpec> {
        let mut dim = input_dim;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            let spec = match l {
                LayerConfig::Dense { out_dim, with_bias } => LayerSpec::Dense {
                    in_dim: dim,
                    out_dim: *out_dim,
                    with_bias: *with_bias,
                },
                LayerConfig::Conv2d {
                    c_in,
                    c_out,
                    height,
                    width,
                    filter_h,
                    filter_w,
                } => LayerSpec::Conv2d {
                    c_in: *c_in,
                    c_out: *c_out,
                    height: *height,
                    width: *width,
                    filter_h: *filter_h,
                    filter_w: *filter_w,
                },
                LayerConfig::GroupNorm {
                    num_groups,
                    alpha,
                    kappa,
                } => LayerSpec::GroupNorm(
                    GroupNormSpec::contiguous(dim, *num_groups, *alpha, *kappa)
                        .map_err(|e| Error::Layer {
                            layer: k,
                            reason: e.to_string(),
                        })?,
                ),
                LayerConfig::Activation { function } => LayerSpec::Activation { function: *function },
            };
            dim = spec.out_dim(dim).map_err(|e| Error::Layer {
                layer: k,
                reason: e.to_string(),
            })?;
            layers.push(spec);
        }
        Ok(ModelSpec::new(input_dim, layers, self.loss)?.with_bounds(self.bounds))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub variant: Variant,
    /// Defaults to `1/n` of the training split when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub variant: Variant,
    pub seed: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub accuracy: f64,
    pub runtime_s: f64,
    /// Semicolon-separated per-layer weight norms (parameterized layers only).
    pub final_weight_norms: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub row: ResultRow,
    pub ledger: LedgerRecord,
    pub diagnostics: Diagnostics,
    pub params: Params,
    pub resolved: ExperimentConfig,
}

/// Index of the largest output; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of argmax-correct predictions.
pub fn evaluate(model: &ModelSpec, params: &Params, data: &DatasetHandle) -> Result<f64> {
    let Labels::Classes { labels, .. } = data.labels() else {
        return Err(Error::Config("accuracy needs class labels".into()));
    };
    let mut correct = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let out = model.predict(params, data.row(i))?;
        if argmax(out.data()) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Trains on a seeded 80/20 stratified split of an already-loaded dataset.
pub fn run_on(config: &ExperimentConfig, data: &DatasetHandle) -> Result<ExperimentOutcome> {
    let start = Instant::now();
    let rng = RngState::new(config.seed);
    let (train_set, test_set) = data.stratified_split(&mut rng.stream(streams::SPLIT))?;
    let model = config.model.build(data.dim())?;
    let delta = config.delta.unwrap_or(1.0 / train_set.len() as f64);
    let outcome = train(&model, &train_set, &config.train, config.variant, &rng).map_err(|e| Error::Aborted {
        source: Box::new(e),
        config: config.to_toml().unwrap_or_default().replace('\n', "; "),
    })?;
    let accuracy = evaluate(&model, &outcome.params, &test_set)?;
    let ledger = outcome.ledger.record(delta)?;
    let final_weight_norms = model
        .layers
        .iter()
        .zip(&outcome.u_theta)
        .filter(|(l, _)| l.has_params())
        .map(|(_, u)| format!("{u:?}"))
        .collect::<Vec<_>>()
        .join(";");
    let mut resolved = config.clone();
    resolved.delta = Some(delta);
    Ok(ExperimentOutcome {
        row: ResultRow {
            variant: config.variant,
            seed: config.seed,
            epsilon: ledger.epsilon,
            delta,
            accuracy,
            runtime_s: start.elapsed().as_secs_f64(),
            final_weight_norms,
        },
        ledger,
        diagnostics: outcome.diagnostics,
        params: outcome.params,
        resolved,
    })
}

/// Loads the dataset, trains, evaluates, and writes `results.csv`,
/// `ledger.json`, `diagnostics.csv` and `resolved.toml` to the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let data = config.dataset.load()?;
    let outcome = run_on(config, &data)?;
    write_outputs(&outcome, &config.output_dir)?;
    Ok(outcome)
}

pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&results)?;
    w.serialize(&outcome.row)?;
    w.flush().map_err(|e| Error::io(&results, e))?;

    let ledger = dir.join("ledger.json");
    std::fs::write(&ledger, outcome.ledger.to_json()?).map_err(|e| Error::io(&ledger, e))?;

    let diag = dir.join("diagnostics.csv");
    let f = std::fs::File::create(&diag).map_err(|e| Error::io(&diag, e))?;
    outcome.diagnostics.write_csv(f)?;

    let resolved = dir.join("resolved.toml");
    std::fs::write(&resolved, outcome.resolved.to_toml()?).map_err(|e| Error::io(&resolved, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
seed = 3
variant = "lip"
output_dir = "out"

[dataset]
format = "synthetic_tabular"
n = 200
dim = 4
label_noise = 0.0
x1 = 1.0
seed = 1

[model]
layers = [
  { kind = "dense", out_dim = 8 },
  { kind = "group_norm", num_groups = 2, alpha = 0.5 },
  { kind = "activation", function = "relu" },
  { kind = "dense", out_dim = 2 },
]
loss = { kind = "softmax_ce", temperature = 1.0 }

[train]
epochs = 2
noise_multiplier = 1.0
expected_batch_size = 32
clip_threshold = 1.0
learning_rate = 0.05
step_rule = { kind = "adam", beta1 = 0.9, beta2 = 0.999, eps = 1e-8 }
averaging = "expected_batch"
l2_weight = 0.0
track_clip_error = false
"#;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn config_round_trips_and_builds() {
        let c = ExperimentConfig::from_toml(CONFIG).unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, back);
        let m = c.model.build(4).unwrap();
        assert_eq!(m.dims().unwrap(), vec![4, 8, 8, 8, 2]);
    }

    #[test]
    fn run_is_deterministic() {
        let c = ExperimentConfig::from_toml(CONFIG).unwrap();
        let d = c.dataset.load().unwrap();
        let a = run_on(&c, &d).unwrap();
        let b = run_on(&c, &d).unwrap();
        assert_eq!(a.row.accuracy, b.row.accuracy);
        assert_eq!(a.row.epsilon, b.row.epsilon);
        assert_eq!(a.params, b.params);
        assert!((a.row.delta - 1.0 / 160.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_field_type_is_config_error() {
        let bad = CONFIG.replace("epochs = 2", "epochs = \"two\"");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Toml(_))));
    }
}
