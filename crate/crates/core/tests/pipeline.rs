use std::io::Write;

use lipdp::accountant::LedgerRecord;
use lipdp::data::{
    load_csv, load_idx, load_preprocessed, save_preprocessed, ColumnKind, CsvSchema, DatasetHandle, Labels,
    MissingPolicy, IMAGES_MAGIC, LABELS_MAGIC,
};
use lipdp::experiment::{argmax, evaluate, run_experiment, run_on, ExperimentConfig};
use lipdp::layers::{LayerSpec, LossSpec, ModelSpec};
use lipdp::{Params, Tensor};

fn write(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

fn idx_fixture(dir: &tempfile::TempDir) -> (std::path::PathBuf, std::path::PathBuf) {
    let (n, r, c) = (10u32, 3u32, 3u32);
    let mut img = Vec::new();
    for v in [IMAGES_MAGIC, n, r, c] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for i in 0..n {
        for j in 0..r * c {
            img.push(((i * 53 + j * 29 + 7) % 256) as u8);
        }
    }
    let mut lbl = Vec::new();
    lbl.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&n.to_be_bytes());
    lbl.extend((0..n).map(|i| (i % 4) as u8));
    (write(dir, "images.idx", &img), write(dir, "labels.idx", &lbl))
}

#[test]
fn idx_fixture_digest_is_pinned() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = idx_fixture(&dir);
    let d = load_idx(&i, &l, 1.0).unwrap();
    assert_eq!(d.len(), 10);
    assert_eq!(d.dim(), 9);
    assert_eq!(d.num_classes(), Some(4));
    assert!(d.max_row_norm() <= 1.0 + 1e-12);
    // sha256 of the same preprocessing computed independently in Python
    assert_eq!(
        d.provenance().digest,
        "ffa67e3b54cecead0cea66db784a71030b4c7d13f30d2ba7c3b021ad1cb303ef"
    );
}

#[test]
fn idx_truncated_payload_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = idx_fixture(&dir);
    let mut bytes = std::fs::read(&i).unwrap();
    bytes.truncate(bytes.len() - 5);
    std::fs::write(&i, bytes).unwrap();
    let e = load_idx(&i, &l, 1.0).unwrap_err();
    assert!(matches!(e, lipdp::Error::Idx { offset: 16, .. }), "{e}");
    assert!(e.to_string().contains("90") && e.to_string().contains("85"), "{e}");
}

fn schema() -> CsvSchema {
    CsvSchema {
        label_column: "y".into(),
        columns: vec![
            ("age".into(), ColumnKind::Numeric),
            ("job".into(), ColumnKind::Categorical),
            ("hours".into(), ColumnKind::Numeric),
        ],
        x1: 1.0,
        missing: MissingPolicy::Reject,
    }
}

const TABLE: &str = "age,job,hours,y\n\
                     30,clerk,40,no\n\
                     45,manager,50,yes\n\
                     22,clerk,20,no\n\
                     51,tech,45,yes\n\
                     38,tech,38,no\n";

#[test]
fn csv_pipeline_bounds_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "t.csv", TABLE.as_bytes());
    let (d, pre) = load_csv(&path, &schema()).unwrap();
    assert_eq!(d.len(), 5);
    assert_eq!(d.dim(), 2 + 3);
    assert!((d.max_row_norm() - 1.0).abs() < 1e-12);
    assert_eq!(pre.classes(), &["no".to_string(), "yes".to_string()]);

    let unseen = pre.transform(&["30", "astronaut", "40"]).unwrap();
    assert_eq!(&unseen[1..4], &[0.0, 0.0, 0.0]);

    let out = dir.path().join("pre.csv");
    save_preprocessed(&out, &d).unwrap();
    let back = load_preprocessed(&out).unwrap();
    let again = dir.path().join("pre2.csv");
    save_preprocessed(&again, &back).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(back.provenance().digest, d.provenance().digest);
}

#[test]
fn csv_missing_value_names_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "t.csv", b"age,job,hours,y\n30,clerk,40,no\n45,?,50,yes\n22,clerk,20,no\n");
    let e = load_csv(&path, &schema()).unwrap_err();
    assert!(matches!(e, lipdp::Error::Data { row: 1, .. }), "{e}");

    let mut s = schema();
    s.missing = MissingPolicy::DropRow;
    let (d, _) = load_csv(&path, &s).unwrap();
    assert_eq!(d.len(), 2);
}

fn linear(dim: usize, classes: usize) -> ModelSpec {
    ModelSpec::new(dim, vec![LayerSpec::dense(dim, classes)], LossSpec::SoftmaxCe { temperature: 1.0 }).unwrap()
}

#[test]
fn evaluate_matches_loop_oracle() {
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let a = i as f64 * 0.37;
            vec![0.5 * a.sin(), 0.5 * a.cos()]
        })
        .collect();
    let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
    let d = DatasetHandle::new(
        rows.clone(),
        Labels::Classes {
            labels: labels.clone(),
            num_classes: 3,
        },
        1.0,
        "t",
    )
    .unwrap();
    let m = linear(2, 3);
    let p = Params(vec![Tensor::new(vec![2, 3], vec![1.0, -1.0, 0.3, 0.2, 0.5, -0.8]).unwrap()]);
    let mut correct = 0;
    for (x, y) in rows.iter().zip(&labels) {
        let logits: Vec<f64> = (0..3).map(|j| x[0] * p.0[0].data()[j] + x[1] * p.0[0].data()[3 + j]).collect();
        let mut best = 0;
        for j in 1..3 {
            if logits[j] > logits[best] {
                best = j;
            }
        }
        correct += usize::from(best == *y);
    }
    assert_eq!(evaluate(&m, &p, &d).unwrap(), correct as f64 / 40.0);
}

#[test]
fn constant_model_on_balanced_data_scores_half() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 40.0]).collect();
    let d = DatasetHandle::new(
        rows,
        Labels::Classes {
            labels: (0..20).map(|i| i % 2).collect(),
            num_classes: 2,
        },
        1.0,
        "t",
    )
    .unwrap();
    let p = Params(vec![Tensor::zeros(&[1, 2])]);
    assert_eq!(evaluate(&linear(1, 2), &p, &d).unwrap(), 0.5);
    assert_eq!(argmax(&[0.0, 0.0]), 0);
}

fn config(dir: &std::path::Path, epochs: usize, sigma: f64) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
seed = 5
variant = "lip"
output_dir = "{}"

[dataset]
format = "synthetic_tabular"
n = 300
dim = 4
label_noise = 0.0
x1 = 1.0
seed = 9

[model]
layers = [{{ kind = "dense", out_dim = 2 }}]
loss = {{ kind = "softmax_ce", temperature = 1.0 }}

[train]
epochs = {epochs}
noise_multiplier = {sigma}
expected_batch_size = 40
clip_threshold = 1.0
learning_rate = 0.05
step_rule = {{ kind = "adam", beta1 = 0.9, beta2 = 0.999, eps = 1e-8 }}
averaging = "expected_batch"
l2_weight = 0.0
track_clip_error = false
"#,
        dir.display()
    ))
    .unwrap()
}

#[test]
fn experiment_outputs_and_offline_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 2, 1.0);
    let out = run_experiment(&cfg).unwrap();
    for f in ["results.csv", "ledger.json", "diagnostics.csv", "resolved.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let rec = LedgerRecord::from_json(&std::fs::read_to_string(dir.path().join("ledger.json")).unwrap()).unwrap();
    let offline = rec.ledger().unwrap().to_epsilon_delta(rec.delta).unwrap().epsilon;
    assert_eq!(offline, out.row.epsilon);

    let resolved = ExperimentConfig::load(dir.path().join("resolved.toml")).unwrap();
    assert_eq!(resolved.delta, Some(out.row.delta));
    let rerun = run_on(&resolved, &resolved.dataset.load().unwrap()).unwrap();
    assert_eq!(rerun.row.accuracy, out.row.accuracy);
    assert_eq!(rerun.row.epsilon, out.row.epsilon);

    let mut rdr = csv::Reader::from_path(dir.path().join("results.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        vec!["variant", "seed", "epsilon", "delta", "accuracy", "runtime_s", "final_weight_norms"]
    );
}

#[test]
fn zero_epochs_reports_zero_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config(dir.path(), 0, 1.0)).unwrap();
    assert_eq!(out.row.epsilon, 0.0);
}

#[test]
fn huge_noise_gives_chance_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 3, 1e6);
    let data = cfg.dataset.load().unwrap();
    let out = run_on(&cfg, &data).unwrap();
    // balanced classes: majority rate is 0.5; a pure-noise model is a coin flip per region
    assert!((0.2..=0.8).contains(&out.row.accuracy), "{}", out.row.accuracy);
}

#[test]
fn config_file_errors_are_typed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::File::create(&p).unwrap().write_all(b"seed = ").unwrap();
    assert!(matches!(ExperimentConfig::load(&p), Err(lipdp::Error::Toml(_))));
    assert!(matches!(
        ExperimentConfig::load(dir.path().join("missing.toml")),
        Err(lipdp::Error::Io { .. })
    ));
}

#[test]
fn two_rows_standardize_to_plus_minus_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "t.csv", b"v,y\n3,a\n7,b\n");
    let s = CsvSchema {
        label_column: "y".into(),
        columns: vec![("v".into(), ColumnKind::Numeric)],
        x1: 2.0,
        missing: MissingPolicy::Reject,
    };
    let (d, pre) = load_csv(&path, &s).unwrap();
    // standardized to -1 and +1, then scaled so the largest row has norm x1
    assert_eq!(d.row(0).data(), &[-2.0]);
    assert_eq!(d.row(1).data(), &[2.0]);
    assert_eq!(pre.output_dim(), 1);
    assert_eq!(pre.classes().len(), 2);
}

#[test]
fn single_white_pixel_scales_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = Vec::new();
    for v in [IMAGES_MAGIC, 2, 1, 1] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend([255u8, 0]);
    let mut lbl = LABELS_MAGIC.to_be_bytes().to_vec();
    lbl.extend_from_slice(&2u32.to_be_bytes());
    lbl.extend([1u8, 0]);
    let d = load_idx(write(&dir, "i", &img), write(&dir, "l", &lbl), 1.0).unwrap();
    assert_eq!(d.row(0).data(), &[1.0]);
    assert_eq!(d.row(1).data(), &[0.0]);
}

#[test]
fn perfect_separator_scores_one() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![if i % 2 == 0 { 0.5 } else { -0.5 }]).collect();
    let d = DatasetHandle::new(
        rows,
        Labels::Classes {
            labels: (0..10).map(|i| i % 2).collect(),
            num_classes: 2,
        },
        1.0,
        "t",
    )
    .unwrap();
    let p = Params(vec![Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap()]);
    assert_eq!(evaluate(&linear(1, 2), &p, &d).unwrap(), 1.0);
}

#[test]
fn training_abort_echoes_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 20, 1.0);
    cfg.variant = lipdp::optim::Variant::Classic;
    cfg.train.step_rule = lipdp::optim::StepRule::Fixed;
    cfg.train.learning_rate = 1e300;
    cfg.train.clip_threshold = 1e300;
    let err = run_experiment(&cfg).unwrap_err();
    assert_eq!(err.code(), "non_finite_loss");
    let e = err.to_string();
    assert!(e.contains("non-finite loss"), "{e}");
    assert!(e.contains("variant = \"classic\"") && e.contains("expected_batch_size = 40"), "{e}");
}
