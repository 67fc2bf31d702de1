use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{rescale_to_bound, DatasetHandle, Labels};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    DropRow,
}

/// Which columns to read and how. Columns not listed are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: String,
    pub columns: Vec<(String, ColumnKind)>,
    #[serde(default = "default_x1")]
    pub x1: f64,
    #[serde(default)]
    pub missing: MissingPolicy,
}

fn default_x1() -> f64 {
    1.0
}

fn is_missing(v: &str) -> bool {
    let t = v.trim();
    t.is_empty() || t == "?" || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ColumnTransform {
    Standardize { mean: f64, std: f64 },
    OneHot { categories: Vec<String> },
}

/// Fitted preprocessing: standardization and one-hot encodings per column,
/// the label vocabulary and the global row scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    columns: Vec<(String, ColumnTransform)>,
    classes: Vec<String>,
    scale: f64,
    x1: f64,
}

impl Preprocessor {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn output_dim(&self) -> usize {
        self.columns
            .iter()
            .map(|(_, t)| match t {
                ColumnTransform::Standardize { .. } => 1,
                ColumnTransform::OneHot { categories } => categories.len(),
            })
            .sum()
    }

    fn encode_unscaled(&self, values: &[&str]) -> std::result::Result<Vec<f64>, String> {
        let mut out = Vec::with_capacity(self.output_dim());
        for ((name, t), raw) in self.columns.iter().zip(values) {
            let raw = raw.trim();
            match t {
                ColumnTransform::Standardize { mean, std } => {
                    let v: f64 = raw
                        .parse()
                        .map_err(|_| format!("column {name}: '{raw}' is not numeric"))?;
                    out.push(if *std > 0.0 { (v - mean) / std } else { 0.0 });
                }
                ColumnTransform::OneHot { categories } => {
                    // unseen categories encode as all zeros
                    out.extend(categories.iter().map(|c| if c == raw { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(out)
    }

    /// Encodes one raw record (values in schema column order) for inference.
    /// The result is scaled like the fitted data and capped to norm `x1`.
    pub fn transform(&self, values: &[&str]) -> Result<Vec<f64>> {
        let mut row = self
            .encode_unscaled(values)
            .map_err(Error::Config)?;
        row.iter_mut().for_each(|v| *v *= self.scale);
        super::cap_row_norms(std::slice::from_mut(&mut row), self.x1);
        Ok(row)
    }
}

/// Reads a CSV with a header row, one-hot encodes categorical columns,
/// standardizes numeric ones and rescales rows so the largest norm is `x1`.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(DatasetHandle, Preprocessor)> {
    let path = path.as_ref();
    let data_err = |row: usize, reason: String| Error::Data {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: no column named '{name}'", path.display())))
    };
    let label_idx = find(&schema.label_column)?;
    let col_idx = schema
        .columns
        .iter()
        .map(|(n, _)| find(n))
        .collect::<Result<Vec<_>>>()?;

    let mut records: Vec<(Vec<String>, String)> = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let label = rec.get(label_idx).unwrap_or("").to_string();
        let values: Vec<String> = col_idx
            .iter()
            .map(|&i| rec.get(i).unwrap_or("").to_string())
            .collect();
        if is_missing(&label) || values.iter().any(|v| is_missing(v)) {
            match schema.missing {
                MissingPolicy::Reject => return Err(data_err(row, "missing value".into())),
                MissingPolicy::DropRow => continue,
            }
        }
        records.push((values, label));
    }
    if records.len() < 2 {
        return Err(data_err(records.len(), "fewer than two usable rows".into()));
    }

    let mut transforms = Vec::with_capacity(schema.columns.len());
    for (c, (name, kind)) in schema.columns.iter().enumerate() {
        let t = match kind {
            ColumnKind::Numeric => {
                let mut vals = Vec::with_capacity(records.len());
                for (row, (values, _)) in records.iter().enumerate() {
                    let v: f64 = values[c]
                        .parse()
                        .map_err(|_| data_err(row, format!("column {name}: '{}' is not numeric", values[c])))?;
                    vals.push(v);
                }
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                ColumnTransform::Standardize { mean, std: var.sqrt() }
            }
            ColumnKind::Categorical => {
                let mut cats: Vec<String> = records.iter().map(|(v, _)| v[c].clone()).collect();
                cats.sort();
                cats.dedup();
                ColumnTransform::OneHot { categories: cats }
            }
        };
        transforms.push((name.clone(), t));
    }
    let mut classes: Vec<String> = records.iter().map(|(_, l)| l.clone()).collect();
    classes.sort();
    classes.dedup();
    let class_of: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let mut pre = Preprocessor {
        columns: transforms,
        classes: classes.clone(),
        scale: 1.0,
        x1: schema.x1,
    };
    let mut rows = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (row, (values, label)) in records.iter().enumerate() {
        let refs: Vec<&str> = values.iter().map(String::as_str).collect();
        rows.push(pre.encode_unscaled(&refs).map_err(|r| data_err(row, r))?);
        labels.push(class_of[label.as_str()]);
    }
    let max = rows
        .iter()
        .map(|r| r.iter().fold(0.0, |acc, v| acc + v * v).sqrt())
        .fold(0.0, f64::max);
    pre.scale = if max > 0.0 { schema.x1 / max } else { 1.0 };
    rescale_to_bound(&mut rows, schema.x1);

    let handle = DatasetHandle::new(
        rows,
        Labels::Classes {
            labels,
            num_classes: classes.len(),
        },
        schema.x1,
        path.display().to_string(),
    )?;
    Ok((handle, pre))
}

/// Writes preprocessed features and labels. The first line records `x1`.
pub fn save_preprocessed(path: impl AsRef<Path>, data: &DatasetHandle) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("# x1={}\n", data.x1()));
    let label_col = match data.labels() {
        Labels::Classes { num_classes, .. } => format!("label:{num_classes}"),
        Labels::Values(_) => "target".to_string(),
    };
    let header: Vec<String> = (0..data.dim()).map(|j| format!("f{j}")).chain([label_col]).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..data.len() {
        let mut fields: Vec<String> = data.row(i).data().iter().map(|v| format!("{v:?}")).collect();
        fields.push(match data.labels() {
            Labels::Classes { labels, .. } => labels[i].to_string(),
            Labels::Values(v) => format!("{:?}", v[i]),
        });
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_preprocessed(path: impl AsRef<Path>) -> Result<DatasetHandle> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let bad = |row: usize, reason: &str| Error::Data {
        path: path.to_path_buf(),
        row,
        reason: reason.to_string(),
    };
    let x1: f64 = lines
        .next()
        .and_then(|l| l.strip_prefix("# x1="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(0, "missing '# x1=' preamble"))?;
    let header = lines.next().ok_or_else(|| bad(0, "missing header"))?;
    let last = header.rsplit(',').next().unwrap_or("");
    let num_classes: Option<usize> = match last.strip_prefix("label:") {
        Some(n) => Some(n.parse().map_err(|_| bad(0, "bad label header"))?),
        None if last == "target" => None,
        None => return Err(bad(0, "last column must be label:<classes> or target")),
    };
    let mut rows = Vec::new();
    let mut class_labels = Vec::new();
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        let mut fields: Vec<&str> = line.split(',').collect();
        let label = fields.pop().ok_or_else(|| bad(row, "empty line"))?;
        let feats = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(row, "unparseable feature"))?;
        rows.push(feats);
        match num_classes {
            Some(_) => class_labels.push(label.parse::<usize>().map_err(|_| bad(row, "bad label"))?),
            None => values.push(label.parse::<f64>().map_err(|_| bad(row, "bad target"))?),
        }
    }
    let labels = match num_classes {
        Some(num_classes) => Labels::Classes {
            labels: class_labels,
            num_classes,
        },
        None => Labels::Values(values),
    };
    DatasetHandle::new(rows, labels, x1, path.display().to_string())
}
