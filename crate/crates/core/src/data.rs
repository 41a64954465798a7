//! Datasets, CSV ingestion, standardization and train/validation/test splits.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    #[default]
    Continuous,
    /// One indicator column of a one-hot encoded categorical.
    Indicator,
}

/// Column-oriented table of features `x`, sensitive attribute `s` and target `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub feature_kinds: Vec<ColumnKind>,
    pub x: Matrix,
    pub s: Vec<usize>,
    pub y: Vec<f64>,
    pub task: Task,
    pub num_sensitive: usize,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        x: Matrix,
        s: Vec<usize>,
        y: Vec<f64>,
        task: Task,
        num_sensitive: usize,
    ) -> Result<Self> {
        let kinds = vec![ColumnKind::Continuous; feature_names.len()];
        let ds = Self {
            feature_names,
            feature_kinds: kinds,
            x,
            s,
            y,
            task,
            num_sensitive,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        if self.s.len() != n || self.y.len() != n {
            return Err(Error::Data(format!(
                "inconsistent lengths: x {n}, s {}, y {}",
                self.s.len(),
                self.y.len()
            )));
        }
        if self.feature_names.len() != self.x.cols() {
            return Err(Error::Data("feature name count differs from column count".into()));
        }
        if !self.feature_kinds.is_empty() && self.feature_kinds.len() != self.x.cols() {
            return Err(Error::Data("feature kind count differs from column count".into()));
        }
        if let Some(bad) = self.s.iter().find(|&&v| v >= self.num_sensitive) {
            return Err(Error::Data(format!(
                "sensitive value {bad} outside 0..{}",
                self.num_sensitive
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            x: self.x.select_rows(indices),
            s: indices.iter().map(|&i| self.s[i]).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            task: self.task,
            num_sensitive: self.num_sensitive,
        }
    }

    /// Row indices per sensitive value.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_sensitive];
        for (i, &s) in self.s.iter().enumerate() {
            groups[s].push(i);
        }
        groups
    }

    pub fn y_column(&self) -> Matrix {
        Matrix::column(&self.y)
    }

    /// One-hot encoding of `s` (n x |S|).
    pub fn s_onehot(&self) -> Matrix {
        onehot(&self.s, self.num_sensitive)
    }

    /// Features with the one-hot sensitive attribute appended.
    pub fn x_with_s(&self) -> Matrix {
        self.x.hconcat(&self.s_onehot()).expect("row counts match")
    }
}

pub fn onehot(values: &[usize], k: usize) -> Matrix {
    let mut m = Matrix::zeros(values.len(), k);
    for (i, &v) in values.iter().enumerate() {
        m.set(i, v, 1.0);
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureType {
    Continuous,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: FeatureType,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitiveColumn {
    pub name: String,
    /// Allowed raw values, in the order that defines the encoding `0..k`.
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetColumn {
    pub name: String,
    pub task: Task,
    /// For classification: raw values mapped to 1 (everything else maps to 0).
    #[serde(default)]
    pub positive: Vec<String>,
}

/// Column layout of a CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureColumn>,
    pub sensitive: SensitiveColumn,
    pub target: TargetColumn,
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: Schema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.features {
            if f.name == self.sensitive.name || f.name == self.target.name {
                return Err(Error::Config(format!(
                    "column `{}` is both a feature and the sensitive/target column",
                    f.name
                )));
            }
        }
        if self.sensitive.name == self.target.name {
            return Err(Error::Config("sensitive and target columns coincide".into()));
        }
        if self.sensitive.values.len() < 2 {
            return Err(Error::Config("at least two sensitive values required".into()));
        }
        Ok(())
    }
}

/// Row accounting from [`load_csv`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_sensitive: usize,
    pub dropped_missing: usize,
    pub skipped_unparseable: usize,
}

fn is_missing(v: &str) -> bool {
    v.is_empty() || v == "?" || v.eq_ignore_ascii_case("na") || v.eq_ignore_ascii_case("nan")
}

/// Loads a headered CSV according to `schema`.
///
/// Rows whose sensitive value is outside the schema's allowed set and rows with
/// missing cells are dropped; rows with unparseable numbers are skipped and
/// counted. Categorical features are one-hot encoded over their sorted levels.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<(Dataset, LoadReport)> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column `{name}`")))
    };
    let feature_cols: Vec<usize> = schema
        .features
        .iter()
        .map(|f| col(&f.name))
        .collect::<Result<_>>()?;
    let s_col = col(&schema.sensitive.name)?;
    let y_col = col(&schema.target.name)?;

    let mut report = LoadReport::default();
    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    let mut s = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record?;
        report.rows_read += 1;
        let sval = record.get(s_col).unwrap_or("");
        let Some(sidx) = schema.sensitive.values.iter().position(|v| v == sval) else {
            report.dropped_sensitive += 1;
            continue;
        };
        let cells: Vec<&str> = feature_cols.iter().map(|&c| record.get(c).unwrap_or("")).collect();
        let yraw = record.get(y_col).unwrap_or("");
        if is_missing(yraw) || cells.iter().any(|c| is_missing(c)) {
            report.dropped_missing += 1;
            continue;
        }
        let yval = match schema.target.task {
            Task::Regression => match yraw.parse::<f64>() {
                Ok(v) => v,
                Err(_) => {
                    report.skipped_unparseable += 1;
                    continue;
                }
            },
            Task::Classification => {
                if schema.target.positive.iter().any(|p| p == yraw) {
                    1.0
                } else if let Ok(v) = yraw.parse::<f64>() {
                    if schema.target.positive.is_empty() && (v == 0.0 || v == 1.0) {
                        v
                    } else {
                        0.0
                    }
                } else {
                    0.0
                }
            }
        };
        let numeric_ok = schema
            .features
            .iter()
            .zip(&cells)
            .all(|(f, c)| f.kind == FeatureType::Categorical || c.parse::<f64>().is_ok());
        if !numeric_ok {
            report.skipped_unparseable += 1;
            continue;
        }
        raw_rows.push(cells.iter().map(|c| c.to_string()).collect());
        s.push(sidx);
        y.push(yval);
    }
    if raw_rows.is_empty() {
        return Err(Error::Empty("load_csv"));
    }
    if report.skipped_unparseable > 0 {
        log::warn!("skipped {} unparseable rows", report.skipped_unparseable);
    }

    let mut names = Vec::new();
    let mut kinds = Vec::new();
    let mut encoders: Vec<Option<Vec<String>>> = Vec::new();
    for (j, f) in schema.features.iter().enumerate() {
        match f.kind {
            FeatureType::Continuous => {
                names.push(f.name.clone());
                kinds.push(ColumnKind::Continuous);
                encoders.push(None);
            }
            FeatureType::Categorical => {
                let levels: BTreeSet<&str> = raw_rows.iter().map(|r| r[j].as_str()).collect();
                let levels: Vec<String> = levels.into_iter().map(str::to_string).collect();
                for l in &levels {
                    names.push(format!("{}={}", f.name, l));
                    kinds.push(ColumnKind::Indicator);
                }
                encoders.push(Some(levels));
            }
        }
    }
    let mut x = Matrix::zeros(raw_rows.len(), names.len());
    for (i, row) in raw_rows.iter().enumerate() {
        let mut c = 0;
        for (j, enc) in encoders.iter().enumerate() {
            match enc {
                None => {
                    x.set(i, c, row[j].parse::<f64>().expect("checked above"));
                    c += 1;
                }
                Some(levels) => {
                    let k = levels.iter().position(|l| *l == row[j]).expect("level present");
                    x.set(i, c + k, 1.0);
                    c += levels.len();
                }
            }
        }
    }
    let dataset = Dataset {
        feature_names: names,
        feature_kinds: kinds,
        x,
        s,
        y,
        task: schema.target.task,
        num_sensitive: schema.sensitive.values.len(),
    };
    dataset.validate()?;
    Ok((dataset, report))
}

/// Writes `dataset` as CSV with columns `features..., s, y`.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = dataset.feature_names.clone();
    header.push("s".into());
    header.push("y".into());
    w.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut rec: Vec<String> = dataset.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(dataset.s[i].to_string());
        rec.push(dataset.y[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Train-fitted z-score transform for continuous feature columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// False for indicator and zero-variance columns, which pass through.
    pub scaled: Vec<bool>,
}

impl Scaler {
    pub fn fit(x: &Matrix, rows: &[usize], kinds: &[ColumnKind]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("standardize"));
        }
        let d = x.cols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        let mut scaled = vec![false; d];
        for c in 0..d {
            if kinds.get(c) == Some(&ColumnKind::Indicator) {
                continue;
            }
            let m = rows.iter().map(|&r| x.get(r, c)).sum::<f64>() / n;
            let var = rows.iter().map(|&r| (x.get(r, c) - m).powi(2)).sum::<f64>() / n;
            if var <= 1e-24 {
                log::warn!("column {c} has zero variance; left unscaled");
                continue;
            }
            mean[c] = m;
            std[c] = var.sqrt();
            scaled[c] = true;
        }
        Ok(Self { mean, std, scaled })
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                if self.scaled[c] {
                    *v = (*v - self.mean[c]) / self.std[c];
                }
            }
        }
        out
    }

    pub fn inverse(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                if self.scaled[c] {
                    *v = *v * self.std[c] + self.mean[c];
                }
            }
        }
        out
    }
}

/// Z-scores the continuous features of `dataset` with statistics from `fit_on` rows only.
pub fn standardize(dataset: &Dataset, fit_on: &[usize]) -> Result<(Dataset, Scaler)> {
    let scaler = Scaler::fit(&dataset.x, fit_on, &dataset.feature_kinds)?;
    let mut out = dataset.clone();
    out.x = scaler.transform(&dataset.x);
    Ok((out, scaler))
}

/// Disjoint train/validation/test row indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle, then cut at `floor(0.6 n)` and `floor(0.8 n)`.
pub fn split(n: usize, seed: u64) -> Result<SplitIndices> {
    if n < 5 {
        return Err(Error::Data(format!("cannot split {n} rows; need at least 5")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let a = n * 6 / 10;
    let b = n * 8 / 10;
    Ok(SplitIndices {
        train: idx[..a].to_vec(),
        validation: idx[a..b].to_vec(),
        test: idx[b..].to_vec(),
    })
}
