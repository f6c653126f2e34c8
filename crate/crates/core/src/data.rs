//! Tabular datasets: CSV ingestion, mean imputation, label encoding and
//! seeded train/test splitting.
//!
//! A [`Dataset`] is immutable once built. Labels are stored as indices into
//! `label_names`, assigned in order of first appearance in the source file.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    feature_names: Vec<String>,
    label_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, checking every invariant of the in-memory model.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::Data(format!("need n >= 1 and d >= 1, got {n}x{d}")));
        }
        if labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if feature_names.len() != d {
            return Err(Error::Dimension(format!(
                "{} feature names for {d} columns",
                feature_names.len()
            )));
        }
        let num_classes = label_names.len();
        if num_classes < 2 {
            return Err(Error::Data(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Data(format!(
                "label index {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("features contain NaN or infinite values".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            feature_names,
            label_names,
        })
    }

    /// Convenience constructor with generated names `x0..`, `c0..`.
    pub fn from_arrays(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let d = features.ncols();
        Self::new(
            features,
            labels,
            (0..d).map(|j| format!("x{j}")).collect(),
            (0..num_classes).map(|k| format!("c{k}")).collect(),
        )
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order. Class vocabulary is kept intact.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Dimension(format!(
                "row index {bad} out of range for {} rows",
                self.len()
            )));
        }
        Ok(Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            feature_names: self.feature_names.clone(),
            label_names: self.label_names.clone(),
        })
    }

    /// Re-encodes labels against another vocabulary (e.g. the one a model was
    /// trained with). Every label of `self` must exist in `vocabulary`.
    pub fn relabel(&self, vocabulary: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = vocabulary
            .iter()
            .enumerate()
            .map(|(k, name)| (name.as_str(), k))
            .collect();
        let mapping = self
            .label_names
            .iter()
            .map(|name| {
                index
                    .get(name.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("label {name:?} is not in the model's class vocabulary")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            self.features.clone(),
            self.labels.iter().map(|&y| mapping[y]).collect(),
            self.feature_names.clone(),
            vocabulary.to_vec(),
        )
    }
}

/// Parameters of a seeded train/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Loads a CSV with a header row. `label_column` names the class column; all
/// other columns must be numeric. Empty cells (and `NaN`) are replaced with
/// the column mean.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Data(format!("label column {label_column:?} not found in header")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    let d = feature_names.len();
    if d == 0 {
        return Err(Error::Data("no feature columns".into()));
    }

    let mut cells: Vec<Option<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();

    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = row_no + 2;
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                let name = cell.trim();
                if name.is_empty() {
                    return Err(Error::Parse(format!("line {line}: empty label")));
                }
                let next = label_names.len();
                let y = *label_index.entry(name.to_string()).or_insert_with(|| {
                    label_names.push(name.to_string());
                    next
                });
                labels.push(y);
            } else {
                cells.push(parse_cell(cell, line, &headers[j])?);
            }
        }
    }

    let n = labels.len();
    if n == 0 {
        return Err(Error::Data("no data rows".into()));
    }
    if label_names.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 distinct labels, found {}",
            label_names.len()
        )));
    }

    let features = impute_columns(&cells, n, &feature_names)?;
    Dataset::new(features, labels, feature_names, label_names)
}

/// Reads the columns named `feature_names` (in that order) from a CSV with a
/// header row, as a query matrix. Other columns are ignored. Missing cells
/// are replaced with the column mean of this file.
pub fn read_feature_csv<R: Read>(reader: R, feature_names: &[String]) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let columns: Vec<usize> = feature_names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("feature column {name:?} not found in header")))
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    let mut n = 0;
    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row_no + 2;
        for &j in &columns {
            let cell = record
                .get(j)
                .ok_or_else(|| Error::Parse(format!("line {line}: missing column {:?}", &headers[j])))?;
            cells.push(parse_cell(cell, line, &headers[j])?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data("no data rows".into()));
    }
    impute_columns(&cells, n, feature_names)
}

pub fn load_feature_csv(path: impl AsRef<Path>, feature_names: &[String]) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_csv(file, feature_names)
}

/// Row-major `n x d` cells to a matrix, missing entries set to the column mean.
fn impute_columns(cells: &[Option<f64>], n: usize, names: &[String]) -> Result<Array2<f64>> {
    let d = names.len();
    let mut features = Array2::<f64>::zeros((n, d));
    for j in 0..d {
        let column = (0..n).map(|i| cells[i * d + j]);
        let (sum, count) = column.clone().flatten().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == 0 {
            return Err(Error::Data(format!(
                "feature column {:?} is entirely missing",
                names[j]
            )));
        }
        let mean = sum / count as f64;
        for (i, v) in column.enumerate() {
            features[[i, j]] = v.unwrap_or(mean);
        }
    }
    Ok(features)
}

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<Option<f64>> {
    let trimmed = cell.trim();
    if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Err(Error::Parse(format!(
            "line {line}, column {column:?}: non-finite value {trimmed:?}"
        ))),
        Err(_) => Err(Error::Parse(format!(
            "line {line}, column {column:?}: non-numeric value {trimmed:?}"
        ))),
    }
}

/// Writes features (shortest round-trip float formatting) followed by the
/// label column holding the original label names.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W, label_column: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    wtr.write_record(&header)?;
    for (row, &y) in dataset.features.rows().into_iter().zip(&dataset.labels) {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        record.push(dataset.label_names[y].clone());
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file), label_column)
}

/// Seeded shuffle, then the first `floor(n * train_fraction)` rows go to the
/// training side.
pub fn split(dataset: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let n_train = (n as f64 * spec.train_fraction).floor() as usize;
    if n_train < 1 || n_train > n - 1 {
        return Err(Error::Config(format!(
            "split of {n} rows at fraction {} leaves an empty side",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(spec.seed, 0));
    let (train_idx, test_idx) = order.split_at(n_train);
    Ok((dataset.subset(train_idx)?, dataset.subset(test_idx)?))
}
