//! Dataset loading, splitting and standardization.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::Dataset;
use crate::rng::{self, Purpose};

/// Which CSV column holds the binary label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    /// Unlabeled data (synthetic mean-estimation sets).
    None,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn coerce_label(value: f64) -> Option<u8> {
    if value == 1.0 {
        Some(1)
    } else if value == 0.0 || value == -1.0 {
        Some(0)
    } else {
        None
    }
}

/// Reads a headed CSV. Labels in `{0, 1}` or `{-1, +1}` are stored as `{0, 1}`.
pub fn load_csv(path: &Path, label: &LabelColumn) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let width = headers.len();
    let label_idx = match label {
        LabelColumn::Name(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_err(path, 1, format!("no column named '{name}'")))?,
        ),
        LabelColumn::Index(i) if *i >= width => {
            return Err(parse_err(
                path,
                1,
                format!("label column {i} out of range for {width} columns"),
            ))
        }
        LabelColumn::Index(i) => Some(*i),
        LabelColumn::None => None,
    };
    let d = width - usize::from(label_idx.is_some());
    if d == 0 {
        return Err(parse_err(path, 1, "no feature columns"));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        // header is line 1
        let line = row + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("column {}: '{field}' is not a number", col + 1),
                )
            })?;
            if !value.is_finite() {
                return Err(parse_err(
                    path,
                    line,
                    format!("column {}: non-finite value", col + 1),
                ));
            }
            if Some(col) == label_idx {
                labels.push(coerce_label(value).ok_or_else(|| {
                    parse_err(path, line, format!("label {value} is not binary"))
                })?);
            } else {
                features.push(value);
            }
        }
    }
    let n = features.len() / d;
    if n == 0 {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let name = path
        .file_stem()
        .map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(
        name,
        Matrix::from_vec(n, d, features),
        label_idx.map(|_| labels),
    )
}

/// Reads LIBSVM sparse text: `label idx:value ...` with 1-based indices.
/// Absent indices are zero; `d` is the largest index seen.
pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad label '{label_tok}'")))?;
        labels.push(
            coerce_label(label)
                .ok_or_else(|| parse_err(path, line_no, format!("label {label} is not binary")))?,
        );
        let mut row = Vec::new();
        for (k, tok) in tokens.enumerate() {
            let column = k + 2;
            let (idx, val) = tok.split_once(':').ok_or_else(|| {
                parse_err(
                    path,
                    line_no,
                    format!("token {column} '{tok}' is not index:value"),
                )
            })?;
            let idx: usize = idx.parse().ok().filter(|&v| v >= 1).ok_or_else(|| {
                parse_err(path, line_no, format!("token {column}: bad index '{idx}'"))
            })?;
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    parse_err(path, line_no, format!("token {column}: bad value '{val}'"))
                })?;
            d = d.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 0, "no data rows"));
    }
    let d = d.max(1);
    let mut features = Matrix::zeros(rows.len(), d);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[(i, j)] = v;
        }
    }
    let name = path
        .file_stem()
        .map_or_else(|| "libsvm".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, features, Some(labels))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Seeded shuffle; the first `⌈fraction·N⌉` rows go to train.
pub fn split(dataset: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "split needs at least 2 rows (got {n})"
        )));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1) (got {})",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(spec.seed, Purpose::Split, 0));
    let n_train = ((spec.train_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let train = dataset.subset(&order[..n_train], format!("{}-train", dataset.name));
    let test = dataset.subset(&order[n_train..], format!("{}-test", dataset.name));
    Ok((train, test))
}

/// Seeded subsample of `rows` rows without replacement (original order kept).
pub fn subsample(dataset: &Dataset, rows: usize, seed: u64) -> Result<Dataset> {
    let n = dataset.len();
    if rows == 0 {
        return Err(Error::InvalidArgument("subsample size must be >= 1".into()));
    }
    if rows >= n {
        return Ok(dataset.clone());
    }
    let mut picked =
        rand::seq::index::sample(&mut rng::stream(seed, Purpose::Subsample, 0), n, rows).into_vec();
    picked.sort_unstable();
    Ok(dataset.subset(&picked, format!("{}-sub{rows}", dataset.name)))
}

/// Per-feature z-score fitted on the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero marks a constant column.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot standardize an empty training set".into(),
            ));
        }
        let x = &train.features;
        let mean = x.column_mean();
        let n = x.rows() as f64;
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((v, a), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (a - m) * (a - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: data.dim(),
            });
        }
        let mut out = data.clone();
        let d = self.mean.len();
        for row in out.features.as_mut_slice().chunks_exact_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if *s > 0.0 { (*v - m) / s } else { 0.0 };
            }
        }
        Ok(out)
    }
}

pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Standardizer)> {
    let t = Standardizer::fit(train)?;
    Ok((t.apply(train)?, t.apply(test)?, t))
}

/// Appends a constant-one column (intercept term).
pub fn with_intercept(data: &Dataset) -> Result<Dataset> {
    let d = data.dim();
    let mut out = Vec::with_capacity(data.len() * (d + 1));
    for row in data.features.iter_rows() {
        out.extend_from_slice(row);
        out.push(1.0);
    }
    Dataset::new(
        data.name.clone(),
        Matrix::from_vec(data.len(), d + 1, out),
        data.labels.clone(),
    )
}
