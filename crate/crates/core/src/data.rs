//! Datasets, deterministic three-way splits and CSV I/O.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Continuous,
    CategoricalOneHot,
}

/// An n×d matrix of observations, optionally paired with covariates
/// (regression) or a categorical one-hot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    covariates: Option<DMatrix<f64>>,
    kind: DataKind,
    level_sizes: Option<Vec<usize>>,
    label: String,
}

impl Dataset {
    pub fn continuous(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Data("dataset needs at least one row and one column".into()));
        }
        Ok(Dataset {
            values,
            covariates: None,
            kind: DataKind::Continuous,
            level_sizes: None,
            label: "data".into(),
        })
    }

    /// Responses `values` (n×d) with covariates (n×p).
    pub fn with_covariates(values: DMatrix<f64>, covariates: DMatrix<f64>) -> Result<Self> {
        if covariates.nrows() != values.nrows() {
            return Err(Error::Dimension(format!(
                "{} response rows but {} covariate rows",
                values.nrows(),
                covariates.nrows()
            )));
        }
        let mut d = Self::continuous(values)?;
        d.covariates = Some(covariates);
        Ok(d)
    }

    /// Categorical data from 0-based level codes, one row per observation
    /// and one code per variable.
    pub fn categorical_from_codes(codes: &[Vec<usize>], level_sizes: &[usize]) -> Result<Self> {
        if codes.is_empty() || level_sizes.is_empty() {
            return Err(Error::Data("dataset needs at least one row and one variable".into()));
        }
        if level_sizes.contains(&0) {
            return Err(Error::Data("every variable needs at least one level".into()));
        }
        let width: usize = level_sizes.iter().sum();
        let mut values = DMatrix::zeros(codes.len(), width);
        for (i, row) in codes.iter().enumerate() {
            if row.len() != level_sizes.len() {
                return Err(Error::Data(format!(
                    "row {i} has {} codes, expected {}",
                    row.len(),
                    level_sizes.len()
                )));
            }
            let mut offset = 0;
            for (j, (&c, &l)) in row.iter().zip(level_sizes).enumerate() {
                if c >= l {
                    return Err(Error::Data(format!("row {i} variable {j}: code {c} >= {l} levels")));
                }
                values[(i, offset + c)] = 1.0;
                offset += l;
            }
        }
        Ok(Dataset {
            values,
            covariates: None,
            kind: DataKind::CategoricalOneHot,
            level_sizes: Some(level_sizes.to_vec()),
            label: "data".into(),
        })
    }

    /// Validate and wrap an already expanded one-hot matrix.
    pub fn categorical_onehot(values: DMatrix<f64>, level_sizes: &[usize]) -> Result<Self> {
        let d = Dataset {
            values,
            covariates: None,
            kind: DataKind::CategoricalOneHot,
            level_sizes: Some(level_sizes.to_vec()),
            label: "data".into(),
        };
        d.codes()?;
        Ok(d)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn covariates(&self) -> Option<&DMatrix<f64>> {
        self.covariates.as_ref()
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn level_sizes(&self) -> Option<&[usize]> {
        self.level_sizes.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// First value column, the response of a regression dataset.
    pub fn response(&self) -> Vec<f64> {
        self.values.column(0).iter().copied().collect()
    }

    /// 0-based level codes of a categorical dataset, validating that every
    /// variable block is one-hot.
    pub fn codes(&self) -> Result<Vec<Vec<usize>>> {
        let levels = self
            .level_sizes
            .as_ref()
            .ok_or_else(|| Error::Data("dataset is not categorical".into()))?;
        if levels.iter().sum::<usize>() != self.values.ncols() {
            return Err(Error::Data(format!(
                "level sizes sum to {} but dataset has {} columns",
                levels.iter().sum::<usize>(),
                self.values.ncols()
            )));
        }
        (0..self.values.nrows())
            .map(|i| {
                let mut offset = 0;
                levels
                    .iter()
                    .enumerate()
                    .map(|(j, &l)| {
                        let mut code = None;
                        for c in 0..l {
                            let v = self.values[(i, offset + c)];
                            if v == 1.0 {
                                if code.is_some() {
                                    return Err(Error::Data(format!("row {i} variable {j}: several ones")));
                                }
                                code = Some(c);
                            } else if v != 0.0 {
                                return Err(Error::Data(format!("row {i} variable {j}: entry {v} is not 0/1")));
                            }
                        }
                        offset += l;
                        code.ok_or_else(|| Error::Data(format!("row {i} variable {j}: no category set")))
                    })
                    .collect()
            })
            .collect()
    }

    /// New dataset holding `rows` of this one, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            values: self.values.select_rows(rows),
            covariates: self.covariates.as_ref().map(|c| c.select_rows(rows)),
            kind: self.kind,
            level_sizes: self.level_sizes.clone(),
            label: self.label.clone(),
        }
    }

    /// Same structure (kind, levels, covariates) with new values.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Dataset> {
        if values.ncols() != self.values.ncols() {
            return Err(Error::Dimension(format!(
                "expected {} columns, got {}",
                self.values.ncols(),
                values.ncols()
            )));
        }
        if let Some(c) = &self.covariates {
            if c.nrows() != values.nrows() {
                return Err(Error::Dimension("replacement values must keep the row count".into()));
            }
        }
        Ok(Dataset {
            values,
            covariates: self.covariates.clone(),
            kind: self.kind,
            level_sizes: self.level_sizes.clone(),
            label: self.label.clone(),
        })
    }

    /// Row-wise concatenation.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.n_cols() != other.n_cols() || self.kind != other.kind || self.level_sizes != other.level_sizes {
            return Err(Error::Dimension("datasets have different column structure".into()));
        }
        let n = self.n_rows() + other.n_rows();
        let mut values = DMatrix::zeros(n, self.n_cols());
        values.rows_mut(0, self.n_rows()).copy_from(&self.values);
        values.rows_mut(self.n_rows(), other.n_rows()).copy_from(&other.values);
        let covariates = match (&self.covariates, &other.covariates) {
            (Some(a), Some(b)) => {
                let mut c = DMatrix::zeros(n, a.ncols());
                c.rows_mut(0, a.nrows()).copy_from(a);
                c.rows_mut(a.nrows(), b.nrows()).copy_from(b);
                Some(c)
            }
            (None, None) => None,
            _ => return Err(Error::Dimension("only one dataset has covariates".into())),
        };
        Ok(Dataset {
            values,
            covariates,
            kind: self.kind,
            level_sizes: self.level_sizes.clone(),
            label: self.label.clone(),
        })
    }
}

/// The three disjoint parts driving every check: `x_in` feeds the posterior
/// predictive, `x_out` is located in the reference distribution, and
/// `x_val` defines the validation diagnostic.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub x_in: Dataset,
    pub x_out: Dataset,
    pub x_val: Dataset,
    /// Source row indices of (in, out, val).
    pub indices: [Vec<usize>; 3],
}

impl DataSplit {
    /// Assemble a split from three independently generated parts.
    pub fn from_parts(x_in: Dataset, x_out: Dataset, x_val: Dataset) -> Result<Self> {
        if x_in.n_cols() != x_out.n_cols() || x_in.n_cols() != x_val.n_cols() {
            return Err(Error::Dimension("split parts have different column counts".into()));
        }
        let (a, b, c) = (x_in.n_rows(), x_out.n_rows(), x_val.n_rows());
        Ok(DataSplit {
            x_in: x_in.with_label("x_in"),
            x_out: x_out.with_label("x_out"),
            x_val: x_val.with_label("x_val"),
            indices: [(0..a).collect(), (a..a + b).collect(), (a + b..a + b + c).collect()],
        })
    }
}

/// Default split proportions.
pub const DEFAULT_FRACTIONS: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

/// Randomly partition rows into (in, out, val). `x_out` and `x_val` get
/// `floor(n * fraction)` rows and `x_in` takes the remainder.
pub fn split_data(data: &Dataset, fractions: [f64; 3], seed: Seed) -> Result<DataSplit> {
    if fractions.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(Error::param("fractions", "must all be positive"));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::param("fractions", "must sum to 1"));
    }
    let n = data.n_rows();
    let n_out = (n as f64 * fractions[1]).floor() as usize;
    let n_val = (n as f64 * fractions[2]).floor() as usize;
    if n < 3 || n_out == 0 || n_val == 0 || n_out + n_val >= n {
        return Err(Error::Data(format!("cannot form three nonempty parts from {n} rows")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut stream = seed.stream("split");
    for i in (1..n).rev() {
        let j = (stream.uniform() * (i + 1) as f64) as usize;
        perm.swap(i, j.min(i));
    }
    let n_in = n - n_out - n_val;
    let idx_in = perm[..n_in].to_vec();
    let idx_out = perm[n_in..n_in + n_out].to_vec();
    let idx_val = perm[n_in + n_out..].to_vec();
    Ok(DataSplit {
        x_in: data.select_rows(&idx_in).with_label("x_in"),
        x_out: data.select_rows(&idx_out).with_label("x_out"),
        x_val: data.select_rows(&idx_val).with_label("x_val"),
        indices: [idx_in, idx_out, idx_val],
    })
}

/// Two-sided pass rule: the observed diagnostic must not sit in either
/// `alpha/2` tail of the reference distribution.
pub fn pass_fail(p: f64, alpha: f64) -> bool {
    p.min(1.0 - p) >= alpha / 2.0
}

/// How CSV columns map onto a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "kebab-case")]
pub enum CsvLayout {
    /// Every column is a continuous value.
    Continuous,
    /// First column is the response, the rest are covariates.
    Regression,
    /// Columns hold 1-based level codes. Level counts default to the
    /// largest code seen in each column.
    Categorical {
        #[serde(default)]
        levels: Option<Vec<usize>>,
    },
}

/// Read a headed CSV file.
pub fn read_csv(path: &Path, layout: &CsvLayout) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let d = headers.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("row {}: cannot parse `{s}` as a number", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("row {}: non-finite value", i + 1)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    let n = rows.len();
    let matrix = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    match layout {
        CsvLayout::Continuous => Dataset::continuous(matrix),
        CsvLayout::Regression => {
            if d < 2 {
                return Err(Error::Data("regression data needs a response and at least one covariate".into()));
            }
            Dataset::with_covariates(matrix.columns(0, 1).into_owned(), matrix.columns(1, d - 1).into_owned())
        }
        CsvLayout::Categorical { levels } => {
            let mut codes = vec![vec![0usize; d]; n];
            for (i, row) in rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    if v.fract() != 0.0 || *v < 1.0 {
                        return Err(Error::Data(format!("row {}: level code {v} is not a positive integer", i + 1)));
                    }
                    codes[i][j] = *v as usize - 1;
                }
            }
            let levels = match levels {
                Some(l) if l.len() == d => l.clone(),
                Some(l) => {
                    return Err(Error::Data(format!("{} level counts given for {d} columns", l.len())));
                }
                None => (0..d).map(|j| codes.iter().map(|r| r[j] + 1).max().unwrap_or(1)).collect(),
            };
            Dataset::categorical_from_codes(&codes, &levels)
        }
    }
}

/// Write a dataset as headed CSV. Categorical data is written as 1-based
/// level codes, regression data as `y, x1..xp`.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match data.kind() {
        DataKind::CategoricalOneHot => {
            let codes = data.codes()?;
            let j = codes[0].len();
            w.write_record((1..=j).map(|k| format!("v{k}")))?;
            for row in codes {
                w.write_record(row.iter().map(|c| (c + 1).to_string()))?;
            }
        }
        DataKind::Continuous => {
            let v = data.values();
            match data.covariates() {
                Some(x) => {
                    let mut header = vec!["y".to_string()];
                    header.extend((1..=x.ncols()).map(|k| format!("x{k}")));
                    w.write_record(&header)?;
                    for i in 0..data.n_rows() {
                        let mut rec = vec![v[(i, 0)].to_string()];
                        rec.extend(x.row(i).iter().map(|c| c.to_string()));
                        w.write_record(&rec)?;
                    }
                }
                None => {
                    w.write_record((1..=v.ncols()).map(|k| format!("x{k}")))?;
                    for i in 0..data.n_rows() {
                        w.write_record(v.row(i).iter().map(|c| c.to_string()))?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
