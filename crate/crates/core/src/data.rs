//! Datasets, weighted representative data and the CSV exchange format.
//!
//! CSV layout: header `y,<predictor names...>[,<key names...>]`, one row per
//! observation, UTF-8, `.` as decimal separator. The intercept column is not
//! written; it is re-created on load when requested.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "intercept";

/// Integer-labelled column used only to define natural partitions (file,
/// month, discretized bins). Never enters the design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyColumn {
    pub name: String,
    pub values: Vec<i64>,
}

/// Immutable N x p design matrix (row-major), response vector and column
/// metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    p: usize,
    names: Vec<String>,
    keys: Vec<KeyColumn>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, names: Vec<String>) -> Result<Self> {
        let p = names.len();
        if p == 0 {
            return Err(Error::Data("dataset needs at least one predictor".into()));
        }
        let n = y.len();
        if n == 0 {
            return Err(Error::Data("dataset needs at least one row".into()));
        }
        if x.len() != n * p {
            return Err(Error::Dimension(format!(
                "predictor matrix has {} entries, expected {n}x{p}",
                x.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite predictor at row {}, column {}",
                i / p,
                names[i % p]
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite response at row {i}")));
        }
        Ok(Self {
            x,
            y,
            p,
            names,
            keys: Vec::new(),
        })
    }

    /// Zero-row dataset with the same columns, for shards that hold no data.
    pub fn empty_like(other: &Dataset) -> Self {
        Self {
            x: Vec::new(),
            y: Vec::new(),
            p: other.p,
            names: other.names.clone(),
            keys: other
                .keys
                .iter()
                .map(|k| KeyColumn {
                    name: k.name.clone(),
                    values: Vec::new(),
                })
                .collect(),
        }
    }

    /// Build from covariate rows, prepending a constant intercept column.
    pub fn with_intercept(covariates: &[f64], d: usize, y: Vec<f64>, cov_names: &[String]) -> Result<Self> {
        let n = y.len();
        if covariates.len() != n * d || cov_names.len() != d {
            return Err(Error::Dimension(format!(
                "covariates have {} entries and {} names, expected {n}x{d}",
                covariates.len(),
                cov_names.len()
            )));
        }
        let p = d + 1;
        let mut x = Vec::with_capacity(n * p);
        for i in 0..n {
            x.push(1.0);
            x.extend_from_slice(&covariates[i * d..(i + 1) * d]);
        }
        let mut names = Vec::with_capacity(p);
        names.push(INTERCEPT.to_string());
        names.extend(cov_names.iter().cloned());
        Self::new(x, y, names)
    }

    pub fn add_key(&mut self, name: impl Into<String>, values: Vec<i64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.n() {
            return Err(Error::Dimension(format!(
                "key column {name} has {} values for {} rows",
                values.len(),
                self.n()
            )));
        }
        if self.names.contains(&name) || self.keys.iter().any(|k| k.name == name) || name == "y" {
            return Err(Error::Data(format!("duplicate column name {name}")));
        }
        self.keys.push(KeyColumn { name, values });
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn keys(&self) -> &[KeyColumn] {
        &self.keys
    }

    pub fn key(&self, name: &str) -> Option<&KeyColumn> {
        self.keys.iter().find(|k| k.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().skip(j).step_by(self.p).copied()
    }

    /// Index of the intercept column, if column 0 is identically one.
    pub fn intercept_column(&self) -> Option<usize> {
        if self.column(0).all(|v| v == 1.0) {
            Some(0)
        } else {
            None
        }
    }

    /// Predictor columns other than the intercept.
    pub fn non_intercept_columns(&self) -> Vec<usize> {
        let skip = self.intercept_column();
        (0..self.p).filter(|&j| Some(j) != skip).collect()
    }

    /// Rows `idx` in the given order, keys included.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(idx.len() * self.p);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        let mut out = Self::new(x, y, self.names.clone())?;
        for k in &self.keys {
            out.keys.push(KeyColumn {
                name: k.name.clone(),
                values: idx.iter().map(|&i| k.values[i]).collect(),
            });
        }
        Ok(out)
    }

    /// Row-wise concatenation. Column names and key names must agree.
    pub fn concat(parts: &[Dataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Data("nothing to concatenate".into()))?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut keys: Vec<KeyColumn> = first
            .keys
            .iter()
            .map(|k| KeyColumn {
                name: k.name.clone(),
                values: Vec::new(),
            })
            .collect();
        for d in parts {
            if d.names != first.names || d.keys.len() != keys.len() {
                return Err(Error::Dimension("datasets have different columns".into()));
            }
            x.extend_from_slice(&d.x);
            y.extend_from_slice(&d.y);
            for (acc, k) in keys.iter_mut().zip(&d.keys) {
                if acc.name != k.name {
                    return Err(Error::Dimension("datasets have different key columns".into()));
                }
                acc.values.extend_from_slice(&k.values);
            }
        }
        let mut out = Self::new(x, y, first.names.clone())?;
        out.keys = keys;
        Ok(out)
    }

    pub fn replace_y(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Dimension("response length changed".into()));
        }
        let mut out = Self::new(self.x.clone(), y, self.names.clone())?;
        out.keys = self.keys.clone();
        Ok(out)
    }
}

/// Read access shared by raw and weighted data so the solvers need not copy
/// a full dataset into weighted form.
pub trait Observations: Sync {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn weight(&self, i: usize) -> f64;
    fn x_row(&self, i: usize) -> &[f64];
    fn response(&self, i: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn total_weight(&self) -> f64 {
        (0..self.len()).map(|i| self.weight(i)).sum()
    }
}

impl Observations for Dataset {
    fn len(&self) -> usize {
        self.n()
    }
    fn dim(&self) -> usize {
        self.p
    }
    #[inline]
    fn weight(&self, _i: usize) -> f64 {
        1.0
    }
    #[inline]
    fn x_row(&self, i: usize) -> &[f64] {
        self.row(i)
    }
    #[inline]
    fn response(&self, i: usize) -> f64 {
        self.y[i]
    }
    fn total_weight(&self) -> f64 {
        self.n() as f64
    }
}

/// K weighted points `(n_k, x_k, y_k)`; the solver input for representative
/// fits.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedData {
    w: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    p: usize,
}

impl WeightedData {
    pub fn new(w: Vec<f64>, x: Vec<f64>, y: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 || x.len() != w.len() * p || y.len() != w.len() {
            return Err(Error::Dimension(format!(
                "weighted data: {} weights, {} predictor entries, {} responses, p={p}",
                w.len(),
                x.len(),
                y.len()
            )));
        }
        if let Some(k) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Data(format!("weight {k} is not a positive finite number")));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Data("weighted data has non-finite entries".into()));
        }
        Ok(Self { w, x, y, p })
    }

    pub fn from_rows(rows: &[(f64, Vec<f64>, f64)]) -> Result<Self> {
        let p = rows.first().map(|r| r.1.len()).unwrap_or(0);
        let mut w = Vec::with_capacity(rows.len());
        let mut x = Vec::with_capacity(rows.len() * p);
        let mut y = Vec::with_capacity(rows.len());
        for (wi, xi, yi) in rows {
            if xi.len() != p {
                return Err(Error::Dimension("ragged weighted rows".into()));
            }
            w.push(*wi);
            x.extend_from_slice(xi);
            y.push(*yi);
        }
        Self::new(w, x, y, p)
    }

    pub fn unit(data: &Dataset) -> Self {
        Self {
            w: vec![1.0; data.n()],
            x: data.x.clone(),
            y: data.y.clone(),
            p: data.p,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.w.iter().map(|w| w * c).collect(), self.x.clone(), self.y.clone(), self.p)
    }
}

impl Observations for WeightedData {
    fn len(&self) -> usize {
        self.w.len()
    }
    fn dim(&self) -> usize {
        self.p
    }
    #[inline]
    fn weight(&self, i: usize) -> f64 {
        self.w[i]
    }
    #[inline]
    fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }
    #[inline]
    fn response(&self, i: usize) -> f64 {
        self.y[i]
    }
}

/// How to interpret columns when loading CSV.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    /// Columns parsed as integer keys instead of predictors.
    pub key_columns: Vec<String>,
    /// Prepend a constant intercept column to the design matrix.
    pub intercept: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            key_columns: Vec::new(),
            intercept: true,
        }
    }
}

pub fn write_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let icpt = data.intercept_column();
    let cols: Vec<usize> = (0..data.p()).filter(|&j| Some(j) != icpt).collect();
    let mut header = vec!["y".to_string()];
    header.extend(cols.iter().map(|&j| data.names[j].clone()));
    header.extend(data.keys.iter().map(|k| k.name.clone()));
    w.write_record(&header).map_err(csv_io)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..data.n() {
        rec.clear();
        rec.push(fmt_f64(data.y[i]));
        let row = data.row(i);
        rec.extend(cols.iter().map(|&j| fmt_f64(row[j])));
        rec.extend(data.keys.iter().map(|k| k.values[i].to_string()));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv(data, std::io::BufWriter::new(f))
}

pub fn read_csv<R: Read>(input: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let cols: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let y_col = cols.iter().position(|c| c == "y").ok_or(Error::Parse {
        line: 1,
        msg: "header has no `y` column".into(),
    })?;
    for k in &opts.key_columns {
        if !cols.contains(k) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("key column {k} not in header"),
            });
        }
    }
    let is_key: Vec<bool> = cols.iter().map(|c| opts.key_columns.contains(c)).collect();
    let pred_cols: Vec<usize> = (0..cols.len()).filter(|&j| j != y_col && !is_key[j]).collect();
    let key_cols: Vec<usize> = (0..cols.len()).filter(|&j| is_key[j]).collect();

    let mut y = Vec::new();
    let mut cov = Vec::new();
    let mut keys: Vec<Vec<i64>> = vec![Vec::new(); key_cols.len()];
    for (rec_no, rec) in rdr.records().enumerate() {
        let line = rec_no + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(line),
            msg: e.to_string(),
        })?;
        if rec.len() != cols.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", cols.len(), rec.len()),
            });
        }
        let num = |j: usize| -> Result<f64> {
            let s = rec[j].trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("column {}: `{s}` is not a finite number", cols[j]),
                })
        };
        y.push(num(y_col)?);
        for &j in &pred_cols {
            cov.push(num(j)?);
        }
        for (acc, &j) in keys.iter_mut().zip(&key_cols) {
            let s = rec[j].trim();
            acc.push(s.parse::<i64>().map_err(|_| Error::Parse {
                line,
                msg: format!("key column {}: `{s}` is not an integer", cols[j]),
            })?);
        }
    }
    if y.is_empty() {
        return Err(Error::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    let names: Vec<String> = pred_cols.iter().map(|&j| cols[j].clone()).collect();
    let mut data = if opts.intercept {
        Dataset::with_intercept(&cov, names.len(), y, &names)?
    } else {
        Dataset::new(cov, y, names)?
    };
    for (vals, &j) in keys.into_iter().zip(&key_cols) {
        data.add_key(cols[j].clone(), vals)?;
    }
    Ok(data)
}

pub fn read_csv_file(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(f), opts)
}

/// Shortest representation that parses back to the same f64.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
