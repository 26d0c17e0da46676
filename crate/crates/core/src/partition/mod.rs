//! Data partitions: equal-depth grids, k-means clusters, natural (keyed)
//! partitions, plus block geometry diagnostics and the `row,block` file
//! format.

mod geometry;
mod kmeans;

pub use geometry::{block_geometry, diameter_exact, BlockGeometry, EXACT_DIAMETER_MAX};
pub use kmeans::{kmeans, KMeansFit, KMeansParams};

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Default cap on the number of grid cells an equal-depth partition may
/// address.
pub const DEFAULT_MAX_CELLS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMethod {
    EqualDepth,
    KMeans,
    Natural,
    DistinctX,
}

impl fmt::Display for PartitionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionMethod::EqualDepth => "equal-depth",
            PartitionMethod::KMeans => "kmeans",
            PartitionMethod::Natural => "natural",
            PartitionMethod::DistinctX => "distinct-x",
        })
    }
}

/// Quantile cut points of an equal-depth grid, with the observed column
/// ranges used to close the outer cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub columns: Vec<usize>,
    /// Sorted cut list per grid column; value `v` falls in cell
    /// `#{c in cuts : c < v}`, so ties go to the lower cell.
    pub cuts: Vec<Vec<f64>>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Cell coordinates of every block, one entry per grid column.
    pub cells: Vec<Vec<usize>>,
}

impl Grid {
    /// `[lower, upper]` of block `k` along grid column `g`, outer cells
    /// clipped to the observed data range.
    pub fn cell_bounds(&self, k: usize, g: usize) -> (f64, f64) {
        let c = self.cells[k][g];
        let cuts = &self.cuts[g];
        let lo = if c == 0 { self.min[g] } else { cuts[c - 1] };
        let hi = if c == cuts.len() { self.max[g] } else { cuts[c] };
        (lo, hi)
    }
}

/// Disjoint, exhaustive, nonempty row blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    blocks: Vec<Vec<usize>>,
    n: usize,
    pub method: PartitionMethod,
    pub grid: Option<Grid>,
    /// K x `center_columns.len()` cluster centers (k-means only).
    pub centers: Option<Vec<f64>>,
    pub center_columns: Vec<usize>,
}

impl PartitionSpec {
    /// Validates that `blocks` cover `0..n` exactly once with no empty block.
    pub fn new(blocks: Vec<Vec<usize>>, n: usize, method: PartitionMethod) -> Result<Self> {
        let mut seen = vec![false; n];
        for (k, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::Data(format!("block {k} is empty")));
            }
            for &i in b {
                if i >= n {
                    return Err(Error::Data(format!("row {i} out of range in block {k}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Data(format!("row {i} appears in more than one block")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!("row {i} is not in any block")));
        }
        Ok(Self {
            blocks,
            n,
            method,
            grid: None,
            centers: None,
            center_columns: Vec::new(),
        })
    }

    /// Group rows by label; blocks are ordered by label value.
    pub fn from_labels(labels: &[usize], method: PartitionMethod) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            blocks[l].push(i);
        }
        blocks.retain(|b| !b.is_empty());
        Self::new(blocks, labels.len(), method)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &[usize] {
        &self.blocks[k]
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Block id of every row.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for (k, b) in self.blocks.iter().enumerate() {
            for &i in b {
                out[i] = k;
            }
        }
        out
    }

    /// Concatenate partitions of consecutive row shards; block order is
    /// shard order, then block order within each shard.
    pub fn concat(parts: &[PartitionSpec]) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for p in parts {
            blocks.extend(p.blocks.iter().map(|b| b.iter().map(|i| i + offset).collect()));
            offset += p.n;
        }
        let method = parts.first().map_or(PartitionMethod::Natural, |p| p.method);
        Self::new(blocks, offset, method)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "row,block")?;
        for (i, k) in self.labels().iter().enumerate() {
            writeln!(out, "{i},{k}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read a `row,block` file. Blocks come back ordered by block id with
    /// rows ascending; the method tag is `natural`.
    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "row,block" {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `row,block`, found `{}`", header.trim()),
            });
        }
        let mut pairs = Vec::new();
        for (no, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: no + 2,
                msg: format!("malformed `row,block` entry `{line}`"),
            };
            let (r, b) = line.split_once(',').ok_or_else(bad)?;
            let r: usize = r.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            pairs.push((r, b));
        }
        let n = pairs.iter().map(|p| p.0 + 1).max().unwrap_or(0);
        let mut labels = vec![usize::MAX; n];
        for (r, b) in pairs {
            if labels[r] != usize::MAX {
                return Err(Error::Data(format!("row {r} listed twice")));
            }
            labels[r] = b;
        }
        if let Some(r) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::Data(format!("row {r} missing from partition file")));
        }
        let mut ids: Vec<usize> = labels.clone();
        ids.sort_unstable();
        ids.dedup();
        let dense: Vec<usize> = labels
            .iter()
            .map(|l| ids.binary_search(l).expect("label present"))
            .collect();
        Self::from_labels(&dense, PartitionMethod::Natural)
    }
}

/// Nearest-rank quantile cuts at `j/m`, `j = 1..m-1`.
pub fn nearest_rank_cuts(values: &[f64], m: usize) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    (1..m)
        .map(|j| {
            let rank = (j * n).div_ceil(m).max(1);
            s[rank - 1]
        })
        .collect()
}

#[inline]
fn cell_of(cuts: &[f64], v: f64) -> usize {
    cuts.partition_point(|c| *c < v)
}

/// Equal-depth labels of one column and the cut list used.
pub fn discretize_column(values: &[f64], bins: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    let cuts = nearest_rank_cuts(values, bins);
    Ok((values.iter().map(|&v| cell_of(&cuts, v)).collect(), cuts))
}

/// Equal-depth labels computed separately inside each group (e.g. per data
/// file), for sub-partitioning a natural partition.
pub fn discretize_within(values: &[f64], groups: &[i64], bins: usize) -> Result<Vec<usize>> {
    if values.len() != groups.len() {
        return Err(Error::Dimension("values and groups differ in length".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| groups[i]);
    let mut out = vec![0; values.len()];
    for chunk in order.chunk_by(|&a, &b| groups[a] == groups[b]) {
        let vals: Vec<f64> = chunk.iter().map(|&i| values[i]).collect();
        let (labels, _) = discretize_column(&vals, bins)?;
        for (&i, l) in chunk.iter().zip(labels) {
            out[i] = l;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EqualDepthParams {
    pub m: usize,
    /// Grid columns; `None` means every non-intercept predictor.
    pub columns: Option<Vec<usize>>,
    pub max_cells: u64,
}

impl EqualDepthParams {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            columns: None,
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

pub fn equal_depth_partition(data: &Dataset, params: &EqualDepthParams) -> Result<PartitionSpec> {
    let m = params.m;
    if m == 0 {
        return Err(Error::Config("equal-depth needs m >= 1".into()));
    }
    let columns = params
        .columns
        .clone()
        .unwrap_or_else(|| data.non_intercept_columns());
    if let Some(&j) = columns.iter().find(|&&j| j >= data.p()) {
        return Err(Error::Config(format!("grid column {j} out of range")));
    }
    let cells = (m as f64).powi(columns.len() as i32);
    if cells > params.max_cells as f64 {
        return Err(Error::Config(format!(
            "equal-depth grid with m={m} over {} columns addresses {cells:.3e} cells (cap {}); use a kmeans partition instead",
            columns.len(),
            params.max_cells
        )));
    }
    let n = data.n();
    let mut cuts = Vec::with_capacity(columns.len());
    let mut min = Vec::with_capacity(columns.len());
    let mut max = Vec::with_capacity(columns.len());
    for &j in &columns {
        let col: Vec<f64> = data.column(j).collect();
        min.push(col.iter().copied().fold(f64::INFINITY, f64::min));
        max.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        cuts.push(nearest_rank_cuts(&col, m));
    }
    let mut coded: Vec<(u64, usize)> = (0..n)
        .map(|i| {
            let row = data.row(i);
            let code = columns
                .iter()
                .zip(&cuts)
                .fold(0u64, |acc, (&j, c)| acc * m as u64 + cell_of(c, row[j]) as u64);
            (code, i)
        })
        .collect();
    coded.sort_unstable();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut codes = Vec::new();
    for chunk in coded.chunk_by(|a, b| a.0 == b.0) {
        codes.push(chunk[0].0);
        blocks.push(chunk.iter().map(|c| c.1).collect());
    }
    let cell_coords = codes
        .iter()
        .map(|&code| {
            let mut c = code;
            let mut out = vec![0; columns.len()];
            for slot in out.iter_mut().rev() {
                *slot = (c % m as u64) as usize;
                c /= m as u64;
            }
            out
        })
        .collect();
    let mut spec = PartitionSpec::new(blocks, n, PartitionMethod::EqualDepth)?;
    spec.grid = Some(Grid {
        columns,
        cuts,
        min,
        max,
        cells: cell_coords,
    });
    Ok(spec)
}

pub fn kmeans_partition(data: &Dataset, params: &KMeansParams) -> Result<PartitionSpec> {
    let cols = data.non_intercept_columns();
    let cols = if cols.is_empty() { vec![0] } else { cols };
    let d = cols.len();
    let mut pts = Vec::with_capacity(data.n() * d);
    for i in 0..data.n() {
        let row = data.row(i);
        pts.extend(cols.iter().map(|&j| row[j]));
    }
    let fit = kmeans(&pts, d, params)?;
    let mut blocks = vec![Vec::new(); params.k];
    for (i, &l) in fit.labels.iter().enumerate() {
        blocks[l].push(i);
    }
    let mut centers = Vec::new();
    let mut kept = Vec::new();
    for (c, b) in blocks.into_iter().enumerate() {
        if !b.is_empty() {
            centers.extend_from_slice(&fit.centers[c * d..(c + 1) * d]);
            kept.push(b);
        }
    }
    let mut spec = PartitionSpec::new(kept, data.n(), PartitionMethod::KMeans)?;
    spec.centers = Some(centers);
    spec.center_columns = cols;
    Ok(spec)
}

/// Orderable image of a key cell: integer keys as-is, predictor values by
/// IEEE total order with `-0.0` folded into `0.0`.
fn orderable(v: f64) -> i64 {
    let v = if v == 0.0 { 0.0 } else { v };
    let bits = v.to_bits() as i64;
    bits ^ (((bits >> 63) as u64) >> 1) as i64
}

/// One block per distinct tuple of the named columns (key columns or
/// predictor columns). Blocks are ordered by the tuple.
pub fn natural_partition(data: &Dataset, columns: &[&str]) -> Result<PartitionSpec> {
    natural_with_method(data, columns, PartitionMethod::Natural)
}

/// Natural partition keyed on every predictor column: each block holds one
/// distinct predictor vector.
pub fn distinct_x_partition(data: &Dataset) -> Result<PartitionSpec> {
    let names: Vec<&str> = data.names().iter().map(String::as_str).collect();
    natural_with_method(data, &names, PartitionMethod::DistinctX)
}

fn natural_with_method(data: &Dataset, columns: &[&str], method: PartitionMethod) -> Result<PartitionSpec> {
    if columns.is_empty() {
        return Err(Error::Config("natural partition needs at least one key column".into()));
    }
    let n = data.n();
    let mut keys: Vec<Vec<i64>> = Vec::with_capacity(columns.len());
    for &c in columns {
        if let Some(k) = data.key(c) {
            keys.push(k.values.clone());
        } else if let Some(j) = data.column_index(c) {
            keys.push(data.column(j).map(orderable).collect());
        } else {
            return Err(Error::Config(format!("no column named `{c}`")));
        }
    }
    let cmp = |a: &usize, b: &usize| -> Ordering {
        for k in &keys {
            match k[*a].cmp(&k[*b]) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        a.cmp(b)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(cmp);
    let same = |a: &usize, b: &usize| keys.iter().all(|k| k[*a] == k[*b]);
    let blocks: Vec<Vec<usize>> = order.chunk_by(same).map(<[usize]>::to_vec).collect();
    PartitionSpec::new(blocks, n, method)
}

/// Partition request as written on the command line and in configs:
/// `equal-depth:m`, `kmeans:K`, `natural:col1,col2`, `distinct-x`.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionRequest {
    EqualDepth(usize),
    KMeans(usize),
    Natural(Vec<String>),
    DistinctX,
}

impl FromStr for PartitionRequest {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let count = |a: &str| {
            a.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad count in partition `{s}`")))
        };
        Ok(match kind {
            "equal-depth" => PartitionRequest::EqualDepth(count(arg)?),
            "kmeans" => PartitionRequest::KMeans(count(arg)?),
            "natural" => {
                let cols: Vec<String> = arg
                    .split(',')
                    .map(|c| c.trim().to_string())
                    .filter(|c| !c.is_empty())
                    .collect();
                if cols.is_empty() {
                    return Err(Error::Config("natural partition needs column names".into()));
                }
                PartitionRequest::Natural(cols)
            }
            "distinct-x" => PartitionRequest::DistinctX,
            _ => return Err(Error::Config(format!("unknown partition `{s}`"))),
        })
    }
}

impl fmt::Display for PartitionRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionRequest::EqualDepth(m) => write!(f, "equal-depth:{m}"),
            PartitionRequest::KMeans(k) => write!(f, "kmeans:{k}"),
            PartitionRequest::Natural(c) => write!(f, "natural:{}", c.join(",")),
            PartitionRequest::DistinctX => f.write_str("distinct-x"),
        }
    }
}

impl PartitionRequest {
    pub fn build(&self, data: &Dataset, seed: u64) -> Result<PartitionSpec> {
        match self {
            PartitionRequest::EqualDepth(m) => equal_depth_partition(data, &EqualDepthParams::new(*m)),
            PartitionRequest::KMeans(k) => kmeans_partition(data, &KMeansParams::new(*k, seed)),
            PartitionRequest::Natural(cols) => {
                let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
                natural_partition(data, &cols)
            }
            PartitionRequest::DistinctX => distinct_x_partition(data),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data(values: &[f64]) -> Dataset {
        Dataset::with_intercept(values, 1, vec![0.0; values.len()], &["x1".into()]).unwrap()
    }

    #[test]
    fn m1_is_single_block() {
        let d = line_data(&[3.0, 1.0, 2.0]);
        let p = equal_depth_partition(&d, &EqualDepthParams::new(1)).unwrap();
        assert_eq!(p.k(), 1);
        assert_eq!(p.block(0), &[0, 1, 2]);
    }

    #[test]
    fn m2_splits_at_median() {
        let d = line_data(&[5.0, 1.0, 4.0, 2.0, 3.0, 6.0]);
        let p = equal_depth_partition(&d, &EqualDepthParams::new(2)).unwrap();
        assert_eq!(p.k(), 2);
        assert_eq!(p.grid.as_ref().unwrap().cuts[0], vec![3.0]);
        assert_eq!(p.block(0), &[1, 3, 4]);
        assert_eq!(p.block(1), &[0, 2, 5]);
    }

    #[test]
    fn grid_cap_is_config_error() {
        let d = line_data(&[1.0, 2.0]);
        let mut params = EqualDepthParams::new(4);
        params.max_cells = 3;
        assert!(matches!(equal_depth_partition(&d, &params), Err(Error::Config(_))));
    }

    #[test]
    fn discretize_quartiles_of_1_to_100() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let (labels, cuts) = discretize_column(&v, 4).unwrap();
        assert_eq!(cuts, vec![25.0, 50.0, 75.0]);
        for (i, l) in labels.iter().enumerate() {
            assert_eq!(*l, i / 25);
        }
    }

    #[test]
    fn discretize_constant_column() {
        let (labels, _) = discretize_column(&[2.0; 17], 5).unwrap();
        assert!(labels.iter().all(|&l| l == labels[0]));
    }

    #[test]
    fn natural_by_month() {
        let mut d = line_data(&(0..36).map(f64::from).collect::<Vec<_>>());
        d.add_key("month", (0..36).map(|i| i % 12).collect()).unwrap();
        let p = natural_partition(&d, &["month"]).unwrap();
        assert_eq!(p.k(), 12);
        assert_eq!(p.block(0), &[0, 12, 24]);
        assert!(natural_partition(&d, &["nope"]).is_err());
    }

    #[test]
    fn distinct_x_groups_identical_rows() {
        let d = line_data(&[1.0, 0.0, 1.0, -0.0, 2.0]);
        let p = distinct_x_partition(&d).unwrap();
        assert_eq!(p.k(), 3);
        assert_eq!(p.method, PartitionMethod::DistinctX);
        assert_eq!(p.block(1), &[0, 2]);
        assert_eq!(p.block(0), &[1, 3]);
    }

    #[test]
    fn partition_file_round_trip() {
        let p = PartitionSpec::new(vec![vec![2, 0], vec![1]], 3, PartitionMethod::Natural).unwrap();
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "row,block\n0,0\n1,1\n2,0\n");
        let back = PartitionSpec::read(&buf[..]).unwrap();
        assert_eq!(back.labels(), p.labels());
        assert!(PartitionSpec::read(&b"row,block\n0,x\n"[..]).is_err());
    }

    #[test]
    fn invalid_blocks_rejected() {
        assert!(PartitionSpec::new(vec![vec![0], vec![0, 1]], 2, PartitionMethod::Natural).is_err());
        assert!(PartitionSpec::new(vec![vec![0]], 2, PartitionMethod::Natural).is_err());
        assert!(PartitionSpec::new(vec![vec![0, 1], vec![]], 2, PartitionMethod::Natural).is_err());
    }

    #[test]
    fn parses_requests() {
        assert_eq!("kmeans:200".parse::<PartitionRequest>().unwrap(), PartitionRequest::KMeans(200));
        assert_eq!(
            "natural:month,day".parse::<PartitionRequest>().unwrap(),
            PartitionRequest::Natural(vec!["month".into(), "day".into()])
        );
        assert!("grid:4".parse::<PartitionRequest>().is_err());
    }
}
