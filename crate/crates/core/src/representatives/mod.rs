//! Representative data sets: one weighted point per block (two when a block
//! is split by the sign of the linear predictor).

mod smr;

pub use smr::{
    smr_fit, smr_predictor, smr_representatives, smr_response, solve_eta, split_block_by_sign, SmrFit,
    SmrParams, DEFAULT_GRID_POINTS, DEFAULT_TAU,
};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::data::{Dataset, WeightedData};
use crate::error::{Error, Result};
use crate::glm::{self, FitResult, GlmFamily, SolverParams};
use crate::linalg::dot;
use crate::partition::PartitionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepKind {
    Mid,
    Median,
    Mean,
    Smr,
}

impl fmt::Display for RepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepKind::Mid => "mid",
            RepKind::Median => "median",
            RepKind::Mean => "mean",
            RepKind::Smr => "smr",
        })
    }
}

impl FromStr for RepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mid" | "midpoint" => Ok(RepKind::Mid),
            "median" => Ok(RepKind::Median),
            "mean" | "mr" => Ok(RepKind::Mean),
            "smr" => Ok(RepKind::Smr),
            other => Err(Error::Config(format!("unknown representative method `{other}`"))),
        }
    }
}

/// Which rows of the source block a point summarises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockPart {
    Whole,
    /// Rows with `eta >= 0` at the split coefficients.
    NonNegative,
    /// Rows with `eta < 0`.
    Negative,
}

/// Which quantities of an SMR point fell back to block means.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Fallback {
    pub y_mean: bool,
    pub eta_mean: bool,
    pub x_mean: bool,
}

impl Fallback {
    pub fn any(&self) -> bool {
        self.y_mean || self.eta_mean || self.x_mean
    }

    /// Whether the point reproduces its block score exactly.
    pub fn score_exact(&self) -> bool {
        !self.eta_mean && !self.x_mean
    }
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tags: Vec<&str> = [(self.y_mean, "y-mean"), (self.eta_mean, "eta-mean"), (self.x_mean, "x-mean")]
            .iter()
            .filter(|t| t.0)
            .map(|t| t.1)
            .collect();
        if tags.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&tags.join("+"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepPoint {
    pub block: usize,
    pub part: BlockPart,
    pub weight: f64,
    pub x: Vec<f64>,
    pub y: f64,
    pub eta_tilde: Option<f64>,
    pub fallback: Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeSet {
    pub kind: RepKind,
    pub p: usize,
    pub points: Vec<RepPoint>,
    /// SMR iteration that produced the set (0 for the non-iterative kinds).
    pub iteration: usize,
    /// Coefficients and threshold used for the sign split, if any.
    pub split: Option<(Vec<f64>, f64)>,
}

impl RepresentativeSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|r| r.weight).sum()
    }

    pub fn to_weighted(&self) -> Result<WeightedData> {
        let mut w = Vec::with_capacity(self.len());
        let mut x = Vec::with_capacity(self.len() * self.p);
        let mut y = Vec::with_capacity(self.len());
        for r in &self.points {
            w.push(r.weight);
            x.extend_from_slice(&r.x);
            y.push(r.y);
        }
        WeightedData::new(w, x, y, self.p)
    }

    /// Source rows of point `j`, re-deriving the sign split if one was used.
    pub fn point_rows(&self, j: usize, data: &Dataset, part: &PartitionSpec) -> Vec<usize> {
        let r = &self.points[j];
        let rows = part.block(r.block);
        match (&self.split, r.part) {
            (Some((beta, _)), BlockPart::NonNegative) => {
                rows.iter().copied().filter(|&i| dot(data.row(i), beta) >= 0.0).collect()
            }
            (Some((beta, _)), BlockPart::Negative) => {
                rows.iter().copied().filter(|&i| dot(data.row(i), beta) < 0.0).collect()
            }
            _ => rows.to_vec(),
        }
    }

    /// Delimited export `block,weight,ytilde,x1..xp,fallback`.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "block,weight,ytilde")?;
        for j in 1..=self.p {
            write!(out, ",x{j}")?;
        }
        writeln!(out, ",fallback")?;
        for r in &self.points {
            write!(out, "{},{:?},{:?}", r.block, r.weight, r.y)?;
            for v in &r.x {
                write!(out, ",{v:?}")?;
            }
            writeln!(out, ",{}", r.fallback)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn block_mean(data: &Dataset, rows: &[usize]) -> (Vec<f64>, f64) {
    let p = data.p();
    let mut x = vec![0.0; p];
    let mut y = 0.0;
    for &i in rows {
        for (a, v) in x.iter_mut().zip(data.row(i)) {
            *a += v;
        }
        y += data.y()[i];
    }
    let inv = 1.0 / rows.len() as f64;
    x.iter_mut().for_each(|v| *v *= inv);
    (x, y * inv)
}

fn whole_point(block: usize, n: usize, x: Vec<f64>, y: f64) -> RepPoint {
    RepPoint {
        block,
        part: BlockPart::Whole,
        weight: n as f64,
        x,
        y,
        eta_tilde: None,
        fallback: Fallback::default(),
    }
}

pub fn mean_representatives(data: &Dataset, part: &PartitionSpec) -> RepresentativeSet {
    let points = part
        .blocks()
        .iter()
        .enumerate()
        .map(|(k, rows)| {
            let (x, y) = block_mean(data, rows);
            whole_point(k, rows.len(), x, y)
        })
        .collect();
    RepresentativeSet {
        kind: RepKind::Mean,
        p: data.p(),
        points,
        iteration: 0,
        split: None,
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Coordinate-wise median predictors with the block-mean response.
pub fn median_representatives(data: &Dataset, part: &PartitionSpec) -> RepresentativeSet {
    let p = data.p();
    let points = part
        .blocks()
        .iter()
        .enumerate()
        .map(|(k, rows)| {
            let mut buf = vec![0.0; rows.len()];
            let x = (0..p)
                .map(|j| {
                    for (b, &i) in buf.iter_mut().zip(rows) {
                        *b = data.row(i)[j];
                    }
                    median(&mut buf)
                })
                .collect();
            let y = rows.iter().map(|&i| data.y()[i]).sum::<f64>() / rows.len() as f64;
            whole_point(k, rows.len(), x, y)
        })
        .collect();
    RepresentativeSet {
        kind: RepKind::Median,
        p,
        points,
        iteration: 0,
        split: None,
    }
}

/// Grid-cell centres on the grid columns (outer cells clipped to the data
/// range), block means elsewhere; block-mean response.
pub fn midpoint_representatives(data: &Dataset, part: &PartitionSpec) -> Result<RepresentativeSet> {
    let grid = part
        .grid
        .as_ref()
        .ok_or_else(|| Error::Config("mid-point representatives need an equal-depth partition".into()))?;
    let points = part
        .blocks()
        .iter()
        .enumerate()
        .map(|(k, rows)| {
            let (mut x, y) = block_mean(data, rows);
            for (g, &j) in grid.columns.iter().enumerate() {
                let (lo, hi) = grid.cell_bounds(k, g);
                x[j] = 0.5 * (lo + hi);
            }
            whole_point(k, rows.len(), x, y)
        })
        .collect();
    Ok(RepresentativeSet {
        kind: RepKind::Mid,
        p: data.p(),
        points,
        iteration: 0,
        split: None,
    })
}

/// Fit on a non-iterative representative set; the start is derived from
/// the set itself.
pub fn fit_representatives(
    reps: &RepresentativeSet,
    family: &GlmFamily,
    solver: &SolverParams,
) -> Result<FitResult> {
    let wd = reps.to_weighted()?;
    let init = glm::initial_beta(&wd, family);
    glm::fit(&wd, family, &init, solver)
}

/// Build representatives of `kind` and fit on them. SMR uses default
/// iteration settings with the given solver.
pub fn representative_fit(
    data: &Dataset,
    part: &PartitionSpec,
    kind: RepKind,
    family: &GlmFamily,
    solver: &SolverParams,
) -> Result<(FitResult, RepresentativeSet)> {
    let reps = match kind {
        RepKind::Mean => mean_representatives(data, part),
        RepKind::Median => median_representatives(data, part),
        RepKind::Mid => midpoint_representatives(data, part)?,
        RepKind::Smr => {
            let params = SmrParams {
                solver: *solver,
                ..SmrParams::default()
            };
            let out = smr_fit(data, part, family, &params)?;
            return Ok((out.fit, out.reps));
        }
    };
    Ok((fit_representatives(&reps, family, solver)?, reps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{equal_depth_partition, EqualDepthParams, PartitionMethod};

    fn two_row() -> (Dataset, PartitionSpec) {
        let d = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 1.0], vec!["a".into(), "b".into()]).unwrap();
        let p = PartitionSpec::new(vec![vec![0, 1]], 2, PartitionMethod::Natural).unwrap();
        (d, p)
    }

    #[test]
    fn mean_of_two_rows() {
        let (d, p) = two_row();
        let r = mean_representatives(&d, &p);
        assert_eq!(r.points[0].x, vec![2.0, 3.0]);
        assert_eq!(r.points[0].y, 0.5);
        assert_eq!(r.points[0].weight, 2.0);
    }

    #[test]
    fn even_median_averages_central_pair() {
        let (d, p) = two_row();
        let r = median_representatives(&d, &p);
        assert_eq!(r.points[0].x, vec![2.0, 3.0]);
    }

    #[test]
    fn odd_median_is_a_data_value() {
        let d = Dataset::with_intercept(&[5.0, 1.0, 9.0], 1, vec![1.0, 2.0, 3.0], &["x".into()]).unwrap();
        let p = PartitionSpec::new(vec![vec![0, 1, 2]], 3, PartitionMethod::Natural).unwrap();
        let r = median_representatives(&d, &p);
        assert_eq!(r.points[0].x, vec![1.0, 5.0]);
        assert_eq!(r.points[0].y, 2.0);
    }

    #[test]
    fn midpoint_clips_outer_cells() {
        let xs: Vec<f64> = (0..8).map(f64::from).collect();
        let d = Dataset::with_intercept(&xs, 1, vec![0.0; 8], &["x".into()]).unwrap();
        let part = equal_depth_partition(&d, &EqualDepthParams::new(2)).unwrap();
        let r = midpoint_representatives(&d, &part).unwrap();
        // cut at 3: cells [0,3] and [3,7]
        assert_eq!(r.points[0].x, vec![1.0, 1.5]);
        assert_eq!(r.points[1].x, vec![1.0, 5.0]);
        let (d2, p2) = two_row();
        assert!(matches!(midpoint_representatives(&d2, &p2), Err(Error::Config(_))));
    }

    #[test]
    fn export_header() {
        let (d, p) = two_row();
        let mut buf = Vec::new();
        mean_representatives(&d, &p).write(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "block,weight,ytilde,x1,x2,fallback\n0,2.0,0.5,2.0,3.0,none\n");
    }

    #[test]
    fn fallback_display() {
        let f = Fallback {
            y_mean: true,
            eta_mean: false,
            x_mean: true,
        };
        assert_eq!(f.to_string(), "y-mean+x-mean");
        assert!(!f.score_exact());
    }
}
