use super::PartitionSpec;
use crate::data::Dataset;
use crate::linalg::dist2;
use crate::representatives::RepresentativeSet;

/// Largest block whose diameter is computed from all pairs.
pub const EXACT_DIAMETER_MAX: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGeometry {
    /// Largest block diameter.
    pub delta: f64,
    /// Largest distance from a row to its representative, if representatives
    /// were supplied.
    pub delta_tilde: Option<f64>,
    pub block_deltas: Vec<f64>,
    /// `sum_k n_k delta_k^2`.
    pub bound_statistic: f64,
    /// False when some block diameter is the centroid-based upper estimate.
    pub exact: bool,
}

/// Exact diameter of the rows in `rows`.
pub fn diameter_exact(data: &Dataset, rows: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for (a, &i) in rows.iter().enumerate() {
        let xi = data.row(i);
        for &j in &rows[a + 1..] {
            best = best.max(dist2(xi, data.row(j)));
        }
    }
    best.sqrt()
}

/// Twice the largest distance to the centroid; lies in `[delta, 2 delta]`.
fn diameter_upper(data: &Dataset, rows: &[usize]) -> f64 {
    let p = data.p();
    let mut c = vec![0.0; p];
    for &i in rows {
        for (a, v) in c.iter_mut().zip(data.row(i)) {
            *a += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= rows.len() as f64);
    let r = rows.iter().map(|&i| dist2(data.row(i), &c)).fold(0.0f64, f64::max);
    2.0 * r.sqrt()
}

pub fn block_geometry(data: &Dataset, part: &PartitionSpec, reps: Option<&RepresentativeSet>) -> BlockGeometry {
    let mut exact = true;
    let block_deltas: Vec<f64> = part
        .blocks()
        .iter()
        .map(|rows| {
            if rows.len() <= EXACT_DIAMETER_MAX {
                diameter_exact(data, rows)
            } else {
                exact = false;
                diameter_upper(data, rows)
            }
        })
        .collect();
    let delta = block_deltas.iter().copied().fold(0.0, f64::max);
    let bound_statistic = block_deltas
        .iter()
        .zip(part.blocks())
        .map(|(d, b)| b.len() as f64 * d * d)
        .sum();
    let delta_tilde = reps.map(|reps| {
        (0..reps.len())
            .map(|j| {
                let xt = &reps.points[j].x;
                reps.point_rows(j, data, part)
                    .iter()
                    .map(|&i| dist2(data.row(i), xt))
                    .fold(0.0f64, f64::max)
                    .sqrt()
            })
            .fold(0.0, f64::max)
    });
    BlockGeometry {
        delta,
        delta_tilde,
        block_deltas,
        bound_statistic,
        exact,
    }
}
