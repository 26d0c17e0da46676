//! Small dense symmetric positive-definite algebra for p x p normal equations.
//!
//! Matrices are row-major `Vec<f64>` of length p*p. The dimensions here are
//! the number of regression coefficients, so nothing is blocked or
//! vectorized.

use crate::error::{Error, Result};

/// Relative pivot below which a column is treated as linearly dependent on
/// the preceding ones.
const PIVOT_REL_TOL: f64 = 1e-13;
/// Estimated condition number above which a warning is logged.
pub const COND_WARN: f64 = 1e12;

/// Lower-triangular Cholesky factor `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Vec<f64>,
    p: usize,
}

impl Cholesky {
    /// Factor a symmetric matrix. Only the lower triangle of `a` is read.
    ///
    /// Fails with [`Error::Rank`] naming the first column whose pivot
    /// collapses relative to its diagonal entry.
    pub fn factor(a: &[f64], p: usize) -> Result<Self> {
        if a.len() != p * p {
            return Err(Error::Dimension(format!(
                "matrix has {} entries, expected {}x{}",
                a.len(),
                p,
                p
            )));
        }
        let mut l = vec![0.0; p * p];
        for j in 0..p {
            let ajj = a[j * p + j];
            let mut d = ajj;
            for k in 0..j {
                d -= l[j * p + k] * l[j * p + k];
            }
            if !(ajj > 0.0) || !(d > PIVOT_REL_TOL * ajj) || !d.is_finite() {
                return Err(Error::Rank {
                    column: j,
                    name: None,
                });
            }
            let ljj = d.sqrt();
            l[j * p + j] = ljj;
            for i in (j + 1)..p {
                let mut s = a[i * p + j];
                for k in 0..j {
                    s -= l[i * p + k] * l[j * p + k];
                }
                l[i * p + j] = s / ljj;
            }
        }
        Ok(Self { l, p })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// The factor `L`, row-major with zeros above the diagonal.
    pub fn lower(&self) -> &[f64] {
        &self.l
    }

    /// Cheap lower bound on the 2-norm condition number, from the spread of
    /// the squared pivots.
    pub fn condition_estimate(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for j in 0..self.p {
            let d = self.l[j * self.p + j].powi(2);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        hi / lo
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut z = b.to_vec();
        for i in 0..p {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[i * p + k] * z[k];
            }
            z[i] = s / self.l[i * p + i];
        }
        for i in (0..p).rev() {
            let mut s = z[i];
            for k in (i + 1)..p {
                s -= self.l[k * p + i] * z[k];
            }
            z[i] = s / self.l[i * p + i];
        }
        z
    }

    pub fn inverse(&self) -> Vec<f64> {
        let p = self.p;
        let mut inv = vec![0.0; p * p];
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..p {
                inv[i * p + j] = col[i];
            }
        }
        symmetrize(&mut inv, p);
        inv
    }
}

/// Factor and solve `A x = b`, logging a warning when the system is badly
/// conditioned.
pub fn spd_solve(a: &[f64], b: &[f64], p: usize) -> Result<Vec<f64>> {
    let chol = Cholesky::factor(a, p)?;
    let cond = chol.condition_estimate();
    if cond > COND_WARN {
        log::warn!("normal matrix condition estimate {cond:.3e} exceeds {COND_WARN:.0e}");
    }
    Ok(chol.solve(b))
}

/// Copy the lower triangle onto the upper one.
pub fn symmetrize(a: &mut [f64], p: usize) {
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (a[i * p + j] + a[j * p + i]);
            a[i * p + j] = v;
            a[j * p + i] = v;
        }
    }
}

/// `acc += w * x x^T`, lower triangle only.
#[inline]
pub fn add_outer_lower(acc: &mut [f64], x: &[f64], w: f64) {
    let p = x.len();
    for i in 0..p {
        let wxi = w * x[i];
        let row = &mut acc[i * p..i * p + i + 1];
        for (a, xj) in row.iter_mut().zip(&x[..=i]) {
            *a += wxi * xj;
        }
    }
}

/// Mirror the lower triangle into the upper one without averaging.
pub fn fill_upper(a: &mut [f64], p: usize) {
    for i in 0..p {
        for j in (i + 1)..p {
            a[i * p + j] = a[j * p + i];
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let x = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3).map(|i| dot(&a[i * 3..i * 3 + 3], &x)).collect();
        let got = spd_solve(&a, &b, 3).unwrap();
        for (g, e) in got.iter().zip(x) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = [2.0, 0.5, 0.5, 1.0];
        let inv = Cholesky::factor(&a, 2).unwrap().inverse();
        let prod = [
            a[0] * inv[0] + a[1] * inv[2],
            a[0] * inv[1] + a[1] * inv[3],
            a[2] * inv[0] + a[3] * inv[2],
            a[2] * inv[1] + a[3] * inv[3],
        ];
        for (v, e) in prod.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((v - e).abs() < 1e-14);
        }
    }

    #[test]
    fn reports_dependent_column() {
        // third column = first + second
        let x = [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 2.0]];
        let mut a = vec![0.0; 9];
        for row in &x {
            add_outer_lower(&mut a, row, 1.0);
        }
        match Cholesky::factor(&a, 3) {
            Err(Error::Rank { column, .. }) => assert_eq!(column, 2),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn zero_column_is_rank_error() {
        let a = [1.0, 0.0, 0.0, 0.0];
        assert!(matches!(
            Cholesky::factor(&a, 2),
            Err(Error::Rank { column: 1, .. })
        ));
    }
}
