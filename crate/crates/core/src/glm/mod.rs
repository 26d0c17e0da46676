//! GLM score evaluation and the two solvers: Fisher scoring on (weighted)
//! observations and the closed-form weighted least squares fit.

pub mod family;

pub use family::{Family, GlmFamily, Link, LinkEval};

use crate::data::Observations;
use crate::error::{Error, Result};
use crate::linalg::{add_outer_lower, dot, fill_upper, norm_inf, Cholesky, COND_WARN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Infinity-norm bound on the final coefficient update.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the score at `beta`.
    pub score_norm: f64,
    /// Expected information `sum w G'^2/V x x^T` at `beta` (unit
    /// dispersion), row-major p x p.
    pub information: Vec<f64>,
}

impl FitResult {
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Inverse information, i.e. the asymptotic covariance up to the
    /// dispersion factor.
    pub fn covariance(&self) -> Result<Vec<f64>> {
        Ok(Cholesky::factor(&self.information, self.p())?.inverse())
    }
}

fn check_dims<D: Observations + ?Sized>(data: &D, beta: &[f64]) -> Result<()> {
    if beta.len() != data.dim() {
        return Err(Error::Dimension(format!(
            "beta has length {}, data has {} predictors",
            beta.len(),
            data.dim()
        )));
    }
    Ok(())
}

/// `sum_i w_i (y_i - G(eta_i)) nu(eta_i) X_i`, accumulated in row order.
pub fn score<D: Observations + ?Sized>(data: &D, family: &GlmFamily, beta: &[f64]) -> Result<Vec<f64>> {
    check_dims(data, beta)?;
    let mut s = vec![0.0; beta.len()];
    for i in 0..data.len() {
        let x = data.x_row(i);
        let e = family.eval(dot(x, beta))?;
        let c = data.weight(i) * (data.response(i) - e.g) * e.nu;
        for (sj, xj) in s.iter_mut().zip(x) {
            *sj += c * xj;
        }
    }
    Ok(s)
}

/// Weighted log-likelihood with unit dispersion, dropping terms free of
/// `beta`. Its gradient times [`GlmFamily::score_scale`] is [`score`].
pub fn log_likelihood<D: Observations + ?Sized>(data: &D, family: &GlmFamily, beta: &[f64]) -> Result<f64> {
    check_dims(data, beta)?;
    let mut ll = 0.0;
    for i in 0..data.len() {
        let mu = family.eval(dot(data.x_row(i), beta))?.g;
        ll += data.weight(i) * family.family.log_density(data.response(i), mu);
    }
    Ok(ll)
}

/// One pass over the data at `beta`: information matrix, the exact score
/// (gradient direction) used for the Newton step, and the normalised score
/// norm.
struct Pass {
    info: Vec<f64>,
    grad: Vec<f64>,
    score_norm: f64,
}

fn scoring_pass<D: Observations + ?Sized>(data: &D, family: &GlmFamily, beta: &[f64]) -> Result<Pass> {
    let p = beta.len();
    let mut info = vec![0.0; p * p];
    let mut grad = vec![0.0; p];
    let mut s = vec![0.0; p];
    let canonical_c = if family.canonical() {
        1.0 / family.score_scale()
    } else {
        1.0
    };
    for i in 0..data.len() {
        let x = data.x_row(i);
        let w = data.weight(i);
        let e = family.eval(dot(x, beta))?;
        let r = w * (data.response(i) - e.g);
        let nu_exact = e.nu * canonical_c;
        for j in 0..p {
            s[j] += r * e.nu * x[j];
            grad[j] += r * nu_exact * x[j];
        }
        add_outer_lower(&mut info, x, w * e.info);
    }
    fill_upper(&mut info, p);
    Ok(Pass {
        info,
        grad,
        score_norm: norm_inf(&s),
    })
}

/// Fisher scoring (IRLS) started at `init`.
///
/// Weights are frequency weights and responses may be fractional, so the
/// representative data `(n_k, x_k, y_k)` with `y_k` in `[0, 1]` is a valid
/// Bernoulli input. Non-convergence is reported through
/// [`FitResult::converged`], not as an error.
pub fn fisher_scoring_fit<D: Observations + ?Sized>(
    data: &D,
    family: &GlmFamily,
    init: &[f64],
    params: &SolverParams,
) -> Result<FitResult> {
    check_dims(data, init)?;
    if data.is_empty() {
        return Err(Error::Data("no observations to fit".into()));
    }
    let p = init.len();
    let mut beta = init.to_vec();
    let mut pass = scoring_pass(data, family, &beta)?;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let score_ok = pass.score_norm <= params.tol * (1.0 + norm_inf(&beta));
        if last_step <= params.tol && score_ok {
            return Ok(FitResult {
                beta,
                iterations,
                converged: true,
                score_norm: pass.score_norm,
                information: pass.info,
            });
        }
        if iterations >= params.max_iter {
            return Ok(FitResult {
                beta,
                iterations,
                converged: false,
                score_norm: pass.score_norm,
                information: pass.info,
            });
        }
        let chol = Cholesky::factor(&pass.info, p)?;
        let cond = chol.condition_estimate();
        if cond > COND_WARN {
            log::warn!("information matrix condition estimate {cond:.3e} at iteration {iterations}");
        }
        let delta = chol.solve(&pass.grad);
        if delta.iter().any(|d| !d.is_finite()) {
            return Ok(FitResult {
                beta,
                iterations,
                converged: false,
                score_norm: pass.score_norm,
                information: pass.info,
            });
        }
        // Halve the step while the new linear predictors leave the link's
        // domain (reciprocal / inverse-squared / overflowing exp).
        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + scale * d).collect();
            match scoring_pass(data, family, &cand) {
                Ok(ps) => {
                    next = Some((cand, ps));
                    break;
                }
                Err(Error::Domain(_)) => scale *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((cand, ps)) = next else {
            return Err(Error::Domain(
                "Fisher scoring step could not be kept inside the link domain".into(),
            ));
        };
        last_step = norm_inf(&delta) * scale;
        beta = cand;
        pass = ps;
        iterations += 1;
    }
}

/// Closed-form weighted least squares
/// `beta = (sum w x x^T)^{-1} sum w x y`; the information is the normal
/// matrix itself (noise variance left to the caller).
pub fn wls_fit<D: Observations + ?Sized>(data: &D) -> Result<FitResult> {
    let p = data.dim();
    if data.is_empty() {
        return Err(Error::Data("no observations to fit".into()));
    }
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for i in 0..data.len() {
        let x = data.x_row(i);
        let w = data.weight(i);
        add_outer_lower(&mut a, x, w);
        let wy = w * data.response(i);
        for (bj, xj) in b.iter_mut().zip(x) {
            *bj += wy * xj;
        }
    }
    fill_upper(&mut a, p);
    let chol = Cholesky::factor(&a, p)?;
    let cond = chol.condition_estimate();
    if cond > COND_WARN {
        log::warn!("normal matrix condition estimate {cond:.3e}");
    }
    let beta = chol.solve(&b);
    let mut s = vec![0.0; p];
    for i in 0..data.len() {
        let x = data.x_row(i);
        let r = data.weight(i) * (data.response(i) - dot(x, &beta));
        for (sj, xj) in s.iter_mut().zip(x) {
            *sj += r * xj;
        }
    }
    Ok(FitResult {
        beta,
        iterations: 1,
        converged: true,
        score_norm: norm_inf(&s),
        information: a,
    })
}

/// Starting coefficients: zero except on an all-ones column, which gets
/// the link of the weighted mean response pulled into the mean-space
/// interior.
pub fn initial_beta<D: Observations + ?Sized>(data: &D, family: &GlmFamily) -> Vec<f64> {
    let p = data.dim();
    let mut beta = vec![0.0; p];
    let intercept = (0..p).find(|&j| (0..data.len()).all(|i| data.x_row(i)[j] == 1.0));
    let Some(j) = intercept else {
        return beta;
    };
    let tw = data.total_weight();
    if !(tw > 0.0) {
        return beta;
    }
    let ybar = (0..data.len()).map(|i| data.weight(i) * data.response(i)).sum::<f64>() / tw;
    let mu = match family.family {
        Family::Normal => ybar,
        Family::Bernoulli => ybar.clamp(0.01, 0.99),
        Family::Poisson | Family::Gamma | Family::InverseGaussian => ybar.max(0.1),
    };
    let eta = family.link.link(mu);
    if eta.is_finite() && family.eval(eta).is_ok() {
        beta[j] = eta;
    }
    beta
}

/// Dispatch: closed form for the normal/identity model, Fisher scoring
/// otherwise.
pub fn fit<D: Observations + ?Sized>(
    data: &D,
    family: &GlmFamily,
    init: &[f64],
    params: &SolverParams,
) -> Result<FitResult> {
    if family.is_identity_linear() {
        wls_fit(data)
    } else {
        fisher_scoring_fit(data, family, init, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::WeightedData;

    fn wd(rows: &[(f64, Vec<f64>, f64)]) -> WeightedData {
        WeightedData::from_rows(rows).unwrap()
    }

    #[test]
    fn single_row_logit_score() {
        let d = wd(&[(1.0, vec![1.0], 1.0)]);
        let s = score(&d, &GlmFamily::logistic(), &[0.0]).unwrap();
        assert_eq!(s, vec![0.5]);
    }

    #[test]
    fn balanced_logit_fits_zero() {
        let d = wd(&[(1.0, vec![1.0], 0.0), (1.0, vec![1.0], 1.0)]);
        let fit = fisher_scoring_fit(&d, &GlmFamily::logistic(), &[0.3], &SolverParams::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.beta[0].abs() < 1e-12);
    }

    #[test]
    fn exactly_determined_wls() {
        let d = wd(&[(1.0, vec![1.0, 0.0], 2.0), (1.0, vec![0.0, 1.0], 3.0)]);
        let fit = wls_fit(&d).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-14);
        assert!((fit.beta[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn wls_rank_error_names_column() {
        let d = wd(&[(1.0, vec![1.0, 2.0], 2.0), (2.0, vec![2.0, 4.0], 3.0)]);
        assert!(matches!(wls_fit(&d), Err(Error::Rank { column: 1, .. })));
    }

    #[test]
    fn singular_information_is_rank_error() {
        let d = wd(&[(1.0, vec![1.0, 1.0], 0.0), (1.0, vec![1.0, 1.0], 1.0)]);
        let r = fisher_scoring_fit(&d, &GlmFamily::logistic(), &[0.0, 0.0], &SolverParams::default());
        assert!(matches!(r, Err(Error::Rank { .. })));
    }

    #[test]
    fn identity_link_scoring_equals_wls() {
        let d = wd(&[
            (1.0, vec![1.0, 0.3], 1.2),
            (2.5, vec![1.0, -1.1], 0.1),
            (0.7, vec![1.0, 2.0], 3.3),
            (1.3, vec![1.0, 0.9], 2.0),
        ]);
        let a = wls_fit(&d).unwrap();
        let b = fisher_scoring_fit(&d, &GlmFamily::linear(), &[5.0, -3.0], &SolverParams::default()).unwrap();
        assert!(b.converged);
        for (x, y) in a.beta.iter().zip(&b.beta) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn separated_data_does_not_converge() {
        let d = wd(&[(1.0, vec![1.0, -1.0], 0.0), (1.0, vec![1.0, 1.0], 1.0)]);
        let fit = fisher_scoring_fit(&d, &GlmFamily::logistic(), &[0.0, 0.0], &SolverParams::default()).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 25);
    }

    #[test]
    fn gamma_fit_keeps_eta_positive() {
        let d = wd(&[
            (1.0, vec![1.0, 0.0], 2.0),
            (1.0, vec![1.0, 1.0], 0.5),
            (1.0, vec![1.0, 2.0], 0.4),
            (1.0, vec![1.0, 3.0], 0.2),
        ]);
        let fam = GlmFamily::new(Family::Gamma, Link::Reciprocal);
        let fit = fisher_scoring_fit(&d, &fam, &[1.0, 0.0], &SolverParams::default()).unwrap();
        assert!(fit.converged);
        let s = score(&d, &fam, &fit.beta).unwrap();
        assert!(norm_inf(&s) < 1e-8);
    }
}
