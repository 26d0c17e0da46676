//! Score-matching representatives.
//!
//! At the current estimate each (sign-homogeneous) block is replaced by one
//! point `(n, x~, y~)` whose score equals the block's score. `y~` is a
//! `nu*eta`-weighted response average, `eta~` solves the scalar matching
//! equation `nu(t) (y~ - G(t)) t = mean nu_i (y_i - G_i) eta_i`, and `x~`
//! follows in closed form.

use super::{mean_representatives, BlockPart, Fallback, RepKind, RepPoint, RepresentativeSet};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{self, FitResult, GlmFamily, LinkEval, SolverParams};
use crate::linalg::dot;
use crate::partition::PartitionSpec;

pub const DEFAULT_TAU: f64 = 1e-12;
pub const DEFAULT_GRID_POINTS: usize = 64;
/// Relative size below which the `y~` and `x~` denominators count as zero.
const ZERO_REL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SmrParams {
    pub iterations: usize,
    pub solver: SolverParams,
    pub tau: f64,
    pub grid_points: usize,
    /// Start from these coefficients instead of the mean-representative fit.
    pub init_beta: Option<Vec<f64>>,
}

impl Default for SmrParams {
    fn default() -> Self {
        Self {
            iterations: 3,
            solver: SolverParams::default(),
            tau: DEFAULT_TAU,
            grid_points: DEFAULT_GRID_POINTS,
            init_beta: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmrFit {
    pub beta: Vec<f64>,
    /// Fit of the last iteration.
    pub fit: FitResult,
    /// Representatives of the last iteration.
    pub reps: RepresentativeSet,
    /// Fit on the mean representatives (absent when started from
    /// `init_beta`).
    pub mr_fit: Option<FitResult>,
    /// Coefficients after iteration 0, 1, ..., T.
    pub betas: Vec<Vec<f64>>,
    /// Representative sets of iterations 1..=T.
    pub history: Vec<RepresentativeSet>,
}

/// Local index sets: `{eta >= 0}` then `{eta < 0}` when the block has
/// predictors on both sides of `+-tau`, else the whole block.
pub fn split_block_by_sign(eta: &[f64], tau: f64) -> Vec<(BlockPart, Vec<usize>)> {
    let lo = eta.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo < -tau && hi > tau {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..eta.len()).partition(|&i| eta[i] >= 0.0);
        vec![(BlockPart::NonNegative, pos), (BlockPart::Negative, neg)]
    } else {
        vec![(BlockPart::Whole, (0..eta.len()).collect())]
    }
}

fn evals(eta: &[f64], family: &GlmFamily) -> Result<Vec<LinkEval>> {
    eta.iter().map(|&e| family.eval(e)).collect()
}

fn response_from(y: &[f64], eta: &[f64], ev: &[LinkEval]) -> (f64, bool) {
    let (mut num, mut den, mut scale) = (0.0, 0.0, 0.0);
    for ((yi, ei), e) in y.iter().zip(eta).zip(ev) {
        let w = e.nu * ei;
        num += w * yi;
        den += w;
        scale += w.abs();
    }
    if den.abs() < ZERO_REL * (1.0 + scale) {
        (y.iter().sum::<f64>() / y.len() as f64, true)
    } else {
        (num / den, false)
    }
}

/// `y~ = sum nu_i eta_i y_i / sum nu_i eta_i`, or the block mean (flagged)
/// when the denominator vanishes.
pub fn smr_response(y: &[f64], eta: &[f64], family: &GlmFamily) -> Result<(f64, bool)> {
    if y.is_empty() || y.len() != eta.len() {
        return Err(Error::Dimension("smr_response needs matching nonempty y and eta".into()));
    }
    Ok(response_from(y, eta, &evals(eta, family)?))
}

fn matching_target(y: &[f64], eta: &[f64], ev: &[LinkEval]) -> f64 {
    let s: f64 = y
        .iter()
        .zip(eta)
        .zip(ev)
        .map(|((yi, ei), e)| e.nu * (yi - e.g) * ei)
        .sum();
    s / y.len() as f64
}

fn nearest(roots: &mut [f64], center: f64) -> Option<f64> {
    roots.sort_by(f64::total_cmp);
    let mut best: Option<f64> = None;
    for &r in roots.iter() {
        if best.is_none_or(|b| (r - center).abs() < (b - center).abs()) {
            best = Some(r);
        }
    }
    best
}

fn quadratic_roots(ytilde: f64, target: f64, lo: f64, hi: f64) -> Vec<f64> {
    // t^2 - y~ t + target = 0
    let disc = ytilde * ytilde - 4.0 * target;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = 0.5 * (ytilde + ytilde.signum() * disc.sqrt());
    let mut roots = vec![q];
    if q != 0.0 {
        roots.push(target / q);
    }
    let slack = 1e-12 * (1.0 + lo.abs() + hi.abs());
    roots
        .into_iter()
        .filter(|r| *r >= lo - slack && *r <= hi + slack)
        .map(|r| r.clamp(lo, hi))
        .collect()
}

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    let mut fb = f(b);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    if fa.abs() <= fb.abs() {
        a
    } else {
        b
    }
}

fn solve_from(
    y: &[f64],
    eta: &[f64],
    ev: &[LinkEval],
    ytilde: f64,
    family: &GlmFamily,
    grid_points: usize,
) -> (f64, bool) {
    let lo = eta.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eta_bar = eta.iter().sum::<f64>() / eta.len() as f64;
    if lo == hi {
        return (lo, false);
    }
    let target = matching_target(y, eta, ev);
    if family.is_identity_linear() {
        if let Some(r) = nearest(&mut quadratic_roots(ytilde, target, lo, hi), eta_bar) {
            return (r, false);
        }
    }
    let f = |t: f64| match family.eval(t) {
        Ok(e) => e.nu * (ytilde - e.g) * t - target,
        Err(_) => f64::NAN,
    };
    let m = grid_points.max(2);
    let grid: Vec<f64> = (0..m)
        .map(|j| if j + 1 == m { hi } else { lo + (hi - lo) * j as f64 / (m - 1) as f64 })
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let mut roots = Vec::new();
    for j in 0..m {
        if vals[j] == 0.0 {
            roots.push(grid[j]);
        }
        if j + 1 < m && vals[j].is_finite() && vals[j + 1].is_finite() && vals[j] * vals[j + 1] < 0.0 {
            roots.push(bisect(&f, grid[j], grid[j + 1], vals[j]));
        }
    }
    match nearest(&mut roots, eta_bar) {
        Some(r) => (r, false),
        None => (eta_bar, true),
    }
}

/// Root of the scalar score-matching equation on `[min eta, max eta]`
/// nearest the mean predictor (smaller root on ties); `(eta_bar, true)` if
/// no root is bracketed.
pub fn solve_eta(y: &[f64], eta: &[f64], ytilde: f64, family: &GlmFamily) -> Result<(f64, bool)> {
    if y.is_empty() || y.len() != eta.len() {
        return Err(Error::Dimension("solve_eta needs matching nonempty y and eta".into()));
    }
    Ok(solve_from(y, eta, &evals(eta, family)?, ytilde, family, DEFAULT_GRID_POINTS))
}

fn predictor_from(
    x: &[&[f64]],
    y: &[f64],
    ev: &[LinkEval],
    ytilde: f64,
    at: &LinkEval,
) -> (Vec<f64>, bool) {
    let p = x[0].len();
    let n = y.len() as f64;
    let mut num = vec![0.0; p];
    let mut scale = 0.0;
    for ((xi, yi), e) in x.iter().zip(y).zip(ev) {
        let r = e.nu * (yi - e.g);
        scale += r.abs();
        for (a, v) in num.iter_mut().zip(*xi) {
            *a += r * v;
        }
    }
    let d = at.nu * (ytilde - at.g);
    if d.abs() < ZERO_REL * (1.0 + scale / n) {
        let mut mean = vec![0.0; p];
        for xi in x {
            for (a, v) in mean.iter_mut().zip(*xi) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        return (mean, true);
    }
    let inv = 1.0 / (n * d);
    num.iter_mut().for_each(|v| *v *= inv);
    (num, false)
}

/// `x~ = sum nu_i (y_i - G_i) X_i / (n nu(eta~) (y~ - G(eta~)))`, or the
/// block mean (flagged) when the denominator vanishes.
pub fn smr_predictor(
    x: &[&[f64]],
    y: &[f64],
    eta: &[f64],
    ytilde: f64,
    eta_tilde: f64,
    family: &GlmFamily,
) -> Result<(Vec<f64>, bool)> {
    if x.is_empty() || x.len() != y.len() || y.len() != eta.len() {
        return Err(Error::Dimension("smr_predictor needs matching nonempty inputs".into()));
    }
    let at = family.eval(eta_tilde)?;
    Ok(predictor_from(x, y, &evals(eta, family)?, ytilde, &at))
}

fn block_points(
    data: &Dataset,
    block: usize,
    rows: &[usize],
    family: &GlmFamily,
    beta: &[f64],
    params: &SmrParams,
    out: &mut Vec<RepPoint>,
) -> Result<()> {
    let eta: Vec<f64> = rows.iter().map(|&i| dot(data.row(i), beta)).collect();
    let ev = evals(&eta, family)?;
    for (part, local) in split_block_by_sign(&eta, params.tau) {
        if local.len() == 1 {
            let i = rows[local[0]];
            out.push(RepPoint {
                block,
                part,
                weight: 1.0,
                x: data.row(i).to_vec(),
                y: data.y()[i],
                eta_tilde: Some(eta[local[0]]),
                fallback: Fallback::default(),
            });
            continue;
        }
        let x: Vec<&[f64]> = local.iter().map(|&l| data.row(rows[l])).collect();
        let y: Vec<f64> = local.iter().map(|&l| data.y()[rows[l]]).collect();
        let e: Vec<f64> = local.iter().map(|&l| eta[l]).collect();
        let v: Vec<LinkEval> = local.iter().map(|&l| ev[l]).collect();
        let (ytilde, y_mean) = response_from(&y, &e, &v);
        let (eta_tilde, eta_mean) = solve_from(&y, &e, &v, ytilde, family, params.grid_points);
        let at = family.eval(eta_tilde)?;
        let (xt, x_mean) = predictor_from(&x, &y, &v, ytilde, &at);
        out.push(RepPoint {
            block,
            part,
            weight: local.len() as f64,
            x: xt,
            y: ytilde,
            eta_tilde: Some(eta_tilde),
            fallback: Fallback { y_mean, eta_mean, x_mean },
        });
    }
    Ok(())
}

/// One SMR construction pass at `beta`. Points come out in block order,
/// the non-negative half of a split block first.
pub fn smr_representatives(
    data: &Dataset,
    part: &PartitionSpec,
    family: &GlmFamily,
    beta: &[f64],
    params: &SmrParams,
) -> Result<RepresentativeSet> {
    if beta.len() != data.p() {
        return Err(Error::Dimension(format!("beta has length {}, data has p={}", beta.len(), data.p())));
    }
    let mut points = Vec::with_capacity(part.k());
    for (k, rows) in part.blocks().iter().enumerate() {
        block_points(data, k, rows, family, beta, params, &mut points)?;
    }
    Ok(RepresentativeSet {
        kind: RepKind::Smr,
        p: data.p(),
        points,
        iteration: 0,
        split: Some((beta.to_vec(), params.tau)),
    })
}

/// Iteration 0 fits the mean representatives (or takes `init_beta`); each
/// of the `T` iterations rebuilds the score-matching representatives at the
/// current estimate and refits, warm-started.
pub fn smr_fit(data: &Dataset, part: &PartitionSpec, family: &GlmFamily, params: &SmrParams) -> Result<SmrFit> {
    let named = |e: Error| e.with_column_name(data.names());
    let (mut beta, mut fit, mr_fit) = match &params.init_beta {
        Some(b) => {
            if params.iterations == 0 {
                return Err(Error::Config("SMR started from given coefficients needs T >= 1".into()));
            }
            (b.clone(), None, None)
        }
        None => {
            let mr = mean_representatives(data, part);
            let wd = mr.to_weighted()?;
            let init = glm::initial_beta(&wd, family);
            let f = glm::fit(&wd, family, &init, &params.solver).map_err(named)?;
            (f.beta.clone(), Some(f.clone()), Some(f))
        }
    };
    let mut betas = vec![beta.clone()];
    let mut history = Vec::with_capacity(params.iterations);
    for t in 1..=params.iterations {
        let mut reps = smr_representatives(data, part, family, &beta, params)?;
        reps.iteration = t;
        let wd = reps.to_weighted()?;
        let f = glm::fit(&wd, family, &beta, &params.solver).map_err(named)?;
        log::debug!("smr iteration {t}: {} points, converged={}", reps.len(), f.converged);
        beta = f.beta.clone();
        betas.push(beta.clone());
        fit = Some(f);
        history.push(reps);
    }
    let reps = match history.last() {
        Some(r) => r.clone(),
        None => mean_representatives(data, part),
    };
    Ok(SmrFit {
        beta,
        fit: fit.expect("fit from iteration 0 or a later iteration"),
        reps,
        mr_fit,
        betas,
        history,
    })
}
