//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's numerical code.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repfit::glm::{Family, Link};
use repfit::{Dataset, GlmFamily};
use statrs::distribution::{ContinuousCDF, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mean_of(link: Link, eta: f64) -> f64 {
    match link {
        Link::Identity => eta,
        Link::Logit => 1.0 / (1.0 + (-eta).exp()),
        Link::Probit => Normal::standard().cdf(eta),
        Link::Cloglog => 1.0 - (-eta.exp()).exp(),
        Link::Loglog => (-eta.exp()).exp(),
        Link::Cauchit => 0.5 + eta.atan() / PI,
        Link::Log => eta.exp(),
        Link::Reciprocal => 1.0 / eta,
        Link::InverseSquared => 1.0 / eta.sqrt(),
    }
}

/// Log density up to terms free of the mean, unit dispersion.
pub fn log_density(family: Family, y: f64, mu: f64) -> f64 {
    match family {
        Family::Normal => -(y - mu).powi(2) / 2.0,
        Family::Bernoulli => {
            if y > 0.5 {
                mu.ln()
            } else {
                (1.0 - mu).ln()
            }
        }
        Family::Poisson => y * mu.ln() - mu,
        Family::Gamma => -y / mu - mu.ln(),
        Family::InverseGaussian => -y / (2.0 * mu * mu) + 1.0 / mu,
    }
}

pub fn loglik(data: &Dataset, fam: &GlmFamily, beta: &[f64]) -> f64 {
    (0..data.n())
        .map(|i| {
            let eta: f64 = data.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            log_density(fam.family, data.y()[i], mean_of(fam.link, eta))
        })
        .sum()
}

/// Five-point central differences.
pub fn numeric_gradient(f: &dyn Fn(&[f64]) -> f64, at: &[f64]) -> Vec<f64> {
    (0..at.len())
        .map(|j| {
            let h = 1e-3 * (1.0 + at[j].abs());
            let mut b = at.to_vec();
            let mut ev = |d: f64| {
                b[j] = at[j] + d;
                f(&b)
            };
            (ev(-2.0 * h) - 8.0 * ev(-h) + 8.0 * ev(h) - ev(2.0 * h)) / (12.0 * h)
        })
        .collect()
}

/// Maximise `f` by Levenberg-damped Newton steps on finite-difference
/// derivatives.
pub fn damped_newton(f: &dyn Fn(&[f64]) -> f64, start: &[f64]) -> Vec<f64> {
    let p = start.len();
    let mut beta = start.to_vec();
    let mut value = f(&beta);
    for _ in 0..200 {
        let g = numeric_gradient(f, &beta);
        let mut hess = DMatrix::zeros(p, p);
        for j in 0..p {
            let h = 1e-4 * (1.0 + beta[j].abs());
            let mut up = beta.clone();
            up[j] += h;
            let mut dn = beta.clone();
            dn[j] -= h;
            let (gu, gd) = (numeric_gradient(f, &up), numeric_gradient(f, &dn));
            for i in 0..p {
                hess[(i, j)] = (gu[i] - gd[i]) / (2.0 * h);
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let gvec = DVector::from_vec(g.clone());
        let mut lambda = 0.0;
        let mut moved = false;
        for _ in 0..60 {
            let m = -&hess + DMatrix::identity(p, p) * lambda;
            if let Some(ch) = m.cholesky() {
                let step = ch.solve(&gvec);
                let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
                let v = f(&cand);
                if v.is_finite() && v >= value - 1e-12 * value.abs() {
                    let small = step.amax() < 1e-13 * (1.0 + beta.iter().fold(0.0f64, |a, b| a.max(b.abs())));
                    beta = cand;
                    value = v;
                    moved = !small;
                    break;
                }
            }
            lambda = if lambda == 0.0 { 1e-6 * (1.0 + hess.amax()) } else { lambda * 4.0 };
        }
        if !moved {
            break;
        }
    }
    beta
}

/// Every sign change of `f` on a fine grid over `[lo, hi]`, each bisected
/// to width `tol`; the root nearest `center` (smaller on ties).
pub fn nearest_root(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, center: f64, tol: f64) -> Option<f64> {
    const CELLS: usize = 8192;
    let pts: Vec<f64> = (0..=CELLS).map(|j| lo + (hi - lo) * j as f64 / CELLS as f64).collect();
    let vals: Vec<f64> = pts.iter().map(|&t| f(t)).collect();
    let mut roots = Vec::new();
    for j in 0..CELLS {
        if vals[j] == 0.0 {
            roots.push(pts[j]);
        } else if vals[j] * vals[j + 1] < 0.0 {
            let (mut a, mut b, fa) = (pts[j], pts[j + 1], vals[j]);
            while b - a > tol {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if (f(m) < 0.0) == (fa < 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    if vals[CELLS] == 0.0 {
        roots.push(hi);
    }
    roots.into_iter().min_by(|a, b| {
        (a - center)
            .abs()
            .total_cmp(&(b - center).abs())
            .then(a.total_cmp(b))
    })
}

/// Uniform covariates on `[-1, 1]` with an intercept column.
pub fn uniform_design(r: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<f64> {
    (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

pub fn sample_response(r: &mut ChaCha8Rng, fam: &GlmFamily, eta: f64) -> f64 {
    let mu = mean_of(fam.link, eta);
    match fam.family {
        Family::Normal => mu + r.sample::<f64, _>(rand_distr::StandardNormal),
        Family::Bernoulli => f64::from(u8::from(r.random::<f64>() < mu)),
        Family::Poisson => r.sample::<f64, _>(rand_distr::Poisson::new(mu).unwrap()),
        Family::Gamma => r.sample::<f64, _>(rand_distr::Gamma::new(1.0, mu).unwrap()),
        Family::InverseGaussian => r.sample::<f64, _>(rand_distr::InverseGaussian::new(mu, 1.0).unwrap()),
    }
}

/// Dataset with an intercept, `d` uniform covariates and responses drawn
/// from `fam` at `beta`.
pub fn glm_dataset(r: &mut ChaCha8Rng, fam: &GlmFamily, n: usize, beta: &[f64]) -> Dataset {
    let d = beta.len() - 1;
    let cov = uniform_design(r, n, d);
    let y = (0..n)
        .map(|i| {
            let eta = beta[0] + (0..d).map(|j| beta[j + 1] * cov[i * d + j]).sum::<f64>();
            sample_response(r, fam, eta)
        })
        .collect();
    Dataset::with_intercept(&cov, d, y, &names(d)).unwrap()
}

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
