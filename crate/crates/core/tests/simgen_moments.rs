//! Marginal moments of every covariate design against 5-sigma Monte-Carlo
//! bounds.

use repfit::simgen::{gen_covariates, CovariateDist, ResponseModel, SimConfig};
use statrs::distribution::{ContinuousCDF, StudentsT};

const N: usize = 100_000;
const D: usize = 3;

struct Marginal {
    mean: f64,
    var: f64,
    /// Fourth central moment; `None` when infinite.
    m4: Option<f64>,
    support: (f64, f64),
}

fn expected(dist: CovariateDist, j: usize) -> Marginal {
    let normal = |mean: f64, var: f64| Marginal {
        mean,
        var,
        m4: Some(3.0 * var * var),
        support: (f64::NEG_INFINITY, f64::INFINITY),
    };
    match dist {
        CovariateDist::MzNormal => normal(0.0, 1.0),
        CovariateDist::NzNormal => normal(1.5, 1.0),
        CovariateDist::UeNormal => normal(0.0, ((j + 1) * (j + 1)) as f64),
        // +-1 shift plus a unit normal: E(S + Z)^4 = 1 + 6 + 3
        CovariateDist::MixNormal => Marginal {
            mean: 0.0,
            var: 2.0,
            m4: Some(10.0),
            support: (f64::NEG_INFINITY, f64::INFINITY),
        },
        // t with 3 degrees of freedom scaled by 1/10
        CovariateDist::T3 => Marginal {
            mean: 0.0,
            var: 0.03,
            m4: None,
            support: (f64::NEG_INFINITY, f64::INFINITY),
        },
        CovariateDist::Exp => Marginal {
            mean: 0.5,
            var: 0.25,
            m4: Some(9.0 / 16.0),
            support: (0.0, f64::INFINITY),
        },
        CovariateDist::Beta => Marginal {
            mean: 0.5,
            var: 0.125,
            m4: Some(3.0 / 128.0),
            support: (0.0, 1.0),
        },
    }
}

#[test]
fn covariate_moments_within_five_sigma() {
    let n = N as f64;
    for dist in CovariateDist::ALL {
        let cfg = SimConfig::new(dist, ResponseModel::Linear, N, 99).with_d(D);
        let x = gen_covariates(&cfg).unwrap();
        for j in 0..D {
            let col: Vec<f64> = (0..N).map(|i| x[i * D + j]).collect();
            let e = expected(dist, j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(
                (mean - e.mean).abs() <= 5.0 * (e.var / n).sqrt(),
                "{dist} column {j}: mean {mean} vs {}",
                e.mean
            );
            if let Some(m4) = e.m4 {
                let se = ((m4 - e.var * e.var) / n).sqrt();
                assert!((var - e.var).abs() <= 5.0 * se, "{dist} column {j}: variance {var} vs {}", e.var);
            }
            assert!(col.iter().all(|v| *v >= e.support.0 && *v <= e.support.1), "{dist} column {j} left its support");
        }
    }
}

/// The t3 design has no finite fourth moment, so check its spread by a
/// quantile instead.
#[test]
fn t3_upper_quartile() {
    let cfg = SimConfig::new(CovariateDist::T3, ResponseModel::Linear, N, 7).with_d(D);
    let x = gen_covariates(&cfg).unwrap();
    let q = StudentsT::new(0.0, 1.0, 3.0).unwrap().inverse_cdf(0.75) / 10.0;
    for j in 0..D {
        let frac = (0..N).filter(|&i| x[i * D + j] <= q).count() as f64 / N as f64;
        assert!((frac - 0.75).abs() <= 5.0 * (0.75f64 * 0.25 / N as f64).sqrt(), "column {j}: {frac}");
    }
}

/// Normal-type designs share the 0.5 off-diagonal covariance.
#[test]
fn normal_designs_are_correlated() {
    let n = N as f64;
    for dist in [CovariateDist::MzNormal, CovariateDist::NzNormal] {
        let cfg = SimConfig::new(dist, ResponseModel::Linear, N, 3).with_d(2);
        let x = gen_covariates(&cfg).unwrap();
        let shift = if dist == CovariateDist::NzNormal { 1.5 } else { 0.0 };
        let cov = (0..N).map(|i| (x[2 * i] - shift) * (x[2 * i + 1] - shift)).sum::<f64>() / n;
        // Var(X1 X2) = 1 + rho^2 for unit-variance normals
        assert!((cov - 0.5).abs() <= 5.0 * (1.25 / n).sqrt(), "{dist}: {cov}");
    }
}
