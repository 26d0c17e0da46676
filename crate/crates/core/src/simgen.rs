//! Synthetic designs and responses.
//!
//! Every row draws from its own ChaCha stream keyed by (seed, purpose, row),
//! so output is reproducible and independent of generation order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Exp, Poisson, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{GlmFamily, Link};
use crate::linalg::{dot, Cholesky};
use crate::partition::discretize_within;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateDist {
    MzNormal,
    NzNormal,
    UeNormal,
    MixNormal,
    T3,
    Exp,
    Beta,
}

impl CovariateDist {
    pub const ALL: [CovariateDist; 7] = [
        CovariateDist::MzNormal,
        CovariateDist::NzNormal,
        CovariateDist::UeNormal,
        CovariateDist::MixNormal,
        CovariateDist::T3,
        CovariateDist::Exp,
        CovariateDist::Beta,
    ];
}

impl fmt::Display for CovariateDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovariateDist::MzNormal => "mzNormal",
            CovariateDist::NzNormal => "nzNormal",
            CovariateDist::UeNormal => "ueNormal",
            CovariateDist::MixNormal => "mixNormal",
            CovariateDist::T3 => "T3",
            CovariateDist::Exp => "EXP",
            CovariateDist::Beta => "BETA",
        })
    }
}

impl FromStr for CovariateDist {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        CovariateDist::ALL
            .into_iter()
            .find(|d| d.to_string().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Config(format!("unknown covariate distribution `{t}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseModel {
    Linear,
    Logit,
    Cloglog,
    Poisson,
    LogitInteractions,
}

impl ResponseModel {
    pub fn family(self) -> GlmFamily {
        match self {
            ResponseModel::Linear => GlmFamily::linear(),
            ResponseModel::Logit | ResponseModel::LogitInteractions => GlmFamily::logistic(),
            ResponseModel::Cloglog => GlmFamily::cloglog(),
            ResponseModel::Poisson => GlmFamily::poisson(),
        }
    }
}

impl fmt::Display for ResponseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResponseModel::Linear => "linear",
            ResponseModel::Logit => "logit",
            ResponseModel::Cloglog => "cloglog",
            ResponseModel::Poisson => "poisson",
            ResponseModel::LogitInteractions => "logit-interactions",
        })
    }
}

impl FromStr for ResponseModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "linear" => ResponseModel::Linear,
            "logit" | "logistic" => ResponseModel::Logit,
            "cloglog" => ResponseModel::Cloglog,
            "poisson" => ResponseModel::Poisson,
            "logit-interactions" => ResponseModel::LogitInteractions,
            other => return Err(Error::Config(format!("unknown response model `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dist: CovariateDist,
    pub model: ResponseModel,
    pub n: usize,
    /// Covariates before any expansion (3 for the interaction model).
    pub d: usize,
    /// True coefficients over the predictor vector, intercept first.
    pub beta: Vec<f64>,
    /// Noise standard deviation of the linear model.
    pub sigma: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Default design: d = 7 (3 with interactions), intercept 0, every other
    /// coefficient 0.5, sigma = 1.
    pub fn new(dist: CovariateDist, model: ResponseModel, n: usize, seed: u64) -> Self {
        let d = if model == ResponseModel::LogitInteractions { 3 } else { 7 };
        let p = predictor_dim(model, d);
        let mut beta = vec![0.5; p];
        beta[0] = 0.0;
        Self {
            dist,
            model,
            n,
            d,
            beta,
            sigma: 1.0,
            seed,
        }
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        let p = predictor_dim(self.model, d);
        self.beta = vec![0.5; p];
        self.beta[0] = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config("simulation needs N >= 1 and d >= 1".into()));
        }
        if self.model == ResponseModel::LogitInteractions && self.d != 3 {
            return Err(Error::Config("the interaction model needs d = 3".into()));
        }
        let p = predictor_dim(self.model, self.d);
        if self.beta.len() != p {
            return Err(Error::Config(format!("beta has length {}, expected {p}", self.beta.len())));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config("sigma must be non-negative".into()));
        }
        Ok(())
    }
}

fn predictor_dim(model: ResponseModel, d: usize) -> usize {
    if model == ResponseModel::LogitInteractions {
        8
    } else {
        d + 1
    }
}

const COVARIATE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const RESPONSE_SALT: u64 = 0xc2b2_ae3d_27d4_eb4f;
const AIRLINE_SALT: u64 = 0x1656_67b1_9e37_79f9;

fn row_rng(seed: u64, salt: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(row as u64);
    rng
}

/// Unit diagonal, 0.5 off the diagonal; `unequal` puts `i^2` on the
/// diagonal instead.
pub fn covariance(d: usize, unequal: bool) -> Vec<f64> {
    let mut s = vec![0.5; d * d];
    for i in 0..d {
        s[i * d + i] = if unequal { ((i + 1) * (i + 1)) as f64 } else { 1.0 };
    }
    s
}

/// N x d covariate matrix, row-major.
pub fn gen_covariates(cfg: &SimConfig) -> Result<Vec<f64>> {
    let d = cfg.d;
    let chol = |unequal| Cholesky::factor(&covariance(d, unequal), d).map(|c| c.lower().to_vec());
    let l = match cfg.dist {
        CovariateDist::UeNormal => Some(chol(true)?),
        CovariateDist::Exp | CovariateDist::Beta => None,
        _ => Some(chol(false)?),
    };
    let exp = Exp::new(2.0).map_err(|e| Error::Generation(e.to_string()))?;
    let beta = Beta::new(0.5, 0.5).map_err(|e| Error::Generation(e.to_string()))?;
    let chi = ChiSquared::new(3.0).map_err(|e| Error::Generation(e.to_string()))?;
    let mut out = Vec::with_capacity(cfg.n * d);
    let mut z = vec![0.0; d];
    for i in 0..cfg.n {
        let mut rng = row_rng(cfg.seed, COVARIATE_SALT, i);
        match cfg.dist {
            CovariateDist::Exp => out.extend((0..d).map(|_| exp.sample(&mut rng))),
            CovariateDist::Beta => out.extend((0..d).map(|_| beta.sample(&mut rng))),
            dist => {
                let l = l.as_deref().expect("normal-type designs have a factor");
                let (shift, scale) = match dist {
                    CovariateDist::NzNormal => (1.5, 1.0),
                    CovariateDist::MixNormal => (if rng.random::<bool>() { 1.0 } else { -1.0 }, 1.0),
                    CovariateDist::T3 => {
                        let w: f64 = chi.sample(&mut rng);
                        (0.0, 1.0 / ((w / 3.0).sqrt() * 10.0))
                    }
                    _ => (0.0, 1.0),
                };
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                for r in 0..d {
                    let lz = dot(&l[r * d..r * d + r + 1], &z[..=r]);
                    out.push(shift + scale * lz);
                }
            }
        }
    }
    Ok(out)
}

/// `(1, x1, x2, x3, x1x2, x1x3, x2x3, x1x2x3)`.
pub fn interaction_expand(x: &[f64; 3]) -> [f64; 8] {
    let [a, b, c] = *x;
    [1.0, a, b, c, a * b, a * c, b * c, a * b * c]
}

/// Predictor matrix with intercept (and interactions where the model asks
/// for them), plus column names.
pub fn design(cfg: &SimConfig, covariates: &[f64]) -> (Vec<f64>, Vec<String>) {
    if cfg.model == ResponseModel::LogitInteractions {
        let x = covariates
            .chunks_exact(3)
            .flat_map(|r| interaction_expand(&[r[0], r[1], r[2]]))
            .collect();
        let names = ["intercept", "x1", "x2", "x3", "x1x2", "x1x3", "x2x3", "x1x2x3"]
            .map(String::from)
            .to_vec();
        (x, names)
    } else {
        let d = cfg.d;
        let mut x = Vec::with_capacity(cfg.n * (d + 1));
        for r in covariates.chunks_exact(d) {
            x.push(1.0);
            x.extend_from_slice(r);
        }
        let mut names = vec![crate::data::INTERCEPT.to_string()];
        names.extend((1..=d).map(|j| format!("x{j}")));
        (x, names)
    }
}

/// Responses for predictor rows `x` (N x p) under `cfg.model`.
pub fn gen_response(x: &[f64], cfg: &SimConfig) -> Result<Vec<f64>> {
    let p = cfg.beta.len();
    if x.len() % p != 0 {
        return Err(Error::Dimension(format!("predictor matrix is not N x {p}")));
    }
    let family = cfg.model.family();
    x.chunks_exact(p)
        .enumerate()
        .map(|(i, row)| {
            let eta = dot(row, &cfg.beta);
            let mut rng = row_rng(cfg.seed, RESPONSE_SALT, i);
            match cfg.model {
                ResponseModel::Linear => {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    Ok(eta + cfg.sigma * e)
                }
                ResponseModel::Poisson => {
                    if eta > 30.0 {
                        return Err(Error::Generation(format!(
                            "Poisson mean exp({eta:.1}) overflows at row {i}; use smaller coefficients"
                        )));
                    }
                    let mu = eta.exp();
                    if mu <= 0.0 {
                        return Ok(0.0);
                    }
                    let pois = Poisson::new(mu).map_err(|e| Error::Generation(e.to_string()))?;
                    Ok(pois.sample(&mut rng))
                }
                _ => {
                    let mu = family.link.inverse(eta)?.0;
                    Ok(if rng.random::<f64>() < mu { 1.0 } else { 0.0 })
                }
            }
        })
        .collect()
}

/// Covariates, design and response in one step.
pub fn simulate(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let cov = gen_covariates(cfg)?;
    let (x, names) = design(cfg, &cov);
    let y = gen_response(&x, cfg)?;
    Dataset::new(x, y, names)
}

/// Oracle coefficients for the airline-like design: intercept, QUARTER2-4,
/// DAY_OF_WEEK2-7, DEP_TIME_BLK2-4, DISTANCE.
pub const AIRLINE_BETA: [f64; 14] = [
    -2.3168, -0.0074, 0.0024, -0.0952, -0.1200, -0.1079, 0.0632, 0.0369, -0.2321, -0.1041, 0.4678, 1.0978, 1.3058,
    5.87e-5,
];

/// The same with the distance coefficient enlarged tenfold.
pub fn airline_beta_enlarged() -> [f64; 14] {
    let mut b = AIRLINE_BETA;
    b[13] *= 10.0;
    b
}

pub fn airline_names() -> Vec<String> {
    let mut names = vec![crate::data::INTERCEPT.to_string()];
    names.extend((2..=4).map(|q| format!("QUARTER{q}")));
    names.extend((2..=7).map(|d| format!("DAY_OF_WEEK{d}")));
    names.extend((2..=4).map(|b| format!("DEP_TIME_BLK{b}")));
    names.push("DISTANCE".into());
    names
}

/// Monthly files of flights with uniform categorical levels and uniform
/// distance on [8, 4983]. Keys: `month` (file index), `day_of_week`,
/// `dep_time_blk`, and `distance_blk` (8 equal-depth bins within each
/// month).
pub fn gen_airline_like(months: usize, rows_per_month: usize, beta: &[f64], seed: u64) -> Result<Dataset> {
    if beta.len() != 14 {
        return Err(Error::Config(format!("airline design needs 14 coefficients, got {}", beta.len())));
    }
    if months == 0 || rows_per_month == 0 {
        return Err(Error::Config("airline design needs at least one month and one row".into()));
    }
    let n = months * rows_per_month;
    let mut x = Vec::with_capacity(n * 14);
    let mut y = Vec::with_capacity(n);
    let (mut month_key, mut dow_key, mut dep_key) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut distance = Vec::with_capacity(n);
    for m in 0..months {
        let quarter = (m % 12) / 3 + 1;
        for r in 0..rows_per_month {
            let i = m * rows_per_month + r;
            let mut rng = row_rng(seed, AIRLINE_SALT, i);
            let dow = rng.random_range(1..=7usize);
            let dep = rng.random_range(1..=4usize);
            let dist = rng.random_range(8.0..=4983.0f64);
            let mut row = [0.0; 14];
            row[0] = 1.0;
            if quarter > 1 {
                row[quarter - 1] = 1.0;
            }
            if dow > 1 {
                row[3 + dow - 1] = 1.0;
            }
            if dep > 1 {
                row[9 + dep - 1] = 1.0;
            }
            row[13] = dist;
            let mu = Link::Logit.inverse(dot(&row, beta))?.0;
            y.push(if rng.random::<f64>() < mu { 1.0 } else { 0.0 });
            x.extend_from_slice(&row);
            month_key.push(m as i64);
            dow_key.push(dow as i64);
            dep_key.push(dep as i64);
            distance.push(dist);
        }
    }
    let dist_blk = discretize_within(&distance, &month_key, 8)?;
    let mut data = Dataset::new(x, y, airline_names())?;
    data.add_key("month", month_key)?;
    data.add_key("day_of_week", dow_key)?;
    data.add_key("dep_time_blk", dep_key)?;
    data.add_key("distance_blk", dist_blk.into_iter().map(|b| b as i64).collect())?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interaction_examples() {
        assert_eq!(interaction_expand(&[0.0, 0.0, 0.0]), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(interaction_expand(&[1.0, 1.0, 1.0]), [1.0; 8]);
        assert_eq!(interaction_expand(&[2.0, 3.0, 4.0]), [1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 24.0]);
    }

    #[test]
    fn beta_is_bounded() {
        let cfg = SimConfig::new(CovariateDist::Beta, ResponseModel::Linear, 2000, 1);
        assert!(gen_covariates(&cfg).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn reproducible() {
        let cfg = SimConfig::new(CovariateDist::T3, ResponseModel::Logit, 500, 42);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = SimConfig { seed: 43, ..cfg };
        assert_ne!(simulate(&other).unwrap().y(), simulate(&SimConfig::new(CovariateDist::T3, ResponseModel::Logit, 500, 42)).unwrap().y());
    }

    #[test]
    fn prefix_is_stable_across_n() {
        let a = simulate(&SimConfig::new(CovariateDist::MzNormal, ResponseModel::Logit, 100, 5)).unwrap();
        let b = simulate(&SimConfig::new(CovariateDist::MzNormal, ResponseModel::Logit, 300, 5)).unwrap();
        assert_eq!(a.x(), &b.x()[..a.x().len()]);
        assert_eq!(a.y(), &b.y()[..100]);
    }

    #[test]
    fn noiseless_linear_is_exact() {
        let mut cfg = SimConfig::new(CovariateDist::MzNormal, ResponseModel::Linear, 50, 3);
        cfg.sigma = 0.0;
        let d = simulate(&cfg).unwrap();
        for i in 0..50 {
            assert_eq!(d.y()[i], dot(d.row(i), &cfg.beta));
        }
    }

    #[test]
    fn poisson_overflow_is_generation_error() {
        let mut cfg = SimConfig::new(CovariateDist::MzNormal, ResponseModel::Poisson, 10, 3);
        cfg.beta[0] = 40.0;
        assert!(matches!(simulate(&cfg), Err(Error::Generation(_))));
    }

    #[test]
    fn interaction_model_checks_d() {
        let cfg = SimConfig::new(CovariateDist::MzNormal, ResponseModel::LogitInteractions, 10, 3);
        assert_eq!(simulate(&cfg).unwrap().p(), 8);
        assert!(cfg.clone().with_d(4).validate().is_err());
    }

    #[test]
    fn airline_layout() {
        let d = gen_airline_like(2, 500, &AIRLINE_BETA, 9).unwrap();
        assert_eq!(d.p(), 14);
        assert_eq!(d.n(), 1000);
        for i in 0..d.n() {
            let r = d.row(i);
            assert_eq!(r[1..4].iter().sum::<f64>(), 0.0); // months 1-2 are quarter 1
            assert!(r[4..10].iter().sum::<f64>() <= 1.0);
            assert!((8.0..=4983.0).contains(&r[13]));
        }
        assert_eq!(airline_beta_enlarged()[13], 5.87e-4);
        assert!("mznormal".parse::<CovariateDist>().is_ok());
    }
}
