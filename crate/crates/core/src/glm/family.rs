//! Exponential-family distributions, link functions and the scalar
//! functions `G`, `G'`, `nu`, `h` the score equation is built from.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Normal,
    Bernoulli,
    Poisson,
    Gamma,
    InverseGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Identity,
    Logit,
    Probit,
    Cloglog,
    Loglog,
    Cauchit,
    Log,
    Reciprocal,
    InverseSquared,
}

impl Family {
    pub fn canonical_link(self) -> Link {
        match self {
            Family::Normal => Link::Identity,
            Family::Bernoulli => Link::Logit,
            Family::Poisson => Link::Log,
            Family::Gamma => Link::Reciprocal,
            Family::InverseGaussian => Link::InverseSquared,
        }
    }

    /// Variance function `V(mu)` with unit dispersion.
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Normal => 1.0,
            Family::Bernoulli => mu * (1.0 - mu),
            Family::Poisson => mu,
            Family::Gamma => mu * mu,
            Family::InverseGaussian => mu * mu * mu,
        }
    }

    fn mean_in_support(self, mu: f64) -> bool {
        match self {
            Family::Normal => mu.is_finite(),
            Family::Bernoulli => (0.0..=1.0).contains(&mu),
            Family::Poisson => mu >= 0.0 && mu.is_finite(),
            Family::Gamma | Family::InverseGaussian => mu > 0.0 && mu.is_finite(),
        }
    }

    /// `G'(eta)^2 / V(mu)` divided by `G'(eta)` for the canonical link,
    /// i.e. the constant exact `nu`. Normalised to 1 in [`LinkEval::nu`].
    fn canonical_nu_constant(self) -> f64 {
        match self {
            Family::Normal | Family::Bernoulli | Family::Poisson => 1.0,
            Family::Gamma => -1.0,
            Family::InverseGaussian => -0.5,
        }
    }

    /// Log-likelihood contribution of one observation up to terms free of
    /// `mu`, unit dispersion. Its derivative in `mu` is `(y - mu) / V(mu)`.
    pub fn log_density(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Normal => -0.5 * (y - mu) * (y - mu),
            Family::Bernoulli => {
                let a = if y != 0.0 { y * mu.ln() } else { 0.0 };
                let b = if y != 1.0 { (1.0 - y) * (1.0 - mu).ln() } else { 0.0 };
                a + b
            }
            Family::Poisson => {
                let a = if y != 0.0 { y * mu.ln() } else { 0.0 };
                a - mu
            }
            Family::Gamma => -y / mu - mu.ln(),
            Family::InverseGaussian => -y / (2.0 * mu * mu) + 1.0 / mu,
        }
    }
}

impl Link {
    /// Inverse link `G` and its derivative.
    pub fn inverse(self, eta: f64) -> Result<(f64, f64)> {
        if !eta.is_finite() {
            return Err(Error::Domain(format!("non-finite linear predictor {eta}")));
        }
        let out = match self {
            Link::Identity => (eta, 1.0),
            Link::Logit => {
                let g = if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                };
                // G' = G(1-G), written without 1-G for accuracy in the tail
                let t = (-eta.abs()).exp();
                (g, t / ((1.0 + t) * (1.0 + t)))
            }
            Link::Probit => (std_normal_cdf(eta), std_normal_pdf(eta)),
            Link::Cloglog => {
                let e = eta.exp();
                (-(-e).exp_m1(), e * (-e).exp())
            }
            Link::Loglog => {
                let e = eta.exp();
                let g = (-e).exp();
                (g, -e * g)
            }
            Link::Cauchit => (eta.atan() / PI + 0.5, 1.0 / (PI * (1.0 + eta * eta))),
            Link::Log => {
                let e = eta.exp();
                (e, e)
            }
            Link::Reciprocal => {
                if eta == 0.0 {
                    return Err(Error::Domain("reciprocal link undefined at eta = 0".into()));
                }
                (1.0 / eta, -1.0 / (eta * eta))
            }
            Link::InverseSquared => {
                if eta <= 0.0 {
                    return Err(Error::Domain(format!(
                        "inverse-squared link needs eta > 0, got {eta}"
                    )));
                }
                let s = eta.sqrt();
                (1.0 / s, -0.5 / (eta * s))
            }
        };
        if !(out.0.is_finite() && out.1.is_finite()) {
            return Err(Error::Domain(format!("{self} overflows at eta = {eta}")));
        }
        Ok(out)
    }

    /// The link `g = G^{-1}` itself.
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Link::Identity => mu,
            Link::Logit => (mu / (1.0 - mu)).ln(),
            Link::Probit => inverse_std_normal_cdf(mu),
            Link::Cloglog => (-(-mu).ln_1p()).ln(),
            Link::Loglog => (-mu.ln()).ln(),
            Link::Cauchit => (PI * (mu - 0.5)).tan(),
            Link::Log => mu.ln(),
            Link::Reciprocal => 1.0 / mu,
            Link::InverseSquared => 1.0 / (mu * mu),
        }
    }
}

/// `(G, G', nu, V)` at one linear predictor value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEval {
    pub g: f64,
    pub g_prime: f64,
    /// Score weight `nu = G'/h`, normalised to 1 for canonical links.
    pub nu: f64,
    /// Variance function at `mu = G(eta)`.
    pub var: f64,
    /// Expected-information weight `G'^2 / V`, always >= 0.
    pub info: f64,
}

/// A distribution together with a link function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GlmFamily {
    pub family: Family,
    pub link: Link,
}

impl GlmFamily {
    pub const fn new(family: Family, link: Link) -> Self {
        Self { family, link }
    }

    pub const fn linear() -> Self {
        Self::new(Family::Normal, Link::Identity)
    }

    pub const fn logistic() -> Self {
        Self::new(Family::Bernoulli, Link::Logit)
    }

    pub const fn cloglog() -> Self {
        Self::new(Family::Bernoulli, Link::Cloglog)
    }

    pub const fn poisson() -> Self {
        Self::new(Family::Poisson, Link::Log)
    }

    pub fn canonical(&self) -> bool {
        self.family.canonical_link() == self.link
    }

    pub fn is_identity_linear(&self) -> bool {
        self.family == Family::Normal && self.link == Link::Identity
    }

    /// Ratio between the normalised `nu` and the exact `G'/h`: the score
    /// returned by [`crate::glm::score`] is this factor times the gradient
    /// of [`crate::glm::log_likelihood`].
    pub fn score_scale(&self) -> f64 {
        if self.canonical() {
            1.0 / self.family.canonical_nu_constant()
        } else {
            1.0
        }
    }

    pub fn eval(&self, eta: f64) -> Result<LinkEval> {
        let (g, g_prime) = self.link.inverse(eta)?;
        if !self.family.mean_in_support(g) {
            return Err(Error::Domain(format!(
                "mean {g} from {} at eta = {eta} outside the {:?} support",
                self.link, self.family
            )));
        }
        let var = self.family.variance(g);
        let (nu, nu_exact) = if self.canonical() {
            (1.0, self.family.canonical_nu_constant())
        } else {
            let v = self.noncanonical_nu(eta, g_prime, var)?;
            (v, v)
        };
        Ok(LinkEval {
            g,
            g_prime,
            nu,
            var,
            info: g_prime * nu_exact,
        })
    }

    fn noncanonical_nu(&self, eta: f64, g_prime: f64, var: f64) -> Result<f64> {
        let nu = match (self.family, self.link) {
            (Family::Bernoulli, Link::Probit) => probit_nu(eta),
            (Family::Bernoulli, Link::Cloglog) => {
                let e = eta.exp();
                e / -(-e).exp_m1()
            }
            (Family::Bernoulli, Link::Loglog) => {
                let e = eta.exp();
                e / (-e).exp_m1()
            }
            (Family::Bernoulli, Link::Cauchit) => {
                let a = eta.abs();
                // pi^2/4 - atan^2 = (pi/2 - |atan|)(pi/2 + |atan|), first factor atan(1/|eta|)
                let near = if a > 0.0 { (1.0 / a).atan() } else { FRAC_PI_2 };
                let far = FRAC_PI_2 + a.atan();
                PI / ((1.0 + eta * eta) * near * far)
            }
            _ => {
                if !(var > 0.0) {
                    return Err(Error::Domain(format!(
                        "zero variance at eta = {eta} for {self}"
                    )));
                }
                g_prime / var
            }
        };
        if !nu.is_finite() {
            return Err(Error::Domain(format!("nu overflows at eta = {eta} for {self}")));
        }
        Ok(nu)
    }
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn inverse_std_normal_cdf(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

/// `phi(x) / (Phi(x) Phi(-x))`, with the Mills-ratio expansion in the far
/// tail where `Phi(-|x|)` underflows.
fn probit_nu(x: f64) -> f64 {
    let a = x.abs();
    if a > 30.0 {
        let a2 = a * a;
        let tail = 1.0 - 1.0 / a2 + 3.0 / (a2 * a2) - 15.0 / (a2 * a2 * a2);
        return a / tail;
    }
    std_normal_pdf(x) / (std_normal_cdf(x) * std_normal_cdf(-x))
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Normal => "normal",
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::Gamma => "gamma",
            Family::InverseGaussian => "inverse-gaussian",
        })
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Identity => "identity",
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Cloglog => "cloglog",
            Link::Loglog => "loglog",
            Link::Cauchit => "cauchit",
            Link::Log => "log",
            Link::Reciprocal => "reciprocal",
            Link::InverseSquared => "inverse-squared",
        })
    }
}

impl fmt::Display for GlmFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.family, self.link)
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "normal" | "gaussian" => Family::Normal,
            "bernoulli" | "binomial" => Family::Bernoulli,
            "poisson" => Family::Poisson,
            "gamma" => Family::Gamma,
            "inverse-gaussian" | "inverse_gaussian" => Family::InverseGaussian,
            _ => return Err(Error::Config(format!("unknown family `{s}`"))),
        })
    }
}

impl FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => Link::Identity,
            "logit" => Link::Logit,
            "probit" => Link::Probit,
            "cloglog" => Link::Cloglog,
            "loglog" => Link::Loglog,
            "cauchit" => Link::Cauchit,
            "log" => Link::Log,
            "reciprocal" | "inverse" => Link::Reciprocal,
            "inverse-squared" | "inverse_squared" => Link::InverseSquared,
            _ => return Err(Error::Config(format!("unknown link `{s}`"))),
        })
    }
}

/// Accepts `family-link` (`bernoulli-cloglog`), a bare family (canonical
/// link) or one of the shorthands `linear`, `logit`, `probit`, `cloglog`,
/// `loglog`, `cauchit`.
impl FromStr for GlmFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "linear" => return Ok(Self::linear()),
            "logit" | "logistic" | "probit" | "cloglog" | "loglog" | "cauchit" => {
                let link = if s == "logistic" { Link::Logit } else { s.parse()? };
                return Ok(Self::new(Family::Bernoulli, link));
            }
            _ => {}
        }
        if let Ok(f) = s.parse::<Family>() {
            return Ok(Self::new(f, f.canonical_link()));
        }
        // family names may contain '-', so split on the first '-' whose
        // prefix parses
        for (i, _) in s.match_indices('-') {
            if let (Ok(f), Ok(l)) = (s[..i].parse::<Family>(), s[i + 1..].parse::<Link>()) {
                return Ok(Self::new(f, l));
            }
        }
        Err(Error::Config(format!("unknown family/link `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BERNOULLI_LINKS: [Link; 5] = [
        Link::Logit,
        Link::Probit,
        Link::Cloglog,
        Link::Loglog,
        Link::Cauchit,
    ];

    fn canonical_pairs() -> Vec<GlmFamily> {
        [
            Family::Normal,
            Family::Bernoulli,
            Family::Poisson,
            Family::Gamma,
            Family::InverseGaussian,
        ]
        .iter()
        .map(|f| GlmFamily::new(*f, f.canonical_link()))
        .collect()
    }

    #[test]
    fn table_values() {
        let e = GlmFamily::logistic().eval(0.0).unwrap();
        assert_eq!(e.g, 0.5);
        assert_eq!(e.nu, 1.0);
        let c = GlmFamily::cloglog().eval(0.0).unwrap();
        assert!((c.g - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((c.g - 0.632121).abs() < 1e-6);
        let p = GlmFamily::poisson().eval(1.0).unwrap();
        assert!((p.g - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        let ig = GlmFamily::new(Family::InverseGaussian, Link::InverseSquared);
        assert!(matches!(ig.eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(ig.eval(-1.0), Err(Error::Domain(_))));
        let gamma = GlmFamily::new(Family::Gamma, Link::Reciprocal);
        assert!(matches!(gamma.eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(gamma.eval(-2.0), Err(Error::Domain(_))));
        assert!(GlmFamily::logistic().eval(f64::NAN).is_err());
    }

    #[test]
    fn link_inverts_inverse_link() {
        for fam in canonical_pairs()
            .into_iter()
            .chain(BERNOULLI_LINKS.iter().map(|l| GlmFamily::new(Family::Bernoulli, *l)))
        {
            let grid: Vec<f64> = match fam.link {
                Link::Reciprocal | Link::InverseSquared => (1..40).map(|i| i as f64 * 0.25).collect(),
                // past |eta| ~ 2.5 the forward link loses digits as 1 - mu shrinks
                _ if fam.family == Family::Bernoulli => (-12..=12).map(|i| i as f64 * 0.2).collect(),
                _ => (-30..=30).map(|i| i as f64 * 0.2).collect(),
            };
            for eta in grid {
                let e = fam.eval(eta).unwrap();
                let back = fam.link.link(e.g);
                assert!(
                    (back - eta).abs() <= 1e-10 * (1.0 + eta.abs()),
                    "{fam}: g(G({eta})) = {back}"
                );
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for link in BERNOULLI_LINKS.iter().copied().chain([Link::Identity, Link::Log]) {
            for i in -20..=20 {
                let eta = i as f64 * 0.3;
                let h = 1e-6;
                let (_, d) = link.inverse(eta).unwrap();
                let fd = (link.inverse(eta + h).unwrap().0 - link.inverse(eta - h).unwrap().0) / (2.0 * h);
                assert!((d - fd).abs() <= 1e-7 * (1.0 + d.abs()), "{link} at {eta}");
            }
        }
    }

    #[test]
    fn bernoulli_means_stay_inside_unit_interval() {
        for link in BERNOULLI_LINKS {
            for i in -12..=12 {
                let eta = i as f64 * 0.25;
                let g = link.inverse(eta).unwrap().0;
                assert!(g > 0.0 && g < 1.0, "{link} at {eta}: {g}");
            }
        }
    }

    #[test]
    fn noncanonical_nu_is_derivative_over_variance() {
        for link in [Link::Probit, Link::Cloglog, Link::Loglog, Link::Cauchit] {
            let fam = GlmFamily::new(Family::Bernoulli, link);
            for i in -12..=12 {
                let eta = i as f64 * 0.25;
                let e = fam.eval(eta).unwrap();
                // 1 - G evaluated without cancellation
                let upper = match link {
                    Link::Cloglog => (-eta.exp()).exp(),
                    Link::Loglog => -(-eta.exp()).exp_m1(),
                    _ => link.inverse(-eta).unwrap().0,
                };
                let direct = e.g_prime / (e.g * upper);
                assert!((e.nu - direct).abs() <= 1e-9 * direct.abs(), "{fam} at {eta}");
            }
        }
    }

    #[test]
    fn probit_tail_is_finite_and_continuous() {
        let below = probit_nu(29.999);
        let above = probit_nu(30.001);
        assert!(below.is_finite() && above.is_finite());
        assert!((below - above).abs() / below < 1e-3);
        assert!(probit_nu(200.0).is_finite());
    }

    #[test]
    fn parses_names() {
        assert_eq!("logit".parse::<GlmFamily>().unwrap(), GlmFamily::logistic());
        assert_eq!(
            "inverse-gaussian-inverse-squared".parse::<GlmFamily>().unwrap(),
            GlmFamily::new(Family::InverseGaussian, Link::InverseSquared)
        );
        assert_eq!("bernoulli-cloglog".parse::<GlmFamily>().unwrap(), GlmFamily::cloglog());
        assert_eq!("poisson".parse::<GlmFamily>().unwrap(), GlmFamily::poisson());
        assert!("weibull".parse::<GlmFamily>().is_err());
        for f in canonical_pairs() {
            assert_eq!(f.to_string().parse::<GlmFamily>().unwrap(), f);
        }
    }

    #[test]
    fn information_weight_is_nonnegative() {
        for fam in canonical_pairs() {
            let e = fam.eval(1.5).unwrap();
            assert!(e.info >= 0.0, "{fam}");
            assert!((e.info - e.g_prime * e.g_prime / e.var).abs() < 1e-12 * (1.0 + e.info));
        }
    }
}
