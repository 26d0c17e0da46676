//! Replicated simulation experiments and their tidy CSV reports.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::baselines::{dc_fit, full_fit};
use crate::data::{read_csv_file, CsvOptions, Dataset};
use crate::error::{Error, Result};
use crate::glm::{FitResult, GlmFamily, SolverParams};
use crate::partition::{PartitionRequest, PartitionSpec};
use crate::representatives::{
    fit_representatives, mean_representatives, median_representatives, midpoint_representatives, smr_fit,
    SmrParams,
};
use crate::simgen::{simulate, CovariateDist, ResponseModel, SimConfig};

/// Root mean squared difference over `coords`.
pub fn rmse(est: &[f64], reference: &[f64], coords: &[usize]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::Dimension(format!(
            "rmse of vectors with lengths {} and {}",
            est.len(),
            reference.len()
        )));
    }
    if let Some(&j) = coords.iter().find(|&&j| j >= est.len()) {
        return Err(Error::Dimension(format!("rmse coordinate {j} out of range")));
    }
    if coords.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = coords.iter().map(|&j| (est[j] - reference[j]).powi(2)).sum();
    Ok((ss / coords.len() as f64).sqrt())
}

/// Coordinates compared by default: everything but the intercept (column 0).
pub fn rmse_coords(p: usize, include_intercept: bool) -> Vec<usize> {
    if include_intercept {
        (0..p).collect()
    } else {
        (1..p).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Full,
    Mid,
    Median,
    Mr,
    Smr,
    Dc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Full => "full",
            Method::Mid => "mid",
            Method::Median => "median",
            Method::Mr => "mr",
            Method::Smr => "smr",
            Method::Dc => "dc",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "full" => Method::Full,
            "mid" | "midpoint" => Method::Mid,
            "median" => Method::Median,
            "mr" | "mean" => Method::Mr,
            "smr" => Method::Smr,
            "dc" => Method::Dc,
            other => return Err(Error::Config(format!("unknown method `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    replications: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    include_intercept: bool,
    #[serde(default)]
    timing: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    dist: Option<String>,
    model: Option<String>,
    n: Option<usize>,
    d: Option<usize>,
    beta: Option<Vec<f64>>,
    sigma: Option<f64>,
    csv: Option<PathBuf>,
    family: Option<String>,
    #[serde(default)]
    keys: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    spec: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethods {
    list: Vec<String>,
    smr_iterations: Option<usize>,
    dc_blocks: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    data: RawData,
    partition: RawPartition,
    methods: RawMethods,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Simulated(SimConfig),
    /// Responses are refitted as given; `beta` (if any) is the reference for
    /// rmse-from-true.
    Csv {
        path: PathBuf,
        family: GlmFamily,
        keys: Vec<String>,
        beta: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub replications: usize,
    pub seed: u64,
    pub include_intercept: bool,
    /// Emit the wall-clock `fit_seconds` column (off keeps reports
    /// byte-identical across runs).
    pub timing: bool,
    pub source: DataSource,
    pub partition: PartitionRequest,
    pub methods: Vec<Method>,
    pub smr_iterations: usize,
    pub dc_blocks: usize,
    pub solver: SolverParams,
}

impl ExperimentConfig {
    /// Desk-scale default: mzNormal logistic, N = 1e5, kmeans K = 200.
    pub fn desk(model: ResponseModel, replications: usize, seed: u64) -> Self {
        Self {
            replications,
            seed,
            include_intercept: false,
            timing: false,
            source: DataSource::Simulated(SimConfig::new(CovariateDist::MzNormal, model, 100_000, seed)),
            partition: PartitionRequest::KMeans(200),
            methods: vec![Method::Full, Method::Mr, Method::Smr],
            smr_iterations: 3,
            dc_blocks: 100,
            solver: SolverParams::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let d = raw.data;
        let source = if let Some(path) = d.csv {
            let family = d
                .family
                .as_deref()
                .unwrap_or("logit")
                .parse::<GlmFamily>()
                .map_err(|e| Error::Config(e.to_string()))?;
            DataSource::Csv {
                path,
                family,
                keys: d.keys,
                beta: d.beta,
            }
        } else {
            let dist: CovariateDist = d.dist.as_deref().unwrap_or("mzNormal").parse()?;
            let model: ResponseModel = d.model.as_deref().unwrap_or("logit").parse()?;
            let mut sim = SimConfig::new(dist, model, d.n.unwrap_or(100_000), raw.experiment.seed);
            if let Some(dd) = d.d {
                sim = sim.with_d(dd);
            }
            if let Some(b) = d.beta {
                sim.beta = b;
            }
            if let Some(s) = d.sigma {
                sim.sigma = s;
            }
            sim.validate()?;
            DataSource::Simulated(sim)
        };
        let methods = raw
            .methods
            .list
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<Method>>>()?;
        Ok(Self {
            replications: raw.experiment.replications,
            seed: raw.experiment.seed,
            include_intercept: raw.experiment.include_intercept,
            timing: raw.experiment.timing,
            source,
            partition: raw.partition.spec.parse()?,
            methods,
            smr_iterations: raw.methods.smr_iterations.unwrap_or(3),
            dc_blocks: raw.methods.dc_blocks.unwrap_or(100),
            solver: SolverParams::default(),
        })
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Seed of replication `r`, decorrelated from the master seed.
pub fn replication_seed(master: u64, r: usize) -> u64 {
    let mut z = master.wrapping_add((r as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub replication: usize,
    pub method: Method,
    pub rmse_from_true: f64,
    pub rmse_from_full: f64,
    pub fit_seconds: f64,
    /// Points the final fit used (rows for full, blocks kept for dc).
    pub k_used: usize,
    pub fallback_count: usize,
    pub converged: bool,
    /// Empty when the method ran.
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub runs: usize,
    pub mean_rmse_from_true: f64,
    pub std_rmse_from_true: f64,
    pub mean_rmse_from_full: f64,
    pub std_rmse_from_full: f64,
    pub mean_fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub timing: bool,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

impl ExperimentReport {
    pub const HEADER: &'static str =
        "replication,method,rmse_from_true,rmse_from_full,k_used,fallback_count,converged,error";
    pub const HEADER_TIMED: &'static str =
        "replication,method,rmse_from_true,rmse_from_full,fit_seconds,k_used,fallback_count,converged,error";

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut methods: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        methods
            .into_iter()
            .map(|m| {
                let ok: Vec<&ReportRow> = self.rows.iter().filter(|r| r.method == m && r.error.is_empty()).collect();
                let t: Vec<f64> = ok.iter().map(|r| r.rmse_from_true).filter(|v| v.is_finite()).collect();
                let f: Vec<f64> = ok.iter().map(|r| r.rmse_from_full).filter(|v| v.is_finite()).collect();
                let s: Vec<f64> = ok.iter().map(|r| r.fit_seconds).collect();
                let (mt, st) = mean_std(&t);
                let (mf, sf) = mean_std(&f);
                SummaryRow {
                    method: m,
                    runs: ok.len(),
                    mean_rmse_from_true: mt,
                    std_rmse_from_true: st,
                    mean_rmse_from_full: mf,
                    std_rmse_from_full: sf,
                    mean_fit_seconds: mean_std(&s).0,
                }
            })
            .collect()
    }

    pub fn summary_for(&self, m: Method) -> Option<SummaryRow> {
        self.summary().into_iter().find(|s| s.method == m)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", if self.timing { Self::HEADER_TIMED } else { Self::HEADER })?;
        for r in &self.rows {
            write!(out, "{},{},{:?},{:?},", r.replication, r.method, r.rmse_from_true, r.rmse_from_full)?;
            if self.timing {
                write!(out, "{:.6},", r.fit_seconds)?;
            }
            let err = r.error.replace([',', '\n'], ";");
            writeln!(out, "{},{},{},{}", r.k_used, r.fallback_count, r.converged, err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Per-method mean and standard deviation, RMSEs in units of 1e-3.
    pub fn write_summary<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "method,runs,rmse_true_e3_mean,rmse_true_e3_std,rmse_full_e3_mean,rmse_full_e3_std")?;
        for s in self.summary() {
            writeln!(
                out,
                "{},{},{:.3},{:.3},{:.3},{:.3}",
                s.method,
                s.runs,
                s.mean_rmse_from_true * 1e3,
                s.std_rmse_from_true * 1e3,
                s.mean_rmse_from_full * 1e3,
                s.std_rmse_from_full * 1e3
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Outcome {
    fit: FitResult,
    k_used: usize,
    fallbacks: usize,
}

fn run_method(
    method: Method,
    data: &Dataset,
    part: std::result::Result<&PartitionSpec, &str>,
    family: &GlmFamily,
    cfg: &ExperimentConfig,
    seed: u64,
    full: Option<&FitResult>,
) -> Result<Outcome> {
    let part = || part.map_err(|e| Error::Config(format!("partition failed: {e}")));
    match method {
        Method::Full => {
            let fit = match full {
                Some(f) => f.clone(),
                None => full_fit(data, family, &cfg.solver)?,
            };
            Ok(Outcome {
                fit,
                k_used: data.n(),
                fallbacks: 0,
            })
        }
        Method::Dc => {
            let dc = dc_fit(data, family, cfg.dc_blocks, seed, &cfg.solver)?;
            Ok(Outcome {
                fit: dc.fit,
                k_used: dc.used_blocks,
                fallbacks: 0,
            })
        }
        Method::Mr | Method::Median | Method::Mid => {
            let p = part()?;
            let reps = match method {
                Method::Mr => mean_representatives(data, p),
                Method::Median => median_representatives(data, p),
                _ => midpoint_representatives(data, p)?,
            };
            Ok(Outcome {
                fit: fit_representatives(&reps, family, &cfg.solver)?,
                k_used: reps.len(),
                fallbacks: 0,
            })
        }
        Method::Smr => {
            let params = SmrParams {
                iterations: cfg.smr_iterations,
                solver: cfg.solver,
                ..SmrParams::default()
            };
            let s = smr_fit(data, part()?, family, &params)?;
            let fallbacks = s.reps.points.iter().filter(|p| p.fallback.any()).count();
            Ok(Outcome {
                fit: s.fit,
                k_used: s.reps.len(),
                fallbacks,
            })
        }
    }
}

fn load(cfg: &ExperimentConfig, r: usize) -> Result<(Dataset, GlmFamily, Option<Vec<f64>>)> {
    match &cfg.source {
        DataSource::Simulated(sim) => {
            let sim = SimConfig {
                seed: replication_seed(cfg.seed, r),
                ..sim.clone()
            };
            Ok((simulate(&sim)?, sim.model.family(), Some(sim.beta.clone())))
        }
        DataSource::Csv { path, family, keys, beta } => {
            let opts = CsvOptions {
                key_columns: keys.clone(),
                ..CsvOptions::default()
            };
            Ok((read_csv_file(path, &opts)?, *family, beta.clone()))
        }
    }
}

fn replication(cfg: &ExperimentConfig, r: usize) -> Result<Vec<ReportRow>> {
    let (data, family, truth) = load(cfg, r)?;
    let seed = replication_seed(cfg.seed, r);
    let coords = rmse_coords(data.p(), cfg.include_intercept);
    let needs_part = cfg.methods.iter().any(|m| matches!(m, Method::Mr | Method::Smr | Method::Median | Method::Mid));
    let part = if needs_part {
        cfg.partition.build(&data, seed).map_err(|e| e.to_string())
    } else {
        Err("no partition requested".to_string())
    };
    let full = full_fit(&data, &family, &cfg.solver);
    let full_beta = full.as_ref().ok().map(|f| f.beta.clone());
    let mut rows = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let start = Instant::now();
        let out = run_method(m, &data, part.as_ref().map_err(String::as_str), &family, cfg, seed, full.as_ref().ok());
        let secs = start.elapsed().as_secs_f64();
        let row = match out {
            Ok(o) => {
                let vs = |reference: Option<&Vec<f64>>| {
                    reference.map_or(Ok(f64::NAN), |b| rmse(&o.fit.beta, b, &coords))
                };
                ReportRow {
                    replication: r,
                    method: m,
                    rmse_from_true: vs(truth.as_ref())?,
                    rmse_from_full: vs(full_beta.as_ref())?,
                    fit_seconds: secs,
                    k_used: o.k_used,
                    fallback_count: o.fallbacks,
                    converged: o.fit.converged,
                    error: String::new(),
                }
            }
            Err(e) => {
                log::warn!("replication {r}: {m} failed: {e}");
                ReportRow {
                    replication: r,
                    method: m,
                    rmse_from_true: f64::NAN,
                    rmse_from_full: f64::NAN,
                    fit_seconds: secs,
                    k_used: 0,
                    fallback_count: 0,
                    converged: false,
                    error: e.to_string(),
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Run every replication (in parallel, assembled in replication order).
/// Per-method failures become report rows; data errors abort.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    let per_rep: Vec<Result<Vec<ReportRow>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| replication(cfg, r))
        .collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    Ok(ExperimentReport {
        rows,
        timing: cfg.timing,
    })
}
