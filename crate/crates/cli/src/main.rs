use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use repfit::baselines::{dc_fit, full_fit};
use repfit::data::{read_csv_file, write_csv_file, CsvOptions};
use repfit::distsim::{distributed_smr, shard_rows, NodeState};
use repfit::experiment::{rmse, rmse_coords, run_experiment, DataSource, ExperimentConfig, Method};
use repfit::partition::{block_geometry, PartitionMethod, PartitionRequest, PartitionSpec};
use repfit::representatives::{
    fit_representatives, mean_representatives, median_representatives, midpoint_representatives, smr_fit,
    RepresentativeSet, SmrParams,
};
use repfit::simgen::{gen_airline_like, simulate, CovariateDist, ResponseModel, SimConfig, AIRLINE_BETA};
use repfit::{Dataset, FitResult, GlmFamily, SolverParams};

#[derive(Parser)]
#[command(name = "repfit", version, about = "Regression on per-block representative points")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    Simulate(SimulateArgs),
    /// Partition a dataset and write `row,block` labels.
    Partition(PartitionArgs),
    /// Fit one method and write a JSON report.
    Fit(FitArgs),
    /// Run replicated experiments and write an RMSE report.
    Bench(BenchArgs),
    /// Simulate multi-node SMR and write the traffic log.
    Distsim(DistsimArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV with a `y` column followed by predictors.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated integer key columns (not used as predictors).
    #[arg(long, value_delimiter = ',')]
    keys: Vec<String>,
    /// Do not prepend an intercept column.
    #[arg(long)]
    no_intercept: bool,
}

impl InputArgs {
    fn load(&self) -> anyhow::Result<Dataset> {
        let opts = CsvOptions {
            key_columns: self.keys.clone(),
            intercept: !self.no_intercept,
        };
        read_csv_file(&self.data, &opts).with_context(|| format!("reading {}", self.data.display()))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "mzNormal")]
    dist: String,
    /// Response model: linear, logit, cloglog, poisson, logit-interactions.
    #[arg(long, default_value = "logit")]
    family: String,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Number of covariates (default 7).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generate airline-schema data with this many monthly files instead.
    #[arg(long)]
    airline_months: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    input: InputArgs,
    /// equal-depth:m | kmeans:K | natural:cols | distinct-x
    #[arg(long)]
    partition: PartitionRequest,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "logit")]
    family: GlmFamily,
    /// full, mid, median, mr, smr or dc.
    #[arg(long, default_value = "smr")]
    method: Method,
    #[arg(long, conflicts_with = "partition_file")]
    partition: Option<PartitionRequest>,
    /// Labels previously written by `repfit partition`.
    #[arg(long)]
    partition_file: Option<PathBuf>,
    /// SMR refinement rounds.
    #[arg(long, default_value_t = 3)]
    iterations: usize,
    /// Blocks for the divide-and-conquer baseline.
    #[arg(long, default_value_t = 100)]
    dc_blocks: usize,
    /// Fisher scoring iteration cap per fit.
    #[arg(long, default_value_t = 25)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the representative points as CSV.
    #[arg(long)]
    reps_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML experiment config; other flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "mzNormal")]
    dist: String,
    #[arg(long, default_value = "logit")]
    family: String,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value = "kmeans:200")]
    partition: PartitionRequest,
    #[arg(long, value_delimiter = ',', default_value = "full,mr,smr")]
    method: Vec<Method>,
    #[arg(long, default_value_t = 3)]
    iterations: usize,
    #[arg(long, default_value_t = 10)]
    replications: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    include_intercept: bool,
    /// Add a wall-clock `fit_seconds` column.
    #[arg(long)]
    timing: bool,
    /// Per-method mean/std table (RMSE x 1e3).
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DistsimArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "logit")]
    family: GlmFamily,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    /// Partition built independently on each node.
    #[arg(long, default_value = "kmeans:50")]
    partition: PartitionRequest,
    #[arg(long, default_value_t = 3)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Traffic log CSV.
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn simulate_cmd(a: SimulateArgs) -> anyhow::Result<()> {
    let data = match a.airline_months {
        Some(months) => gen_airline_like(months, a.n.div_ceil(months.max(1)), &AIRLINE_BETA, a.seed)?,
        None => {
            let mut cfg = SimConfig::new(a.dist.parse::<CovariateDist>()?, a.family.parse::<ResponseModel>()?, a.n, a.seed);
            if let Some(d) = a.d {
                cfg = cfg.with_d(d);
            }
            simulate(&cfg)?
        }
    };
    write_csv_file(&data, &a.out)?;
    log::info!("wrote {} rows to {}", data.n(), a.out.display());
    Ok(())
}

fn partition_cmd(a: PartitionArgs) -> anyhow::Result<()> {
    let data = a.input.load()?;
    let part = a.partition.build(&data, a.seed)?;
    part.write(create(&a.out)?)?;
    let g = block_geometry(&data, &part, None);
    eprintln!(
        "{} blocks, max diameter {:.6}{}",
        part.k(),
        g.delta,
        if g.exact { "" } else { " (upper estimate)" }
    );
    Ok(())
}

fn load_partition(a: &FitArgs, data: &Dataset) -> anyhow::Result<PartitionSpec> {
    let part = match (&a.partition, &a.partition_file) {
        (Some(req), None) => req.build(data, a.seed)?,
        (None, Some(path)) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            PartitionSpec::read(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?
        }
        _ => bail!("method needs --partition or --partition-file"),
    };
    if part.n() != data.n() {
        bail!("partition covers {} rows, data has {}", part.n(), data.n());
    }
    Ok(part)
}

/// Returns whether the final fit converged.
fn fit_cmd(a: FitArgs) -> anyhow::Result<bool> {
    let data = a.input.load()?;
    let solver = SolverParams {
        max_iter: a.max_iter,
        ..SolverParams::default()
    };
    let mut reps: Option<RepresentativeSet> = None;
    let mut rounds = 0;
    let (fit, k_used): (FitResult, usize) = match a.method {
        Method::Full => (full_fit(&data, &a.family, &solver)?, data.n()),
        Method::Dc => {
            let dc = dc_fit(&data, &a.family, a.dc_blocks, a.seed, &solver)?;
            (dc.fit, dc.used_blocks)
        }
        Method::Mr | Method::Median | Method::Mid => {
            let part = load_partition(&a, &data)?;
            let r = match a.method {
                Method::Mr => mean_representatives(&data, &part),
                Method::Median => median_representatives(&data, &part),
                _ => midpoint_representatives(&data, &part)?,
            };
            let f = fit_representatives(&r, &a.family, &solver)?;
            let k = r.len();
            reps = Some(r);
            (f, k)
        }
        Method::Smr => {
            let part = load_partition(&a, &data)?;
            let params = SmrParams {
                iterations: a.iterations,
                solver,
                ..SmrParams::default()
            };
            let s = smr_fit(&data, &part, &a.family, &params)?;
            let k = s.reps.len();
            rounds = s.history.len();
            reps = Some(s.reps);
            (s.fit, k)
        }
    };
    let count = |f: fn(&repfit::representatives::Fallback) -> bool| {
        reps.as_ref().map_or(0, |r| r.points.iter().filter(|p| f(&p.fallback)).count())
    };
    let report = json!({
        "method": a.method.to_string(),
        "family": a.family.to_string(),
        "n": data.n(),
        "k_used": k_used,
        "names": data.names(),
        "beta": fit.beta,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "smr_rounds": rounds,
        "score_norm": if fit.score_norm.is_finite() { json!(fit.score_norm) } else { json!(null) },
        "fallback_counts": {
            "y_mean": count(|f| f.y_mean),
            "eta_mean": count(|f| f.eta_mean),
            "x_mean": count(|f| f.x_mean),
        },
    });
    let mut out = create(&a.out)?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    if let (Some(path), Some(r)) = (&a.reps_out, &reps) {
        r.write(create(path)?)?;
    }
    if !fit.converged {
        log::warn!("fit did not converge after {} iterations", fit.iterations);
    }
    Ok(fit.converged)
}

fn bench_cmd(a: BenchArgs) -> anyhow::Result<()> {
    let cfg = match &a.config {
        Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => {
            let sim = SimConfig::new(a.dist.parse()?, a.family.parse()?, a.n, a.seed);
            sim.validate()?;
            ExperimentConfig {
                replications: a.replications,
                seed: a.seed,
                include_intercept: a.include_intercept,
                timing: a.timing,
                source: DataSource::Simulated(sim),
                partition: a.partition.clone(),
                methods: a.method.clone(),
                smr_iterations: a.iterations,
                ..ExperimentConfig::desk(ResponseModel::Logit, 0, a.seed)
            }
        }
    };
    let report = run_experiment(&cfg)?;
    report.write_csv(create(&a.out)?)?;
    match &a.summary {
        Some(path) => report.write_summary(create(path)?)?,
        None => report.write_summary(io::stderr().lock())?,
    }
    Ok(())
}

fn distsim_cmd(a: DistsimArgs) -> anyhow::Result<()> {
    let data = a.input.load()?;
    let mut nodes = Vec::with_capacity(a.nodes);
    for (id, shard) in shard_rows(&data, a.nodes)?.into_iter().enumerate() {
        let part = if shard.n() == 0 {
            PartitionSpec::from_labels(&[], PartitionMethod::Natural)?
        } else {
            a.partition.build(&shard, a.seed.wrapping_add(id as u64))?
        };
        nodes.push(NodeState::new(id, shard, part)?);
    }
    let params = SmrParams {
        iterations: a.iterations,
        ..SmrParams::default()
    };
    let res = distributed_smr(&mut nodes, &a.family, &params)?;
    res.traffic.write_csv(create(&a.out)?)?;
    let full = full_fit(&data, &a.family, &SolverParams::default()).ok();
    let summary = json!({
        "nodes_used": res.nodes_used,
        "beta": res.beta,
        "converged": res.fit.converged,
        "total_words": res.traffic.total_words(),
        "raw_shuffle_words": res.traffic.raw_shuffle_words,
        "ratio_to_raw": res.traffic.ratio_to_raw(),
        "rmse_from_full": full.map(|f| rmse(&res.beta, &f.beta, &rmse_coords(data.p(), false)).unwrap_or(f64::NAN)),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.cmd {
        Command::Simulate(a) => simulate_cmd(a).map(|_| true),
        Command::Partition(a) => partition_cmd(a).map(|_| true),
        Command::Fit(a) => fit_cmd(a),
        Command::Bench(a) => bench_cmd(a).map(|_| true),
        Command::Distsim(a) => distsim_cmd(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
