//! Simulate a logistic dataset, partition it with k-means, and compare the
//! mean-representative and score-matching fits against the full-data MLE.

use repfit::baselines::full_fit;
use repfit::experiment::{rmse, rmse_coords};
use repfit::partition::PartitionRequest;
use repfit::representatives::{fit_representatives, mean_representatives, smr_fit, SmrParams};
use repfit::simgen::{simulate, CovariateDist, ResponseModel, SimConfig};
use repfit::SolverParams;

fn main() -> repfit::Result<()> {
    let cfg = SimConfig::new(CovariateDist::MzNormal, ResponseModel::Logit, 100_000, 1);
    let family = cfg.model.family();
    let data = simulate(&cfg)?;
    let part = PartitionRequest::KMeans(200).build(&data, 1)?;

    let solver = SolverParams::default();
    let full = full_fit(&data, &family, &solver)?;
    let mr = fit_representatives(&mean_representatives(&data, &part), &family, &solver)?;
    let smr = smr_fit(&data, &part, &family, &SmrParams::default())?;

    let coords = rmse_coords(data.p(), false);
    println!("blocks: {}, SMR points: {}", part.k(), smr.reps.len());
    println!("MR  RMSE from full: {:.4}", rmse(&mr.beta, &full.beta, &coords)?);
    println!("SMR RMSE from full: {:.4}", rmse(&smr.beta, &full.beta, &coords)?);
    Ok(())
}
