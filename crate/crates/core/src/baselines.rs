//! Reference estimators: the full-data MLE and an information-weighted
//! divide-and-conquer aggregate over random blocks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{self, FitResult, GlmFamily, SolverParams};
use crate::linalg::{norm_inf, spd_solve};

pub fn full_fit(data: &Dataset, family: &GlmFamily, solver: &SolverParams) -> Result<FitResult> {
    let init = glm::initial_beta(data, family);
    glm::fit(data, family, &init, solver).map_err(|e| e.with_column_name(data.names()))
}

#[derive(Debug, Clone)]
pub struct DcFit {
    /// Aggregate coefficients with the summed block information.
    pub fit: FitResult,
    pub used_blocks: usize,
    pub dropped_blocks: usize,
}

/// Random near-equal blocks: a seeded shuffle dealt round-robin.
pub fn random_blocks(n: usize, blocks: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::with_capacity(n / blocks.max(1) + 1); blocks];
    for (pos, i) in perm.into_iter().enumerate() {
        out[pos % blocks].push(i);
    }
    out.iter_mut().for_each(|b| b.sort_unstable());
    out
}

/// Fit each random block, drop failures, and combine
/// `beta = (sum I_k)^{-1} sum I_k beta_k`. Block contributions are summed in
/// a canonical order so relabelling the blocks does not change the result.
pub fn dc_fit(data: &Dataset, family: &GlmFamily, blocks: usize, seed: u64, solver: &SolverParams) -> Result<DcFit> {
    if blocks == 0 || blocks > data.n() {
        return Err(Error::Config(format!("dc needs 1 <= blocks <= N, got {blocks}")));
    }
    let mut parts = Vec::with_capacity(blocks);
    let mut dropped = 0;
    for rows in random_blocks(data.n(), blocks, seed) {
        let sub = data.select_rows(&rows)?;
        let init = glm::initial_beta(&sub, family);
        match glm::fit(&sub, family, &init, solver) {
            Ok(f) if f.converged => parts.push(f),
            Ok(_) | Err(Error::Rank { .. }) | Err(Error::Domain(_)) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if parts.is_empty() {
        return Err(Error::Aggregation(format!("all {blocks} divide-and-conquer blocks failed")));
    }
    if dropped > 0 {
        log::warn!("divide-and-conquer dropped {dropped} of {blocks} blocks");
    }
    let used = parts.len();
    let mut fit = aggregate_fits(&parts).map_err(|e| e.with_column_name(data.names()))?;
    fit.score_norm = norm_inf(&glm::score(data, family, &fit.beta)?);
    Ok(DcFit {
        fit,
        used_blocks: used,
        dropped_blocks: dropped,
    })
}

/// `(sum I_k)^{-1} sum I_k beta_k`, summed in a canonical order so that
/// relabelling the inputs does not change the result.
pub fn aggregate_fits(fits: &[FitResult]) -> Result<FitResult> {
    let Some(first) = fits.first() else {
        return Err(Error::Aggregation("nothing to aggregate".into()));
    };
    let p = first.p();
    let mut parts: Vec<(&FitResult, Vec<f64>)> = fits
        .iter()
        .map(|f| {
            let ib = (0..p)
                .map(|i| (0..p).map(|j| f.information[i * p + j] * f.beta[j]).sum())
                .collect();
            (f, ib)
        })
        .collect();
    parts.sort_by(|a, b| {
        a.1.iter()
            .zip(&b.1)
            .chain(a.0.information.iter().zip(&b.0.information))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut info = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut iterations = 0;
    for (f, ib) in &parts {
        info.iter_mut().zip(&f.information).for_each(|(a, v)| *a += v);
        rhs.iter_mut().zip(ib).for_each(|(a, v)| *a += v);
        iterations = iterations.max(f.iterations);
    }
    let beta = spd_solve(&info, &rhs, p)?;
    Ok(FitResult {
        beta,
        iterations,
        converged: parts.iter().all(|(f, _)| f.converged),
        score_norm: f64::NAN,
        information: info,
    })
}
