//! Representative-point regression for partitioned data.
//!
//! A dataset split into blocks is summarised by one weighted point per block
//! (or two, when a block straddles the sign change of the linear predictor),
//! and the model is fitted on those K points instead of all N rows. Mean
//! representatives give an unbiased estimator for linear models; the
//! iterative score-matching representatives reproduce each block's score
//! contribution at the current estimate and track the full-data MLE for
//! GLMs.

pub mod baselines;
pub mod data;
pub mod distsim;
pub mod experiment;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod partition;
pub mod representatives;
pub mod simgen;

pub use data::{Dataset, Observations, WeightedData};
pub use error::{Error, Result};
pub use glm::{FitResult, GlmFamily, SolverParams};
