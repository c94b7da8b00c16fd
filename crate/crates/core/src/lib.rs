//! Temporal group LASSO for longitudinal outcomes, with classical
//! regularized baselines, cross-validated tuning and a synthetic
//! dose-response cohort generator.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod matrix;
pub mod model_selection;
pub mod penalties;
pub mod report;
pub mod simulation;
pub mod solvers;

pub use dataset::{standardize, LongitudinalDataset, StandardizationParams};
pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use penalties::{build_difference_operator, PenaltyConfig, TemporalDifferenceOperator};
pub use solvers::{
    fit_elastic_net, fit_group_lasso, fit_lasso, fit_ols, fit_ridge, fit_tgl, predict,
    selected_features, FitResult, GroupSpec, Method, SolverConfig,
};
