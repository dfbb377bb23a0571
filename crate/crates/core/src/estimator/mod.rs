//! Localized weighted Lasso, inverse-direction solve, debiased contrasts and
//! the end-to-end per-unit pipeline.

mod clime;
mod contrast;
mod lasso;
mod pipeline;

pub use clime::{clime_direction, AdmmOptions, DebiasDirection};
pub use contrast::{
    debiased_contrast, hamming_bound, normal_quantile, plugin_contrast_t, structural_contrasts, ContrastReport,
    Diagnostics,
};
pub use lasso::{
    lasso_objective, select_lambda, weighted_cross, weighted_gram, weighted_lasso, weighted_lasso_with, weighted_median,
    weighted_score, LambdaChoice, LassoFit, LassoOptions, LAMBDA_FLOOR, MAD_SCALE,
};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineContext, PipelineError, Stage};

use thiserror::Error;

use crate::graph_config::ConfigError;
use crate::localize::LocalizeError;
use crate::nuisance::NuisanceError;
use crate::walsh::WalshError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("no feasible inverse direction up to eta = {eta} (best gap {gap})")]
    Infeasible { eta: f64, gap: f64 },
    #[error("contrast {contrast} is not locally identified: no feasible inverse direction up to eta = {eta} (best gap {gap})")]
    Unidentified { contrast: String, eta: f64, gap: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Localize(#[from] LocalizeError),
    #[error(transparent)]
    Nuisance(#[from] NuisanceError),
    #[error(transparent)]
    Walsh(#[from] WalshError),
}
