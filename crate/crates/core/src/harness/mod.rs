//! Monte Carlo sweeps, summaries and file formats.

mod io;
mod montecarlo;
mod summary;

pub use io::{
    read_results_csv, write_json_mirror, write_plot_csv, write_results_csv, write_summary_csv, DatasetBundle, GraphDump,
    TruthDump, RESULTS_HEADER,
};
pub use montecarlo::{cell_seed, run_montecarlo, splitmix64, EstimatorKind, FailureHook, McOptions, McResult};
pub use summary::{quantile_sorted, sample_sd, summarize, McSummary};

use thiserror::Error;

use crate::graph_config::ConfigError;
use crate::nuisance::NuisanceError;
use crate::walsh::WalshError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Nuisance(#[from] NuisanceError),
    #[error(transparent)]
    Walsh(#[from] WalshError),
}
