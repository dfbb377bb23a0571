//! Per-unit estimation: weights, cross-fitted residuals, localized Lasso,
//! inverse direction and debiased interval.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    clime_direction, debiased_contrast, hamming_bound, select_lambda, structural_contrasts, weighted_gram,
    weighted_lasso_with, AdmmOptions, ContrastReport, EstimatorError, LassoFit, LassoOptions,
};
use crate::graph_config::{DistanceMatrix, MatchOptions, RootMarkPolicy, TreatmentSlate};
use crate::localize::{kernel_weights_from_distances, KernelKind, LocalWeights};
use crate::nuisance::{crossfit_residuals, make_folds, Dataset, FeatureTable, FoldMode, NuisanceParams, ResidualPanel};
use crate::walsh::{contrast_direction, WalshIndexSet};

/// Every tuning constant of the pipeline. Field names double as config-file
/// keys and CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Config radius used in distances; at most the dataset radius.
    #[serde(alias = "R")]
    pub radius: Option<usize>,
    pub kernel: KernelKind,
    #[serde(alias = "b_G")]
    pub b_g: f64,
    #[serde(alias = "K_cf")]
    pub k_cf: usize,
    pub b_mu: f64,
    pub b_x: Option<f64>,
    pub fold_mode: FoldMode,
    pub c_lambda: f64,
    pub c_eta: f64,
    /// Largest interaction order in the dictionary; `None` means full.
    pub order_cap: Option<usize>,
    pub seed: u64,
    pub level: f64,
    pub max_inflations: usize,
    /// Lipschitz constant for the Hamming fallback bound.
    pub lipschitz: Option<f64>,
    pub root_marks: RootMarkPolicy,
    pub use_covariate_marks: bool,
    pub max_ball_size: usize,
    /// When false, every unit gets equal weight.
    pub localize: bool,
    /// When false, nuisances use covariates only.
    pub use_config_nuisance: bool,
    pub max_sweeps: usize,
    pub coef_tol: f64,
    pub kkt_tol: f64,
    pub admm_rho: f64,
    pub admm_tol: f64,
    pub admm_max_iter: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let lasso = LassoOptions::default();
        let admm = AdmmOptions::default();
        let m = MatchOptions::default();
        Self {
            radius: None,
            kernel: KernelKind::Epanechnikov,
            b_g: 0.35,
            k_cf: 5,
            b_mu: 0.25,
            b_x: None,
            fold_mode: FoldMode::Random,
            c_lambda: 1.0,
            c_eta: 1.0,
            order_cap: None,
            seed: 0,
            level: 0.95,
            max_inflations: 4,
            lipschitz: None,
            root_marks: m.root_marks,
            use_covariate_marks: m.use_covariate_marks,
            max_ball_size: m.max_ball_size,
            localize: true,
            use_config_nuisance: true,
            max_sweeps: lasso.max_sweeps,
            coef_tol: lasso.coef_tol,
            kkt_tol: lasso.kkt_tol,
            admm_rho: admm.rho,
            admm_tol: admm.tol,
            admm_max_iter: admm.max_iter,
        }
    }
}

impl PipelineConfig {
    pub fn match_options(&self) -> MatchOptions {
        MatchOptions {
            root_marks: self.root_marks,
            use_covariate_marks: self.use_covariate_marks,
            max_ball_size: self.max_ball_size,
        }
    }

    pub fn lasso_options(&self) -> LassoOptions {
        LassoOptions {
            max_sweeps: self.max_sweeps,
            coef_tol: self.coef_tol,
            kkt_tol: self.kkt_tol,
        }
    }

    pub fn admm_options(&self) -> AdmmOptions {
        AdmmOptions {
            rho: self.admm_rho,
            tol: self.admm_tol,
            max_iter: self.admm_max_iter,
            ..AdmmOptions::default()
        }
    }

    pub fn nuisance_params(&self) -> NuisanceParams {
        NuisanceParams {
            b_mu: self.b_mu,
            b_x: self.b_x,
            use_config: self.use_config_nuisance,
            fold_mode: self.fold_mode,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads a `.toml` file as TOML and anything else as JSON.
    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Distances,
    Weights,
    Nuisance,
    Lambda,
    Lasso,
    Gram,
    Direction,
    Debias,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Validate => "validate",
            Stage::Distances => "distances",
            Stage::Weights => "weights",
            Stage::Nuisance => "nuisance",
            Stage::Lambda => "lambda",
            Stage::Lasso => "lasso",
            Stage::Gram => "gram",
            Stage::Direction => "direction",
            Stage::Debias => "debias",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: EstimatorError,
    /// `L * d_H(t, t')` when the direction solve failed and a Lipschitz
    /// constant was configured.
    pub hamming_half_width: Option<f64>,
}

fn at<E: Into<EstimatorError>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        source: e.into(),
        hamming_half_width: None,
    }
}

fn invalid(msg: String) -> PipelineError {
    at::<EstimatorError>(Stage::Validate)(EstimatorError::Parameter(msg))
}

/// Shared, target-independent state: dictionary, features, distances and
/// cross-fitted residuals. Per-unit estimates reuse it.
#[derive(Debug, Clone)]
pub struct PipelineContext<'a> {
    data: &'a Dataset,
    config: PipelineConfig,
    radius: usize,
    index_set: WalshIndexSet,
    distances: Option<DistanceMatrix>,
    panel: ResidualPanel,
}

impl<'a> PipelineContext<'a> {
    pub fn new(data: &'a Dataset, config: &PipelineConfig) -> Result<Self, PipelineError> {
        Self::with_distances(data, config, None)
    }

    /// As [`PipelineContext::new`], reusing a precomputed distance matrix.
    pub fn with_distances(
        data: &'a Dataset,
        config: &PipelineConfig,
        distances: Option<DistanceMatrix>,
    ) -> Result<Self, PipelineError> {
        let n = data.len();
        if n < 2 {
            return Err(invalid(format!("cross-fitting needs at least 2 units, dataset has {n}")));
        }
        let radius = config.radius.unwrap_or(data.radius());
        if radius > data.radius() {
            return Err(invalid(format!(
                "radius {radius} exceeds dataset config radius {}",
                data.radius()
            )));
        }
        if !(config.level > 0.0 && config.level < 1.0) {
            return Err(invalid(format!("level must be in (0, 1), got {}", config.level)));
        }
        let p = data.slate_dim();
        let index_set = WalshIndexSet::new(p, config.order_cap.unwrap_or(p)).map_err(at(Stage::Validate))?;
        let need_distances = config.localize || config.use_config_nuisance;
        let distances = match distances {
            Some(m) if m.len() == n => Some(m),
            Some(m) => {
                return Err(invalid(format!("distance matrix has {} rows, dataset has {n}", m.len())));
            }
            None if need_distances => Some(
                DistanceMatrix::compute(data.configs(), radius, &config.match_options()).map_err(at(Stage::Distances))?,
            ),
            None => None,
        };
        let features = FeatureTable::new(data.slates(), &index_set).map_err(at(Stage::Nuisance))?;
        let folds = make_folds(n, config.k_cf, config.seed).map_err(at(Stage::Nuisance))?;
        let nuisance_distances = if config.use_config_nuisance { distances.as_ref() } else { None };
        let panel = crossfit_residuals(data, &features, nuisance_distances, &folds, &config.nuisance_params())
            .map_err(at(Stage::Nuisance))?;
        Ok(Self {
            data,
            config: config.clone(),
            radius,
            index_set,
            distances,
            panel,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn index_set(&self) -> &WalshIndexSet {
        &self.index_set
    }

    pub fn panel(&self) -> &ResidualPanel {
        &self.panel
    }

    pub fn distances(&self) -> Option<&DistanceMatrix> {
        self.distances.as_ref()
    }

    /// Localization weights centered at the config of `unit`.
    pub fn weights_for_unit(&self, unit: usize) -> Result<LocalWeights, PipelineError> {
        if unit >= self.data.len() {
            return Err(invalid(format!("unit {unit} out of range for {} units", self.data.len())));
        }
        match &self.distances {
            Some(m) if self.config.localize => {
                kernel_weights_from_distances(m.row(unit), self.config.kernel, self.config.b_g).map_err(at(Stage::Weights))
            }
            _ => LocalWeights::uniform(self.data.len()).map_err(at(Stage::Weights)),
        }
    }

    /// Localized Lasso under the given weights, with the penalty set by rule.
    pub fn fit(&self, weights: &LocalWeights) -> Result<(LassoFit, bool), PipelineError> {
        let choice = select_lambda(&self.panel, weights, self.config.c_lambda).map_err(at(Stage::Lambda))?;
        let mut fit = weighted_lasso_with(&self.panel, weights, choice.lambda, None, &self.config.lasso_options())
            .map_err(at(Stage::Lasso))?;
        fit.sigma_hat = choice.sigma_hat;
        Ok((fit, choice.degenerate))
    }

    /// Debiased own-slate contrast `t -> t2` at `unit`.
    pub fn estimate(&self, unit: usize, t: &TreatmentSlate, t2: &TreatmentSlate) -> Result<ContrastReport, PipelineError> {
        let weights = self.weights_for_unit(unit)?;
        self.estimate_with_weights(&weights, t, t2)
    }

    pub fn estimate_with_weights(
        &self,
        weights: &LocalWeights,
        t: &TreatmentSlate,
        t2: &TreatmentSlate,
    ) -> Result<ContrastReport, PipelineError> {
        let v = contrast_direction(t, t2, &self.index_set).map_err(at(Stage::Validate))?;
        let (fit, sigma_degenerate) = self.fit(weights)?;
        let gram = weighted_gram(&self.panel, weights).map_err(at(Stage::Gram))?;
        let d = self.index_set.len() as f64;
        let eta = self.config.c_eta * (d.ln() / weights.n_eff()).sqrt();
        // A one-element dictionary has ln d = 0; keep eta positive.
        let eta = eta.max(1e-12);
        let dir = clime_direction(&gram, &v, eta, self.config.max_inflations, &self.config.admm_options()).map_err(
            |e| {
                let source = match e {
                    EstimatorError::Infeasible { eta, gap } => EstimatorError::Unidentified {
                        contrast: format!("{t} -> {t2}"),
                        eta,
                        gap,
                    },
                    other => other,
                };
                PipelineError {
                    stage: Stage::Direction,
                    source,
                    hamming_half_width: self.config.lipschitz.and_then(|l| hamming_bound(l, t, t2).ok()),
                }
            },
        )?;
        let mut report =
            debiased_contrast(&fit, &dir, &self.panel, weights, &v, self.config.level).map_err(at(Stage::Debias))?;
        report.diagnostics.sigma_degenerate = sigma_degenerate;
        Ok(report)
    }

    /// Plug-in structural and joint contrasts between the configs of `unit`
    /// and `other`, holding slates `t` (and `t2` for the joint contrast).
    pub fn structural(
        &self,
        unit: usize,
        other: usize,
        t: &TreatmentSlate,
        t2: &TreatmentSlate,
    ) -> Result<(f64, f64), PipelineError> {
        let (fit_g, _) = self.fit(&self.weights_for_unit(unit)?)?;
        let (fit_g2, _) = self.fit(&self.weights_for_unit(other)?)?;
        structural_contrasts(&fit_g, &fit_g2, t, t2).map_err(at(Stage::Debias))
    }
}

/// One-shot run for a single unit and contrast.
pub fn run_pipeline(
    data: &Dataset,
    unit: usize,
    t: &TreatmentSlate,
    t2: &TreatmentSlate,
    config: &PipelineConfig,
) -> Result<ContrastReport, PipelineError> {
    PipelineContext::new(data, config)?.estimate(unit, t, t2)
}
