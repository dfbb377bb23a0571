//! Cross-fitted kernel estimates of the outcome and feature regressions and
//! the residuals built from them.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_config::{extract_config, extract_config_marked, ConfigError, DistanceMatrix, Graph, RootedConfig, TreatmentSlate};
use crate::localize::KernelKind;
use crate::walsh::WalshIndexSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NuisanceError {
    #[error("dataset arrays disagree: {0}")]
    Shape(String),
    #[error("need 2 <= K_cf <= N, got K_cf = {k} with N = {n}")]
    FoldCount { k: usize, n: usize },
    #[error("training set for fold {0} is empty")]
    EmptyTraining(usize),
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error("distance matrix has {got} rows, dataset has {expected} units")]
    DistanceShape { expected: usize, got: usize },
    #[error("residual value out of range at unit {unit}: {value}")]
    Range { unit: usize, value: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("csv: {0}")]
    Csv(String),
}

/// One network snapshot: graph, covariates, slates, outcomes and the rooted
/// configuration of every unit.
#[derive(Debug, Clone)]
pub struct Dataset {
    graph: Graph,
    covariates: Vec<Vec<f64>>,
    slates: Vec<TreatmentSlate>,
    outcomes: Vec<f64>,
    radius: usize,
    configs: Vec<RootedConfig>,
}

impl Dataset {
    pub fn new(
        graph: Graph,
        covariates: Vec<Vec<f64>>,
        slates: Vec<TreatmentSlate>,
        outcomes: Vec<f64>,
        radius: usize,
    ) -> Result<Self, NuisanceError> {
        let n = graph.num_nodes();
        if covariates.len() != n || slates.len() != n || outcomes.len() != n {
            return Err(NuisanceError::Shape(format!(
                "graph has {n} nodes; X has {}, T has {}, Y has {}",
                covariates.len(),
                slates.len(),
                outcomes.len()
            )));
        }
        let k = covariates[0].len();
        if covariates.iter().any(|x| x.len() != k) {
            return Err(NuisanceError::Shape("covariate rows differ in length".into()));
        }
        if covariates.iter().flatten().chain(&outcomes).any(|v| !v.is_finite()) {
            return Err(NuisanceError::Shape("non-finite covariate or outcome".into()));
        }
        let configs = (0..n)
            .map(|i| extract_config(&graph, &slates, i, radius))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            graph,
            covariates,
            slates,
            outcomes,
            radius,
            configs,
        })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }

    pub fn slates(&self) -> &[TreatmentSlate] {
        &self.slates
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn configs(&self) -> &[RootedConfig] {
        &self.configs
    }

    pub fn slate_dim(&self) -> usize {
        self.slates[0].dim()
    }

    /// Copy whose configs also carry an integer mark per vertex (for example a
    /// discretized covariate), compared by equality when matching is asked to.
    pub fn with_covariate_marks(&self, marks: &[i64]) -> Result<Self, NuisanceError> {
        let configs = (0..self.len())
            .map(|i| extract_config_marked(&self.graph, &self.slates, Some(marks), i, self.radius))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            configs,
            ..self.clone()
        })
    }

    /// Copy with outcomes replaced; configs are unchanged.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self, NuisanceError> {
        if outcomes.len() != self.len() {
            return Err(NuisanceError::Shape("outcome length".into()));
        }
        Ok(Self {
            outcomes,
            ..self.clone()
        })
    }
}

/// How training sets are formed for each held-out fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    /// Train on every unit outside the fold.
    #[default]
    Random,
    /// Additionally drop training units within graph distance `2R` of any
    /// unit in the held-out fold.
    EgoSeparated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    k: usize,
    fold_of: Vec<usize>,
}

/// Seeded balanced partition: shuffle the units, then deal them round-robin.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment, NuisanceError> {
    if k < 2 || k > n {
        return Err(NuisanceError::FoldCount { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &unit) in order.iter().enumerate() {
        fold_of[unit] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

impl FoldAssignment {
    pub fn num_folds(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, unit: usize) -> usize {
        self.fold_of[unit]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    /// Units used to fit the model applied to `fold`.
    pub fn training_units(&self, fold: usize, mode: FoldMode, data: &Dataset) -> Vec<usize> {
        match mode {
            FoldMode::Random => (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect(),
            FoldMode::EgoSeparated => {
                let held = self.members(fold);
                let near = data.graph().bfs_depths(&held, 2 * data.radius());
                (0..self.fold_of.len())
                    .filter(|&i| self.fold_of[i] != fold && near[i].is_none())
                    .collect()
            }
        }
    }
}

/// Walsh features of every unit's observed slate, row-major.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    index_set: WalshIndexSet,
    values: Vec<f64>,
}

impl FeatureTable {
    pub fn new(slates: &[TreatmentSlate], index_set: &WalshIndexSet) -> Result<Self, NuisanceError> {
        let d = index_set.len();
        let mut values = vec![0.0; slates.len() * d];
        for (row, s) in values.chunks_mut(d).zip(slates) {
            if s.dim() != index_set.p() {
                return Err(NuisanceError::Shape(format!(
                    "slate dimension {} vs dictionary dimension {}",
                    s.dim(),
                    index_set.p()
                )));
            }
            index_set.fill_features(s.neg_mask(), row);
        }
        Ok(Self {
            index_set: index_set.clone(),
            values,
        })
    }

    pub fn index_set(&self) -> &WalshIndexSet {
        &self.index_set
    }

    pub fn dim(&self) -> usize {
        self.index_set.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NuisanceParams {
    /// Bandwidth on configuration distance.
    pub b_mu: f64,
    /// Bandwidth on covariate distance; `None` uses the median pairwise
    /// distance of the training set.
    pub b_x: Option<f64>,
    /// When false the configuration kernel is dropped (covariates only).
    pub use_config: bool,
    pub fold_mode: FoldMode,
}

impl Default for NuisanceParams {
    fn default() -> Self {
        Self {
            b_mu: 0.25,
            b_x: None,
            use_config: true,
            fold_mode: FoldMode::Random,
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Median pairwise Euclidean distance among the given rows, or infinity when
/// it is zero or undefined (so the covariate kernel becomes flat).
pub fn median_pairwise_distance(rows: &[&[f64]]) -> f64 {
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in 0..i {
            d.push(euclid(rows[i], rows[j]));
        }
    }
    if d.is_empty() {
        return f64::INFINITY;
    }
    let mid = d.len() / 2;
    let m = if d.len() % 2 == 1 {
        *d.select_nth_unstable_by(mid, f64::total_cmp).1
    } else {
        let hi = *d.select_nth_unstable_by(mid, f64::total_cmp).1;
        let lo = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    if m > 0.0 {
        m
    } else {
        f64::INFINITY
    }
}

/// Product-kernel regression fitted on a training subset.
#[derive(Debug, Clone)]
pub struct NuisanceModel<'a> {
    data: &'a Dataset,
    features: &'a FeatureTable,
    distances: Option<&'a DistanceMatrix>,
    train: Vec<usize>,
    b_mu: f64,
    b_x: f64,
    mean_y: f64,
    mean_z: Vec<f64>,
}

/// Fits the outcome and feature regressions on `train`. Configuration
/// distances come from `distances` (required when `params.use_config`).
pub fn fit_nuisance<'a>(
    data: &'a Dataset,
    features: &'a FeatureTable,
    distances: Option<&'a DistanceMatrix>,
    train: &[usize],
    params: &NuisanceParams,
) -> Result<NuisanceModel<'a>, NuisanceError> {
    if train.is_empty() {
        return Err(NuisanceError::EmptyTraining(0));
    }
    if !(params.b_mu > 0.0) {
        return Err(NuisanceError::Bandwidth(params.b_mu));
    }
    let distances = if params.use_config {
        let m = distances.ok_or(NuisanceError::DistanceShape {
            expected: data.len(),
            got: 0,
        })?;
        if m.len() != data.len() {
            return Err(NuisanceError::DistanceShape {
                expected: data.len(),
                got: m.len(),
            });
        }
        Some(m)
    } else {
        None
    };
    let b_x = match params.b_x {
        Some(b) if b > 0.0 => b,
        Some(b) => return Err(NuisanceError::Bandwidth(b)),
        None => {
            let rows: Vec<&[f64]> = train.iter().map(|&j| data.covariates()[j].as_slice()).collect();
            median_pairwise_distance(&rows)
        }
    };
    let d = features.dim();
    let mut mean_z = vec![0.0; d];
    let mut mean_y = 0.0;
    for &j in train {
        mean_y += data.outcomes()[j];
        for (m, z) in mean_z.iter_mut().zip(features.row(j)) {
            *m += z;
        }
    }
    let n = train.len() as f64;
    mean_y /= n;
    for m in &mut mean_z {
        *m /= n;
    }
    mean_z[0] = 1.0;
    Ok(NuisanceModel {
        data,
        features,
        distances,
        train: train.to_vec(),
        b_mu: params.b_mu,
        b_x,
        mean_y,
        mean_z,
    })
}

impl NuisanceModel<'_> {
    pub fn bandwidth_x(&self) -> f64 {
        self.b_x
    }

    pub fn training_units(&self) -> &[usize] {
        &self.train
    }

    /// Kernel mass of training unit `j` at a query given by its config
    /// distance and covariate vector.
    fn mass(&self, config_dist: f64, xq: &[f64], j: usize) -> f64 {
        let kg = if self.distances.is_some() {
            KernelKind::Epanechnikov.eval(config_dist / self.b_mu)
        } else {
            1.0
        };
        if kg == 0.0 {
            return 0.0;
        }
        kg * KernelKind::Epanechnikov.eval(euclid(xq, &self.data.covariates()[j]) / self.b_x)
    }

    fn aggregate(&self, masses: impl Iterator<Item = (usize, f64)>) -> (f64, Vec<f64>) {
        let d = self.features.dim();
        let mut total = 0.0;
        let mut y = 0.0;
        let mut z = vec![0.0; d];
        for (j, w) in masses {
            if w == 0.0 {
                continue;
            }
            total += w;
            y += w * self.data.outcomes()[j];
            for (acc, f) in z.iter_mut().zip(self.features.row(j)) {
                *acc += w * f;
            }
        }
        if total <= 0.0 {
            return (self.mean_y, self.mean_z.clone());
        }
        for v in z.iter_mut() {
            *v = (*v / total).clamp(-1.0, 1.0);
        }
        z[0] = 1.0;
        (y / total, z)
    }

    /// Predictions `(mu_hat, m_hat)` at the observed config and covariates of
    /// dataset unit `i`.
    pub fn predict_unit(&self, i: usize) -> (f64, Vec<f64>) {
        let xq = &self.data.covariates()[i];
        let dist = |j: usize| self.distances.map_or(0.0, |m| m.get(i, j));
        self.aggregate(self.train.iter().map(|&j| (j, self.mass(dist(j), xq, j))))
    }

    /// Predictions at an arbitrary query given its config distances to every
    /// dataset unit (ignored when the model does not use configs).
    pub fn predict_at(&self, config_distances: &[f64], x: &[f64]) -> (f64, Vec<f64>) {
        self.aggregate(self.train.iter().map(|&j| (j, self.mass(config_distances[j], x, j))))
    }
}

/// Residualized outcomes and features for every unit, with fold bookkeeping.
#[derive(Debug, Clone)]
pub struct ResidualPanel {
    y_resid: Vec<f64>,
    z_resid: Vec<f64>,
    index_set: WalshIndexSet,
    folds: FoldAssignment,
}

impl ResidualPanel {
    /// Builds a panel from explicit residuals; feature residuals must lie in
    /// `[-2, 2]`.
    pub fn new(y_resid: Vec<f64>, z_resid: Vec<Vec<f64>>, index_set: WalshIndexSet, folds: FoldAssignment) -> Result<Self, NuisanceError> {
        let n = y_resid.len();
        let d = index_set.len();
        if z_resid.len() != n || folds.len() != n || z_resid.iter().any(|r| r.len() != d) {
            return Err(NuisanceError::Shape("residual panel dimensions".into()));
        }
        for (unit, row) in z_resid.iter().enumerate() {
            if let Some(&value) = row.iter().find(|v| !(v.abs() <= 2.0)) {
                return Err(NuisanceError::Range { unit, value });
            }
        }
        if let Some(unit) = y_resid.iter().position(|v| !v.is_finite()) {
            return Err(NuisanceError::Range {
                unit,
                value: y_resid[unit],
            });
        }
        Ok(Self {
            y_resid,
            z_resid: z_resid.concat(),
            index_set,
            folds,
        })
    }

    /// Residuals `Y - mu_hat` and `Z(T) - m_hat` from per-unit nuisance values.
    pub fn from_nuisance(
        outcomes: &[f64],
        features: &FeatureTable,
        mu_hat: &[f64],
        m_hat: &[Vec<f64>],
        folds: FoldAssignment,
    ) -> Result<Self, NuisanceError> {
        let y = outcomes.iter().zip(mu_hat).map(|(y, m)| y - m).collect();
        let z = m_hat
            .iter()
            .enumerate()
            .map(|(i, m)| features.row(i).iter().zip(m).map(|(z, m)| z - m).collect())
            .collect();
        Self::new(y, z, features.index_set().clone(), folds)
    }

    pub fn len(&self) -> usize {
        self.y_resid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_resid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.index_set.len()
    }

    pub fn index_set(&self) -> &WalshIndexSet {
        &self.index_set
    }

    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    pub fn y_resid(&self) -> &[f64] {
        &self.y_resid
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y_resid[i]
    }

    pub fn z(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.z_resid[i * d..(i + 1) * d]
    }

    /// CSV with columns `unit,fold,y_resid,z_0,...`; `z_k` follows the
    /// dictionary order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), NuisanceError> {
        let err = |e: csv::Error| NuisanceError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["unit".to_string(), "fold".into(), "y_resid".into()];
        header.extend((0..self.dim()).map(|k| format!("z_{k}")));
        w.write_record(&header).map_err(err)?;
        for i in 0..self.len() {
            let mut rec = vec![i.to_string(), self.folds.fold_of(i).to_string(), self.y_resid[i].to_string()];
            rec.extend(self.z(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| NuisanceError::Csv(e.to_string()))
    }
}

/// Residuals where each unit's nuisances come from a model trained without
/// its fold.
pub fn crossfit_residuals(
    data: &Dataset,
    features: &FeatureTable,
    distances: Option<&DistanceMatrix>,
    folds: &FoldAssignment,
    params: &NuisanceParams,
) -> Result<ResidualPanel, NuisanceError> {
    if folds.len() != data.len() {
        return Err(NuisanceError::Shape("fold assignment length".into()));
    }
    let n = data.len();
    let mut mu_hat = vec![0.0; n];
    let mut m_hat = vec![Vec::new(); n];
    for fold in 0..folds.num_folds() {
        let train = folds.training_units(fold, params.fold_mode, data);
        if train.is_empty() {
            return Err(NuisanceError::EmptyTraining(fold));
        }
        let model = fit_nuisance(data, features, distances, &train, params)?;
        let held = folds.members(fold);
        let preds: Vec<(f64, Vec<f64>)> = held.par_iter().map(|&i| model.predict_unit(i)).collect();
        for (&i, (mu, m)) in held.iter().zip(preds) {
            mu_hat[i] = mu;
            m_hat[i] = m;
        }
    }
    ResidualPanel::from_nuisance(data.outcomes(), features, &mu_hat, &m_hat, folds.clone())
}
