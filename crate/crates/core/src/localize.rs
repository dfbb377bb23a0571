//! Kernel localization weights over configuration space.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_config::{ConfigError, MatchOptions, PreparedConfig, RootedConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizeError {
    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
    #[error("no units to weight")]
    Empty,
    #[error("weight vector has no positive mass")]
    ZeroWeights,
    #[error("weight {index} is negative or not finite: {value}")]
    BadWeight { index: usize, value: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `1{u <= 1}`
    Indicator,
    /// `max(0, 1 - u^2)`
    #[default]
    Epanechnikov,
}

impl KernelKind {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelKind::Indicator => f64::from(u8::from(u <= 1.0)),
            KernelKind::Epanechnikov => (1.0 - u * u).max(0.0),
        }
    }
}

/// Normalized nonnegative weights with cached Kish effective sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalWeights {
    weights: Vec<f64>,
    n_eff: f64,
    support_count: usize,
    bandwidth_used: f64,
    fallback_used: bool,
}

impl LocalWeights {
    /// Normalizes arbitrary nonnegative masses.
    pub fn from_unnormalized(raw: Vec<f64>, bandwidth_used: f64, fallback_used: bool) -> Result<Self, LocalizeError> {
        if raw.is_empty() {
            return Err(LocalizeError::Empty);
        }
        if let Some((index, &value)) = raw.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(LocalizeError::BadWeight { index, value });
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(LocalizeError::ZeroWeights);
        }
        let weights: Vec<f64> = raw.into_iter().map(|w| w / total).collect();
        let n_eff = effective_sample_size(&weights)?;
        let support_count = weights.iter().filter(|&&w| w > 0.0).count();
        Ok(Self {
            weights,
            n_eff,
            support_count,
            bandwidth_used,
            fallback_used,
        })
    }

    pub fn uniform(n: usize) -> Result<Self, LocalizeError> {
        Self::from_unnormalized(vec![1.0; n], f64::INFINITY, false)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_eff(&self) -> f64 {
        self.n_eff
    }

    pub fn support_count(&self) -> usize {
        self.support_count
    }

    pub fn bandwidth_used(&self) -> f64 {
        self.bandwidth_used
    }

    pub fn fallback_used(&self) -> bool {
        self.fallback_used
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices with strictly positive weight.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(j, _)| j)
    }
}

/// Kish size `1 / sum w^2` of a normalized weight vector.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64, LocalizeError> {
    let ss: f64 = weights.iter().map(|w| w * w).sum();
    if ss <= 0.0 {
        return Err(LocalizeError::ZeroWeights);
    }
    Ok(1.0 / ss)
}

/// Weights from precomputed distances to the target. When every kernel value
/// vanishes, falls back to uniform weights on the `ceil(sqrt(N))` nearest
/// units (ties by ascending index).
pub fn kernel_weights_from_distances(distances: &[f64], kernel: KernelKind, bandwidth: f64) -> Result<LocalWeights, LocalizeError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(LocalizeError::Bandwidth(bandwidth));
    }
    if distances.is_empty() {
        return Err(LocalizeError::Empty);
    }
    let raw: Vec<f64> = distances.iter().map(|&d| kernel.eval(d / bandwidth)).collect();
    if raw.iter().any(|&w| w > 0.0) {
        return LocalWeights::from_unnormalized(raw, bandwidth, false);
    }
    let n = distances.len();
    let k = (n as f64).sqrt().ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    let mut raw = vec![0.0; n];
    for &j in order.iter().take(k) {
        raw[j] = 1.0;
    }
    LocalWeights::from_unnormalized(raw, bandwidth, true)
}

/// Weights of `configs` around `target` under the radius-`radius` distance.
pub fn kernel_weights(
    configs: &[RootedConfig],
    target: &RootedConfig,
    kernel: KernelKind,
    bandwidth: f64,
    radius: usize,
    opts: &MatchOptions,
) -> Result<LocalWeights, LocalizeError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(LocalizeError::Bandwidth(bandwidth));
    }
    if configs.is_empty() {
        return Err(LocalizeError::Empty);
    }
    let t = PreparedConfig::new(target, radius, opts)?;
    let distances = configs
        .iter()
        .map(|c| {
            if c.slate_dim() != target.slate_dim() {
                return Err(ConfigError::DimensionMismatch {
                    left: target.slate_dim(),
                    right: c.slate_dim(),
                });
            }
            Ok(PreparedConfig::new(c, radius, opts)?.distance(&t))
        })
        .collect::<Result<Vec<f64>, ConfigError>>()?;
    kernel_weights_from_distances(&distances, kernel, bandwidth)
}

/// Diagnostic dump with columns `unit,distance,weight`.
pub fn write_weights_csv<W: Write>(writer: W, distances: &[f64], weights: &LocalWeights) -> Result<(), LocalizeError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| LocalizeError::Csv(e.to_string());
    w.write_record(["unit", "distance", "weight"]).map_err(err)?;
    for (j, (d, wt)) in distances.iter().zip(weights.weights()).enumerate() {
        w.write_record([j.to_string(), d.to_string(), wt.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| LocalizeError::Csv(e.to_string()))
}
