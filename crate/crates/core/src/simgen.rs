//! Synthetic networks with combinatorial treatments and known local Walsh
//! coefficients, plus the oracle and graph-agnostic comparison estimators.
//!
//! Outcome model: a sparse base vector `beta` over subsets of order <= 2 is
//! scaled per unit by `1 + strength * rho_i`, where `rho_i` is the share of
//! neighbors with the first slate coordinate on (0.5 for isolated units).
//! `Y_i = <alpha_i, Z(T_i)> + eps_i`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{normal_quantile, ContrastReport, Diagnostics, PipelineConfig, PipelineError, PipelineContext};
use crate::graph_config::{DistanceMatrix, Graph, PreparedConfig, TreatmentSlate};
use crate::localize::{kernel_weights_from_distances, LocalWeights};
use crate::nuisance::Dataset;
use crate::walsh::{contrast_direction, walsh_features, WalshCoeffs, WalshIndexSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("unknown profile name {0:?}")]
    UnknownProfile(String),
    #[error("ground truth does not match dataset: {0}")]
    Mismatch(String),
    #[error("oracle solve failed: {0}")]
    Oracle(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Parameters of the data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpProfile {
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    pub p: usize,
    pub avg_degree: f64,
    pub s_active: usize,
    pub noise_sd: f64,
    pub interference_strength: f64,
    #[serde(rename = "R", alias = "radius")]
    pub radius: usize,
    pub true_contrast: f64,
    pub seed: u64,
    /// Dimension of the Gaussian covariates.
    pub covariate_dim: usize,
}

impl Default for DgpProfile {
    fn default() -> Self {
        Self::fig2()
    }
}

impl DgpProfile {
    /// Sparse, moderately dense network: N = 500, p = 10, degree 8, three
    /// active terms, noise sd 0.5, zero designated contrast.
    pub fn fig2() -> Self {
        Self {
            n: 500,
            p: 10,
            avg_degree: 8.0,
            s_active: 3,
            noise_sd: 0.5,
            interference_strength: 1.0,
            radius: 1,
            true_contrast: 0.0,
            seed: 0,
            covariate_dim: 10,
        }
    }

    /// Denser coefficient vector (20 active terms).
    pub fn appendix_a() -> Self {
        Self {
            s_active: 20,
            ..Self::fig2()
        }
    }

    pub fn named(name: &str) -> Result<Self, SimError> {
        match name {
            "fig2" => Ok(Self::fig2()),
            "appendixA" | "appendix_a" => Ok(Self::appendix_a()),
            other => Err(SimError::UnknownProfile(other.to_string())),
        }
    }

    /// Pipeline defaults paired with a named profile.
    pub fn pipeline_defaults(name: &str) -> Result<PipelineConfig, SimError> {
        match name {
            "fig2" => Ok(PipelineConfig::default()),
            "appendixA" | "appendix_a" => Ok(PipelineConfig {
                b_g: 2.0,
                ..PipelineConfig::default()
            }),
            other => Err(SimError::UnknownProfile(other.to_string())),
        }
    }

    /// Number of base subsets available besides the contrast-carrying pair.
    fn free_subsets(&self) -> usize {
        let q = self.p - 1;
        q + q * q.saturating_sub(1) / 2
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Profile(m));
        if self.p == 0 || self.p > 64 {
            return bad(format!("p = {} outside [1, 64]", self.p));
        }
        if self.n < 2 {
            return bad(format!("N = {} must be at least 2", self.n));
        }
        if !(self.avg_degree > 0.0 && self.avg_degree <= (self.n - 1) as f64) {
            return bad(format!("avg_degree = {} outside (0, N-1]", self.avg_degree));
        }
        if self.s_active == 0 {
            return bad("s_active must be at least 1".into());
        }
        if self.s_active >= 2 && self.p < 2 {
            return bad("s_active >= 2 needs p >= 2".into());
        }
        if self.s_active > 2 && self.s_active - 2 > self.free_subsets() {
            return bad(format!(
                "s_active = {} exceeds the {} available order-<=2 subsets",
                self.s_active,
                self.free_subsets() + 2
            ));
        }
        if !(self.noise_sd >= 0.0) || !(self.interference_strength >= 0.0) || !self.true_contrast.is_finite() {
            return bad("noise_sd and interference_strength must be nonnegative".into());
        }
        Ok(())
    }
}

/// Seeded Erdős–Rényi graph with edge probability `avg_degree / (N - 1)`.
pub fn generate_graph(n: usize, avg_degree: f64, seed: u64) -> Result<Graph, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    graph_from_rng(n, avg_degree, &mut rng)
}

fn graph_from_rng(n: usize, avg_degree: f64, rng: &mut ChaCha8Rng) -> Result<Graph, SimError> {
    if n < 2 || !(avg_degree > 0.0 && avg_degree <= (n - 1) as f64) {
        return Err(SimError::Profile(format!("avg_degree {avg_degree} invalid for N = {n}")));
    }
    let q = avg_degree / (n - 1) as f64;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < q {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, &edges).map_err(|e| SimError::Profile(e.to_string()))
}

/// Known per-unit coefficients and the pieces of each outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub alpha_of_unit: Vec<WalshCoeffs>,
    pub noiseless_outcomes: Vec<f64>,
    pub noise: Vec<f64>,
    /// Base coefficients as `(subset mask, value)`.
    pub base: Vec<(u64, f64)>,
    /// Treated-neighbor share of each unit.
    pub exposure: Vec<f64>,
    pub dgp: DgpProfile,
}

impl GroundTruth {
    pub fn index_set(&self) -> &WalshIndexSet {
        self.alpha_of_unit[0].index_set()
    }
}

/// Share of neighbors whose first slate coordinate is +1; 0.5 when isolated.
pub fn exposure(graph: &Graph, slates: &[TreatmentSlate], unit: usize) -> f64 {
    let nb = graph.neighbors(unit);
    if nb.is_empty() {
        return 0.5;
    }
    nb.iter().map(|&j| f64::from(slates[j].get(0) + 1) / 2.0).sum::<f64>() / nb.len() as f64
}

/// Dictionary holding the true coefficients (interaction order <= 2).
pub fn truth_index_set(p: usize) -> WalshIndexSet {
    WalshIndexSet::new(p, p.min(2)).expect("p validated")
}

fn draw_base(profile: &DgpProfile, rng: &mut ChaCha8Rng) -> Vec<(u64, f64)> {
    let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
    if profile.s_active == 1 {
        return vec![(1, profile.true_contrast / 2.0)];
    }
    let b0 = sign(rng);
    let partner = rng.random_range(1..profile.p);
    let mut base = vec![(1u64, b0), (1 | 1 << partner, profile.true_contrast / 2.0 - b0)];
    // Remaining terms: subsets of order 1 or 2 avoiding the first coordinate.
    let q = profile.p - 1;
    let mut pool: Vec<u64> = (1..=q).map(|a| 1u64 << a).collect();
    for a in 1..=q {
        for b in (a + 1)..=q {
            pool.push(1 << a | 1 << b);
        }
    }
    for k in sample(rng, pool.len(), profile.s_active - 2) {
        base.push((pool[k], sign(rng)));
    }
    base.sort_unstable_by_key(|&(m, _)| (m.count_ones(), m));
    base
}

/// Draws graph, covariates, slates, coefficients and outcomes from one seed.
/// Draw order: graph edges, base coefficients, covariates, slates, noise.
pub fn generate_dataset(profile: &DgpProfile) -> Result<(Dataset, GroundTruth), SimError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let graph = graph_from_rng(profile.n, profile.avg_degree, &mut rng)?;
    let base = draw_base(profile, &mut rng);
    let n = profile.n;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..profile.covariate_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let slates: Vec<TreatmentSlate> = (0..n)
        .map(|_| {
            let mask = if profile.p == 64 { rng.random::<u64>() } else { rng.random_range(0..1u64 << profile.p) };
            TreatmentSlate::from_neg_mask(profile.p, mask).expect("valid dimension")
        })
        .collect();
    let noise: Vec<f64> = if profile.noise_sd > 0.0 {
        let dist = Normal::new(0.0, profile.noise_sd).map_err(|e| SimError::Profile(e.to_string()))?;
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    } else {
        vec![0.0; n]
    };
    let set = truth_index_set(profile.p);
    let mut alpha_of_unit = Vec::with_capacity(n);
    let mut noiseless = Vec::with_capacity(n);
    let mut exp = Vec::with_capacity(n);
    for i in 0..n {
        let rho = exposure(&graph, &slates, i);
        let scale = 1.0 + profile.interference_strength * rho;
        let terms: Vec<(u64, f64)> = base.iter().map(|&(m, b)| (m, b * scale)).collect();
        let alpha = WalshCoeffs::from_sparse(set.clone(), &terms).expect("order <= 2 subsets");
        let z = walsh_features(&slates[i], &set).expect("matching dimension");
        noiseless.push(alpha.dot(&z).expect("matching length"));
        alpha_of_unit.push(alpha);
        exp.push(rho);
    }
    let y: Vec<f64> = noiseless.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let data = Dataset::new(graph, x, slates, y, profile.radius).map_err(|e| SimError::Profile(e.to_string()))?;
    Ok((
        data,
        GroundTruth {
            alpha_of_unit,
            noiseless_outcomes: noiseless,
            noise,
            base,
            exposure: exp,
            dgp: profile.clone(),
        },
    ))
}

/// Base slate with only the first coordinate off, and the all-on slate.
pub fn default_contrast(p: usize) -> (TreatmentSlate, TreatmentSlate) {
    let t2 = TreatmentSlate::constant(p, 1).expect("valid dimension");
    let t = t2.with(0, -1).expect("p >= 1");
    (t, t2)
}

/// Lowest-index unit with at least one neighbor (0 if the graph is empty).
pub fn default_target_unit(graph: &Graph) -> usize {
    (0..graph.num_nodes()).find(|&i| graph.degree(i) > 0).unwrap_or(0)
}

/// `<alpha(g_unit), Z(t2) - Z(t)>` on the true coefficients.
pub fn true_contrast_value(truth: &GroundTruth, unit: usize, t: &TreatmentSlate, t2: &TreatmentSlate) -> Result<f64, SimError> {
    let alpha = truth
        .alpha_of_unit
        .get(unit)
        .ok_or_else(|| SimError::Mismatch(format!("unit {unit} out of range")))?;
    let v = contrast_direction(t, t2, alpha.index_set()).map_err(|e| SimError::Mismatch(e.to_string()))?;
    alpha.dot(&v).map_err(|e| SimError::Mismatch(e.to_string()))
}

/// Localization weights for `unit` as the proposed estimator would use them.
pub fn localization_weights(data: &Dataset, unit: usize, config: &PipelineConfig) -> Result<LocalWeights, SimError> {
    if !config.localize {
        return LocalWeights::uniform(data.len()).map_err(|e| SimError::Oracle(e.to_string()));
    }
    let radius = config.radius.unwrap_or(data.radius());
    let opts = config.match_options();
    let err = |e: crate::graph_config::ConfigError| SimError::Oracle(e.to_string());
    let target = PreparedConfig::new(&data.configs()[unit], radius, &opts).map_err(err)?;
    let distances = data
        .configs()
        .iter()
        .map(|c| Ok(PreparedConfig::new(c, radius, &opts).map_err(err)?.distance(&target)))
        .collect::<Result<Vec<f64>, SimError>>()?;
    kernel_weights_from_distances(&distances, config.kernel, config.b_g).map_err(|e| SimError::Oracle(e.to_string()))
}

/// Debiased formula with true nuisances and true coefficients plugged in.
/// The correction direction solves the Gram system restricted to the true
/// support, so the only randomness left is the outcome noise.
pub fn oracle_estimate(
    data: &Dataset,
    truth: &GroundTruth,
    unit: usize,
    t: &TreatmentSlate,
    t2: &TreatmentSlate,
    weights: &LocalWeights,
    level: f64,
) -> Result<ContrastReport, SimError> {
    let n = data.len();
    if truth.alpha_of_unit.len() != n || weights.len() != n || unit >= n {
        return Err(SimError::Mismatch(format!(
            "{} units in data, {} in truth, {} weights, unit {unit}",
            n,
            truth.alpha_of_unit.len(),
            weights.len()
        )));
    }
    let set = truth.index_set();
    let v = contrast_direction(t, t2, set).map_err(|e| SimError::Mismatch(e.to_string()))?;
    let support: Vec<usize> = truth
        .base
        .iter()
        .filter(|&&(_, b)| b != 0.0)
        .filter_map(|&(m, _)| set.position(m))
        .filter(|&k| k != 0)
        .collect();
    let plugin = truth.alpha_of_unit[unit].dot(&v).map_err(|e| SimError::Mismatch(e.to_string()))?;
    // Residualized features on the support: Z_S(T_j) (the true mean is zero
    // off the intercept), and the exact noise.
    let feats: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let z = walsh_features(&data.slates()[j], set).expect("dimension checked");
            support.iter().map(|&k| z[k]).collect()
        })
        .collect();
    let s = support.len();
    let mut gram = DMatrix::zeros(s, s);
    for j in weights.support() {
        let w = weights.weights()[j];
        for a in 0..s {
            for b in 0..s {
                gram[(a, b)] += w * feats[j][a] * feats[j][b];
            }
        }
    }
    let vs = DVector::from_iterator(s, support.iter().map(|&k| v[k]));
    let gamma = if s == 0 {
        DVector::zeros(0)
    } else {
        gram.clone()
            .cholesky()
            .map(|c| c.solve(&vs))
            .or_else(|| gram.clone().lu().solve(&vs))
            .ok_or_else(|| SimError::Oracle("support Gram matrix is singular".into()))?
    };
    let mut correction = 0.0;
    let mut sum_sq = 0.0;
    for j in weights.support() {
        let w = weights.weights()[j];
        let gz: f64 = feats[j].iter().zip(gamma.iter()).map(|(a, b)| a * b).sum();
        let eps = data.outcomes()[j] - truth.noiseless_outcomes[j];
        correction += w * gz * eps;
        sum_sq += w * w * (gz * eps).powi(2);
    }
    let n_eff = weights.n_eff();
    let variance = n_eff * sum_sq;
    let estimate = plugin + correction;
    let half = normal_quantile(level).map_err(|e| SimError::Oracle(e.to_string()))? * (variance / n_eff).sqrt();
    Ok(ContrastReport {
        plugin_estimate: plugin,
        debiased_estimate: estimate,
        variance,
        ci_low: estimate - half,
        ci_high: estimate + half,
        nominal_level: level,
        n_eff,
        lambda: 0.0,
        sigma_hat: truth.dgp.noise_sd,
        eta: 0.0,
        diagnostics: Diagnostics {
            fallback_used: weights.fallback_used(),
            lasso_converged: true,
            direction_converged: true,
            support_count: weights.support_count(),
            ..Diagnostics::default()
        },
    })
}

/// The proposed pipeline with localization and config-aware nuisances
/// switched off.
pub fn baseline_config(config: &PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        localize: false,
        use_config_nuisance: false,
        ..config.clone()
    }
}

pub fn baseline_estimate(
    data: &Dataset,
    unit: usize,
    t: &TreatmentSlate,
    t2: &TreatmentSlate,
    config: &PipelineConfig,
) -> Result<ContrastReport, SimError> {
    let ctx = PipelineContext::with_distances(data, &baseline_config(config), None::<DistanceMatrix>)?;
    Ok(ctx.estimate(unit, t, t2)?)
}
