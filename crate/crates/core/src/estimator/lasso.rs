//! Weighted Lasso by cyclic coordinate descent on the weighted Gram matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::localize::LocalWeights;
use crate::nuisance::ResidualPanel;
use crate::walsh::WalshCoeffs;

/// Smallest penalty ever used.
pub const LAMBDA_FLOOR: f64 = 1e-12;
/// Normal-consistency constant for the median absolute deviation.
pub const MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoOptions {
    pub max_sweeps: usize,
    /// Convergence threshold on the largest coefficient change in a sweep.
    pub coef_tol: f64,
    /// Required stationarity residual for a fit to count as converged.
    pub kkt_tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            coef_tol: 1e-10,
            kkt_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoFit {
    pub alpha_hat: WalshCoeffs,
    pub lambda: f64,
    pub sigma_hat: f64,
    pub n_eff: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub sigma_hat: f64,
    /// Residual scale was zero; the penalty sits at its floor.
    pub degenerate: bool,
}

fn check_shapes(panel: &ResidualPanel, weights: &LocalWeights) -> Result<(), EstimatorError> {
    if panel.len() != weights.len() {
        return Err(EstimatorError::Shape(format!(
            "panel has {} units, weights have {}",
            panel.len(),
            weights.len()
        )));
    }
    Ok(())
}

/// Lower weighted median: the smallest value whose cumulative weight reaches 1/2.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&j| weights[j] > 0.0).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = idx.iter().map(|&j| weights[j]).sum();
    let mut acc = 0.0;
    for &j in &idx {
        acc += weights[j];
        if acc >= 0.5 * total * (1.0 - 1e-12) {
            return values[j];
        }
    }
    idx.last().map_or(0.0, |&j| values[j])
}

/// `sigma_hat = 1.4826 * weighted MAD(y_resid)`,
/// `lambda = c_lambda * sigma_hat * sqrt(ln d / n_eff)`, floored.
pub fn select_lambda(panel: &ResidualPanel, weights: &LocalWeights, c_lambda: f64) -> Result<LambdaChoice, EstimatorError> {
    check_shapes(panel, weights)?;
    if !(c_lambda > 0.0) {
        return Err(EstimatorError::Parameter(format!("c_lambda must be positive, got {c_lambda}")));
    }
    let y = panel.y_resid();
    let w = weights.weights();
    let center = weighted_median(y, w);
    let dev: Vec<f64> = y.iter().map(|v| (v - center).abs()).collect();
    let sigma_hat = MAD_SCALE * weighted_median(&dev, w);
    let d = panel.dim() as f64;
    let lambda = (c_lambda * sigma_hat * (d.ln() / weights.n_eff()).sqrt()).max(LAMBDA_FLOOR);
    Ok(LambdaChoice {
        lambda,
        sigma_hat,
        degenerate: sigma_hat == 0.0,
    })
}

/// `sum_j w_j z_j z_j^T` over the residual features.
pub fn weighted_gram(panel: &ResidualPanel, weights: &LocalWeights) -> Result<DMatrix<f64>, EstimatorError> {
    check_shapes(panel, weights)?;
    let d = panel.dim();
    let mut g = DMatrix::zeros(d, d);
    for j in weights.support() {
        let w = weights.weights()[j];
        let z = panel.z(j);
        for a in 0..d {
            let wa = w * z[a];
            if wa == 0.0 {
                continue;
            }
            for b in a..d {
                g[(a, b)] += wa * z[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    Ok(g)
}

/// `sum_j w_j z_j y_j`.
pub fn weighted_cross(panel: &ResidualPanel, weights: &LocalWeights) -> Result<Vec<f64>, EstimatorError> {
    check_shapes(panel, weights)?;
    let mut c = vec![0.0; panel.dim()];
    for j in weights.support() {
        let wy = weights.weights()[j] * panel.y(j);
        for (acc, z) in c.iter_mut().zip(panel.z(j)) {
            *acc += wy * z;
        }
    }
    Ok(c)
}

/// Weighted score `sum_j w_j z_j (y_j - z_j^T beta)`.
pub fn weighted_score(panel: &ResidualPanel, weights: &LocalWeights, beta: &[f64]) -> Result<Vec<f64>, EstimatorError> {
    check_shapes(panel, weights)?;
    if beta.len() != panel.dim() {
        return Err(EstimatorError::Shape("coefficient length".into()));
    }
    let mut s = vec![0.0; panel.dim()];
    for j in weights.support() {
        let z = panel.z(j);
        let r = panel.y(j) - z.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        let wr = weights.weights()[j] * r;
        for (acc, zk) in s.iter_mut().zip(z) {
            *acc += wr * zk;
        }
    }
    Ok(s)
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Largest stationarity residual from the gradient `g = 2 * score`.
fn kkt_residual(score: &[f64], beta: &[f64], lambda: f64) -> f64 {
    score
        .iter()
        .zip(beta)
        .map(|(&s, &b)| {
            let g = 2.0 * s;
            if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes `sum_j w_j (y_j - z_j^T beta)^2 + lambda * ||beta||_1`.
pub fn weighted_lasso(panel: &ResidualPanel, weights: &LocalWeights, lambda: f64) -> Result<LassoFit, EstimatorError> {
    weighted_lasso_with(panel, weights, lambda, None, &LassoOptions::default())
}

/// As [`weighted_lasso`] with a warm start and explicit solver options.
pub fn weighted_lasso_with(
    panel: &ResidualPanel,
    weights: &LocalWeights,
    lambda: f64,
    warm_start: Option<&[f64]>,
    opts: &LassoOptions,
) -> Result<LassoFit, EstimatorError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(EstimatorError::Parameter(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let gram = weighted_gram(panel, weights)?;
    let cross = weighted_cross(panel, weights)?;
    let d = panel.dim();
    let mut beta = match warm_start {
        Some(b) if b.len() == d => b.to_vec(),
        Some(_) => return Err(EstimatorError::Shape("warm start length".into())),
        None => vec![0.0; d],
    };
    // g_beta = gram * beta, kept current through the sweeps.
    let mut g_beta: Vec<f64> = (0..d).map(|a| (0..d).map(|b| gram[(a, b)] * beta[b]).sum()).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    while iterations < opts.max_sweeps {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for k in 0..d {
            let a = gram[(k, k)];
            let old = beta[k];
            let new = if a > 0.0 {
                let r = cross[k] - g_beta[k] + a * old;
                soft_threshold(r, 0.5 * lambda) / a
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                beta[k] = new;
                for (gb, gk) in g_beta.iter_mut().zip(gram.column(k).iter()) {
                    *gb += delta * gk;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < opts.coef_tol {
            kkt = kkt_residual(&weighted_score(panel, weights, &beta)?, &beta, lambda);
            if kkt <= opts.kkt_tol {
                converged = true;
                break;
            }
            // Refresh the running product to shed accumulated rounding.
            for a in 0..d {
                g_beta[a] = (0..d).map(|b| gram[(a, b)] * beta[b]).sum();
            }
        }
    }
    if !converged {
        kkt = kkt_residual(&weighted_score(panel, weights, &beta)?, &beta, lambda);
    }
    let objective = lasso_objective(panel, weights, &beta, lambda);
    Ok(LassoFit {
        alpha_hat: WalshCoeffs::new(panel.index_set().clone(), beta)?,
        lambda,
        sigma_hat: 0.0,
        n_eff: weights.n_eff(),
        objective,
        iterations,
        converged,
        kkt_violation: kkt,
    })
}

pub fn lasso_objective(panel: &ResidualPanel, weights: &LocalWeights, beta: &[f64], lambda: f64) -> f64 {
    let loss: f64 = weights
        .support()
        .map(|j| {
            let r = panel.y(j) - panel.z(j).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            weights.weights()[j] * r * r
        })
        .sum();
    loss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}
