//! Plug-in and debiased contrasts, the contrast families, and the Hamming bound.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{DebiasDirection, EstimatorError, LassoFit};
use crate::graph_config::TreatmentSlate;
use crate::localize::LocalWeights;
use crate::nuisance::ResidualPanel;
use crate::walsh::{contrast_direction, walsh_features};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub fallback_used: bool,
    pub eta_inflations: usize,
    pub lasso_converged: bool,
    pub direction_converged: bool,
    pub kkt_violation: f64,
    pub feasibility_gap: f64,
    /// Zero variance estimate despite a nonzero correction direction.
    pub degenerate_variance: bool,
    /// Residual scale estimate was zero and the penalty was floored.
    pub sigma_degenerate: bool,
    pub support_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastReport {
    pub plugin_estimate: f64,
    pub debiased_estimate: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub nominal_level: f64,
    pub n_eff: f64,
    pub lambda: f64,
    pub sigma_hat: f64,
    pub eta: f64,
    pub diagnostics: Diagnostics,
}

impl ContrastReport {
    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Two-sided normal critical value at `level`.
pub fn normal_quantile(level: f64) -> Result<f64, EstimatorError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EstimatorError::Parameter(format!("level must be in (0, 1), got {level}")));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

/// `<alpha_hat, Z(t2) - Z(t)>`.
pub fn plugin_contrast_t(fit: &LassoFit, t: &TreatmentSlate, t2: &TreatmentSlate) -> Result<f64, EstimatorError> {
    let v = contrast_direction(t, t2, fit.alpha_hat.index_set())?;
    Ok(fit.alpha_hat.dot(&v)?)
}

/// Structural and joint contrasts from fits localized at `g` and `g'`:
/// `theta_G = <alpha(g') - alpha(g), Z(t)>`,
/// `theta_GT = <alpha(g'), Z(t2)> - <alpha(g), Z(t)>`, evaluated as
/// `<alpha(g'), Z(t2) - Z(t)> + theta_G` so both family identities hold
/// bit for bit.
pub fn structural_contrasts(
    fit_at_g: &LassoFit,
    fit_at_g2: &LassoFit,
    t: &TreatmentSlate,
    t2: &TreatmentSlate,
) -> Result<(f64, f64), EstimatorError> {
    let set = fit_at_g.alpha_hat.index_set();
    if set != fit_at_g2.alpha_hat.index_set() {
        return Err(EstimatorError::Walsh(crate::walsh::WalshError::IndexSetMismatch));
    }
    let z = walsh_features(t, set)?;
    let theta_g = fit_at_g2.alpha_hat.dot(&z)? - fit_at_g.alpha_hat.dot(&z)?;
    let theta_gt = plugin_contrast_t(fit_at_g2, t, t2)? + theta_g;
    Ok((theta_g, theta_gt))
}

/// `L * d_H(t, t2)`.
pub fn hamming_bound(lipschitz: f64, t: &TreatmentSlate, t2: &TreatmentSlate) -> Result<f64, EstimatorError> {
    if !(lipschitz >= 0.0) {
        return Err(EstimatorError::Parameter(format!("Lipschitz constant must be nonnegative, got {lipschitz}")));
    }
    Ok(lipschitz * t.hamming(t2)? as f64)
}

/// One-step correction of the plug-in along `gamma`, with the sandwich
/// variance and a normal interval.
pub fn debiased_contrast(
    fit: &LassoFit,
    dir: &DebiasDirection,
    panel: &ResidualPanel,
    weights: &LocalWeights,
    v: &[f64],
    level: f64,
) -> Result<ContrastReport, EstimatorError> {
    let d = panel.dim();
    if v.len() != d || dir.gamma_hat.len() != d || fit.alpha_hat.values().len() != d || weights.len() != panel.len() {
        return Err(EstimatorError::Shape("debiasing inputs disagree in dimension".into()));
    }
    let z_crit = normal_quantile(level)?;
    let alpha = fit.alpha_hat.values();
    let gamma = &dir.gamma_hat;
    let plugin = fit.alpha_hat.dot(v)?;
    let mut correction = 0.0;
    let mut sum_sq = 0.0;
    for j in weights.support() {
        let z = panel.z(j);
        let eps = panel.y(j) - z.iter().zip(alpha).map(|(a, b)| a * b).sum::<f64>();
        let gz: f64 = z.iter().zip(gamma).map(|(a, b)| a * b).sum();
        let w = weights.weights()[j];
        correction += w * gz * eps;
        sum_sq += w * w * (gz * eps).powi(2);
    }
    let n_eff = weights.n_eff();
    let variance = n_eff * sum_sq;
    let debiased = plugin + correction;
    let half = z_crit * (variance / n_eff).sqrt();
    let gamma_nonzero = gamma.iter().any(|&g| g != 0.0);
    Ok(ContrastReport {
        plugin_estimate: plugin,
        debiased_estimate: debiased,
        variance,
        ci_low: debiased - half,
        ci_high: debiased + half,
        nominal_level: level,
        n_eff,
        lambda: fit.lambda,
        sigma_hat: fit.sigma_hat,
        eta: dir.eta,
        diagnostics: Diagnostics {
            fallback_used: weights.fallback_used(),
            eta_inflations: dir.eta_inflations,
            lasso_converged: fit.converged,
            direction_converged: dir.converged,
            kkt_violation: fit.kkt_violation,
            feasibility_gap: dir.feasibility_gap,
            degenerate_variance: variance == 0.0 && gamma_nonzero,
            sigma_degenerate: false,
            support_count: weights.support_count(),
        },
    })
}
