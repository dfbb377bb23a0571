//! Minimum-l1 approximate inverse direction:
//! `min ||gamma||_1  s.t.  ||Sigma gamma - v||_inf <= eta`.
//!
//! Solved by scaled ADMM on the split `gamma = z`, `Sigma gamma - v = u` with
//! `||u||_inf <= eta`. The gamma step is a fixed linear system
//! `(I + Sigma^2) gamma = rhs`, factored once per call.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmOptions {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// The solver targets `shrink * eta` so iterates it accepts satisfy the
    /// constraint at `eta` despite finite convergence.
    pub shrink: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            tol: 1e-8,
            max_iter: 20_000,
            shrink: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DebiasDirection {
    pub gamma_hat: Vec<f64>,
    /// Constraint level actually satisfied (after any inflations).
    pub eta: f64,
    /// `||Sigma gamma - v||_inf`.
    pub feasibility_gap: f64,
    pub eta_inflations: usize,
    pub converged: bool,
    pub iterations: usize,
}

fn sup_gap(sigma: &DMatrix<f64>, gamma: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (sigma * gamma - v).amax()
}

struct Attempt {
    gamma: Option<DVector<f64>>,
    gap: f64,
    converged: bool,
    iterations: usize,
}

fn admm(sigma: &DMatrix<f64>, v: &DVector<f64>, eta: f64, opts: &AdmmOptions) -> Result<Attempt, EstimatorError> {
    let d = v.len();
    let rho = opts.rho;
    let target = eta * opts.shrink;
    let system = DMatrix::identity(d, d) + sigma * sigma;
    let chol = system
        .cholesky()
        .ok_or_else(|| EstimatorError::Numerical("I + Sigma^2 is not positive definite".into()))?;
    let mut gamma = DVector::zeros(d);
    let mut z = DVector::zeros(d);
    let mut u = DVector::zeros(d);
    let mut y1 = DVector::zeros(d);
    let mut y2 = DVector::zeros(d);
    let thresh = 1.0 / rho;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let rhs = (&z - &y1) + sigma * (v + &u - &y2);
        gamma = chol.solve(&rhs);
        let s_gamma = sigma * &gamma;
        let z_old = z.clone();
        let u_old = u.clone();
        z = (&gamma + &y1).map(|x| {
            if x > thresh {
                x - thresh
            } else if x < -thresh {
                x + thresh
            } else {
                0.0
            }
        });
        u = (&s_gamma - v + &y2).map(|x| x.clamp(-target, target));
        let r1 = &gamma - &z;
        let r2 = &s_gamma - v - &u;
        y1 += &r1;
        y2 += &r2;
        let primal = r1.amax().max(r2.amax());
        let dual = rho * (&z - &z_old).amax().max((&u - &u_old).amax());
        if primal < opts.tol && dual < opts.tol {
            converged = true;
            break;
        }
    }
    // Prefer the sparse split variable; fall back to gamma if only it is feasible.
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut min_gap = f64::INFINITY;
    for c in [z, gamma] {
        if !c.iter().all(|x| x.is_finite()) {
            return Err(EstimatorError::Numerical("non-finite ADMM iterate".into()));
        }
        let gap = sup_gap(sigma, &c, v);
        min_gap = min_gap.min(gap);
        if gap <= eta && best.as_ref().is_none_or(|(b, _)| c.lp_norm(1) < b.lp_norm(1)) {
            best = Some((c, gap));
        }
    }
    Ok(match best {
        Some((gamma, gap)) => Attempt {
            gamma: Some(gamma),
            gap,
            converged,
            iterations,
        },
        None => Attempt {
            gamma: None,
            gap: min_gap,
            converged,
            iterations,
        },
    })
}

/// Solves for the inverse direction, doubling `eta` up to `max_inflations`
/// times when no feasible point is found.
pub fn clime_direction(
    sigma: &DMatrix<f64>,
    v: &[f64],
    eta: f64,
    max_inflations: usize,
    opts: &AdmmOptions,
) -> Result<DebiasDirection, EstimatorError> {
    let d = v.len();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(EstimatorError::Shape(format!(
            "Sigma is {}x{}, direction has {d} entries",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(EstimatorError::Parameter(format!("eta must be positive, got {eta}")));
    }
    let vv = DVector::from_column_slice(v);
    // gamma = 0 is feasible whenever ||v||_inf <= eta.
    if vv.amax() <= eta {
        return Ok(DebiasDirection {
            gamma_hat: vec![0.0; d],
            eta,
            feasibility_gap: vv.amax(),
            eta_inflations: 0,
            converged: true,
            iterations: 0,
        });
    }
    let mut level = eta;
    let mut last_gap = f64::INFINITY;
    for inflations in 0..=max_inflations {
        let attempt = admm(sigma, &vv, level, opts)?;
        if let Some(gamma) = attempt.gamma {
            return Ok(DebiasDirection {
                gamma_hat: gamma.as_slice().to_vec(),
                eta: level,
                feasibility_gap: attempt.gap,
                eta_inflations: inflations,
                converged: attempt.converged,
                iterations: attempt.iterations,
            });
        }
        last_gap = attempt.gap;
        level *= 2.0;
    }
    Err(EstimatorError::Infeasible {
        eta: level / 2.0,
        gap: last_gap,
    })
}
