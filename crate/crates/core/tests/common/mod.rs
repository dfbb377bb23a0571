//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

pub mod distance;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slatenet::graph_config::TreatmentSlate;
use slatenet::localize::LocalWeights;
use slatenet::nuisance::{make_folds, ResidualPanel};
use slatenet::walsh::{walsh_features, WalshIndexSet};

pub fn panel(y: Vec<f64>, z: Vec<Vec<f64>>, set: WalshIndexSet) -> ResidualPanel {
    let n = y.len();
    ResidualPanel::new(y, z, set, make_folds(n, 2, 0).unwrap()).unwrap()
}

pub fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> LocalWeights {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    LocalWeights::from_unnormalized(raw, 1.0, false).unwrap()
}

/// Walsh rows of `n` uniform random slates.
pub fn random_walsh_rows(n: usize, set: &WalshIndexSet, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mask = rng.random_range(0..1u64 << set.p());
            walsh_features(&TreatmentSlate::from_neg_mask(set.p(), mask).unwrap(), set).unwrap()
        })
        .collect()
}

/// `G = sum_j w_j z_j z_j^T`, `c = sum_j w_j z_j y_j` by direct loops.
pub fn normal_equations(y: &[f64], z: &[Vec<f64>], w: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let d = z[0].len();
    let mut g = DMatrix::zeros(d, d);
    let mut c = DVector::zeros(d);
    for j in 0..y.len() {
        for a in 0..d {
            c[a] += w[j] * z[j][a] * y[j];
            for b in 0..d {
                g[(a, b)] += w[j] * z[j][a] * z[j][b];
            }
        }
    }
    (g, c)
}

/// Weighted least squares through the normal equations.
pub fn wls(y: &[f64], z: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let (g, c) = normal_equations(y, z, w);
    g.cholesky().expect("full rank design").solve(&c).iter().copied().collect()
}

/// Lasso minimizer of `b'Gb - 2c'b + lambda |b|_1` by enumerating every
/// support and sign pattern and keeping the candidate that satisfies the
/// optimality conditions with the smallest objective.
pub fn exhaustive_lasso(g: &DMatrix<f64>, c: &DVector<f64>, lambda: f64) -> Vec<f64> {
    let d = c.len();
    let objective = |b: &DVector<f64>| (b.transpose() * g * b)[0] - 2.0 * c.dot(b) + lambda * b.lp_norm(1);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for support in 0u32..(1 << d) {
        let idx: Vec<usize> = (0..d).filter(|&k| support >> k & 1 == 1).collect();
        let s = idx.len();
        for signs in 0u32..(1 << s) {
            let sign = |i: usize| if signs >> i & 1 == 1 { -1.0 } else { 1.0 };
            let mut beta = DVector::zeros(d);
            if s > 0 {
                let gs = DMatrix::from_fn(s, s, |a, b| g[(idx[a], idx[b])]);
                let rhs = DVector::from_fn(s, |a, _| c[idx[a]] - 0.5 * lambda * sign(a));
                let Some(sol) = gs.lu().solve(&rhs) else { continue };
                if (0..s).any(|a| sol[a] * sign(a) <= 0.0) {
                    continue;
                }
                for a in 0..s {
                    beta[idx[a]] = sol[a];
                }
            }
            let grad = (c - g * &beta) * 2.0;
            if (0..d).filter(|k| support >> k & 1 == 0).any(|k| grad[k].abs() > lambda + 1e-9) {
                continue;
            }
            let f = objective(&beta);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, beta));
            }
        }
    }
    best.expect("some pattern satisfies the optimality conditions").1.iter().copied().collect()
}

fn pivot(t: &mut [Vec<f64>], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pr = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row && r[col] != 0.0 {
            let f = r[col];
            for (x, y) in r.iter_mut().zip(&pr) {
                *x -= f * y;
            }
        }
    }
}

/// Minimizes over the tableau with Bland's rule; columns at or beyond
/// `allowed` never enter. Returns false if unbounded.
fn simplex_phase(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> bool {
    let rhs = t[0].len() - 1;
    loop {
        let reduced = |j: usize| cost[j] - basis.iter().enumerate().map(|(i, &b)| cost[b] * t[i][j]).sum::<f64>();
        let Some(col) = (0..allowed).find(|&j| !basis.contains(&j) && reduced(j) < -1e-10) else {
            return true;
        };
        let mut leave: Option<(f64, usize, usize)> = None;
        for (i, r) in t.iter().enumerate() {
            if r[col] > 1e-12 {
                let ratio = r[rhs] / r[col];
                let better = match leave {
                    None => true,
                    Some((lr, _, lb)) => ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < lb),
                };
                if better {
                    leave = Some((ratio, i, basis[i]));
                }
            }
        }
        let Some((_, row, _)) = leave else { return false };
        pivot(t, row, col);
        basis[row] = col;
    }
}

/// Two-phase dense simplex for `min c'x` s.t. `Ax = b`, `x >= 0`.
/// Returns the optimal value and point, or `None` if infeasible/unbounded.
pub fn simplex(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<(f64, Vec<f64>)> {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
            let mut row = vec![0.0; width];
            for j in 0..n {
                row[j] = flip * a[i][j];
            }
            row[n + i] = 1.0;
            row[width - 1] = flip * b[i];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut phase1 = vec![0.0; n + m];
    for v in &mut phase1[n..] {
        *v = 1.0;
    }
    simplex_phase(&mut t, &mut basis, &phase1, n + m);
    let infeas: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &bj)| bj >= n)
        .map(|(i, _)| t[i][width - 1])
        .sum();
    if infeas > 1e-9 {
        return None;
    }
    // Drive zero-level artificials out of the basis where possible.
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| !basis.contains(&j) && t[i][j].abs() > 1e-9) {
                pivot(&mut t, i, j);
                basis[i] = j;
            }
        }
    }
    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat_n(0.0, m));
    if !simplex_phase(&mut t, &mut basis, &cost, n) {
        return None;
    }
    let mut x = vec![0.0; n];
    for (i, &bj) in basis.iter().enumerate() {
        if bj < n {
            x[bj] = t[i][width - 1];
        }
    }
    Some((c.iter().zip(&x).map(|(a, b)| a * b).sum(), x))
}

/// `min |gamma|_1` s.t. `|Sigma gamma - v|_inf <= eta`, as an LP over
/// `gamma = u - w` with slacks.
pub fn lp_inverse_direction(sigma: &DMatrix<f64>, v: &[f64], eta: f64) -> Option<(f64, Vec<f64>)> {
    let d = v.len();
    let n = 4 * d;
    let mut a = Vec::with_capacity(2 * d);
    let mut b = Vec::with_capacity(2 * d);
    for (sign, row_off) in [(1.0, 0), (-1.0, d)] {
        for k in 0..d {
            let mut row = vec![0.0; n];
            for j in 0..d {
                row[j] = sign * sigma[(k, j)];
                row[d + j] = -sign * sigma[(k, j)];
            }
            row[2 * d + row_off + k] = 1.0;
            a.push(row);
            b.push(eta + sign * v[k]);
        }
    }
    let mut c = vec![1.0; 2 * d];
    c.extend(vec![0.0; 2 * d]);
    let (val, x) = simplex(&c, &a, &b)?;
    Some((val, (0..d).map(|j| x[j] - x[d + j]).collect()))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
