use std::collections::HashMap;

use rayon::prelude::*;

use super::matching::{min_mismatch, Ball};
use super::{ConfigError, MatchOptions, RootMarkPolicy, RootedConfig};

fn check_dims(g: &RootedConfig, g2: &RootedConfig) -> Result<(), ConfigError> {
    if g.slate_dim() != g2.slate_dim() {
        return Err(ConfigError::DimensionMismatch {
            left: g.slate_dim(),
            right: g2.slate_dim(),
        });
    }
    Ok(())
}

fn normalize(mismatch: Option<usize>, n: usize, policy: RootMarkPolicy) -> f64 {
    let Some(m) = mismatch else { return 1.0 };
    let denom = match policy {
        RootMarkPolicy::Include => n,
        RootMarkPolicy::Exclude => n - 1,
    };
    if denom == 0 {
        0.0
    } else {
        m as f64 / denom as f64
    }
}

/// Normalized minimum mark mismatch between the radius-`r` balls, or 1 when
/// the balls are not root-isomorphic.
pub fn mark_discrepancy(
    g: &RootedConfig,
    g2: &RootedConfig,
    r: usize,
    opts: &MatchOptions,
) -> Result<f64, ConfigError> {
    check_dims(g, g2)?;
    let a = Ball::new(g, r, opts)?;
    let b = Ball::new(g2, r, opts)?;
    Ok(normalize(min_mismatch(&a, &b, opts.root_marks), a.len(), opts.root_marks))
}

/// Truncated distance `sum_{r<=R} 2^{-(r+1)} * discrepancy_r`.
pub fn config_distance(
    g: &RootedConfig,
    g2: &RootedConfig,
    radius: usize,
    opts: &MatchOptions,
) -> Result<f64, ConfigError> {
    check_dims(g, g2)?;
    let a = PreparedConfig::new(g, radius, opts)?;
    let b = PreparedConfig::new(g2, radius, opts)?;
    Ok(a.distance(&b))
}

/// A config with its balls at every radius `0..=R` prepared for matching.
#[derive(Debug, Clone)]
pub struct PreparedConfig {
    balls: Vec<Ball>,
    slate_dim: usize,
    policy: RootMarkPolicy,
}

impl PreparedConfig {
    pub fn new(config: &RootedConfig, radius: usize, opts: &MatchOptions) -> Result<Self, ConfigError> {
        let balls = (0..=radius)
            .map(|r| Ball::new(config, r, opts))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            balls,
            slate_dim: config.slate_dim(),
            policy: opts.root_marks,
        })
    }

    pub fn radius(&self) -> usize {
        self.balls.len() - 1
    }

    /// Distance to another prepared config of the same radius, slate
    /// dimension and options. Once two balls fail to be isomorphic, every
    /// larger radius contributes a full mismatch.
    pub fn distance(&self, other: &PreparedConfig) -> f64 {
        debug_assert_eq!(self.slate_dim, other.slate_dim);
        debug_assert_eq!(self.balls.len(), other.balls.len());
        let mut total = 0.0;
        let mut scale = 0.5;
        let mut isomorphic = true;
        for (a, b) in self.balls.iter().zip(&other.balls) {
            let delta = if isomorphic {
                let m = min_mismatch(a, b, self.policy);
                isomorphic = m.is_some();
                normalize(m, a.len(), self.policy)
            } else {
                1.0
            };
            total += scale * delta;
            scale *= 0.5;
        }
        total
    }
}

/// Symmetric matrix of pairwise distances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Computes all pairwise distances. Configs with identical canonical keys
    /// share a representative, so each distinct pair is matched once.
    pub fn compute(configs: &[RootedConfig], radius: usize, opts: &MatchOptions) -> Result<Self, ConfigError> {
        if configs.is_empty() {
            return Ok(Self { n: 0, values: Vec::new() });
        }
        let p = configs[0].slate_dim();
        if let Some(c) = configs.iter().find(|c| c.slate_dim() != p) {
            return Err(ConfigError::DimensionMismatch {
                left: p,
                right: c.slate_dim(),
            });
        }
        let mut class_of = Vec::with_capacity(configs.len());
        let mut reps: Vec<usize> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, c) in configs.iter().enumerate() {
            let next = reps.len();
            let k = *seen.entry(c.canonical_key()).or_insert(next);
            if k == next {
                reps.push(i);
            }
            class_of.push(k);
        }
        let prepared = reps
            .par_iter()
            .map(|&i| PreparedConfig::new(&configs[i], radius, opts))
            .collect::<Result<Vec<_>, _>>()?;
        let u = prepared.len();
        let rows: Vec<Vec<f64>> = (0..u)
            .into_par_iter()
            .map(|a| (0..a).map(|b| prepared[a].distance(&prepared[b])).collect())
            .collect();
        let unique = |a: usize, b: usize| match a.cmp(&b) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Greater => rows[a][b],
            std::cmp::Ordering::Less => rows[b][a],
        };
        let n = configs.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = unique(class_of[i], class_of[j]);
            }
        }
        Ok(Self { n, values })
    }

    /// Builds a matrix from explicit row-major values, checking shape and symmetry.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self, ConfigError> {
        if values.len() != n * n {
            return Err(ConfigError::Invalid(format!(
                "distance matrix needs {} entries, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if values[i * n + j] != values[j * n + i] {
                    return Err(ConfigError::Invalid(format!("distance matrix asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}
