//! Walsh–Hadamard characters over `{-1, +1}^p`, truncated by interaction order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_config::{TreatmentSlate, MAX_SLATE_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalshError {
    #[error("slate dimension {got} does not match dictionary dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("order cap {order_cap} outside [0, {p}]")]
    OrderCap { p: usize, order_cap: usize },
    #[error("dictionary dimension {0} outside [1, {max}]", max = MAX_SLATE_DIM)]
    Dimension(usize),
    #[error("dictionary with p = {p} and order cap {order_cap} is too large to enumerate")]
    TooLarge { p: usize, order_cap: usize },
    #[error("expected {expected} coefficients, got {got}")]
    Length { expected: usize, got: usize },
    #[error("coefficient {0} is not finite")]
    NonFinite(usize),
    #[error("coefficient vectors are over different index sets")]
    IndexSetMismatch,
}

/// Largest dictionary this crate will enumerate.
const MAX_DICTIONARY: usize = 1 << 22;

/// Subsets of `{0, .., p-1}` with at most `order_cap` elements, as bitmasks
/// sorted by (popcount, numeric value). Index 0 is the empty set.
#[derive(Debug, Clone)]
pub struct WalshIndexSet {
    p: usize,
    order_cap: usize,
    indices: Vec<u64>,
    position: HashMap<u64, usize>,
}

impl PartialEq for WalshIndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.order_cap == other.order_cap
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Bitmasks of size `k` in increasing numeric order (Gosper's hack).
fn subsets_of_size(p: usize, k: usize, out: &mut Vec<u64>) {
    if k == 0 {
        out.push(0);
        return;
    }
    let limit: u128 = 1u128 << p;
    let mut s: u64 = (1u64 << k) - 1;
    loop {
        out.push(s);
        let c = s & s.wrapping_neg();
        let r = s.wrapping_add(c);
        if r == 0 {
            break;
        }
        let next = (((r ^ s) >> 2) / c) | r;
        if (next as u128) >= limit || next < s {
            break;
        }
        s = next;
    }
}

impl WalshIndexSet {
    pub fn new(p: usize, order_cap: usize) -> Result<Self, WalshError> {
        if p == 0 || p > MAX_SLATE_DIM {
            return Err(WalshError::Dimension(p));
        }
        if order_cap > p {
            return Err(WalshError::OrderCap { p, order_cap });
        }
        let size = (0..=order_cap).fold(0usize, |acc, k| acc.saturating_add(binomial(p, k)));
        if size > MAX_DICTIONARY {
            return Err(WalshError::TooLarge { p, order_cap });
        }
        let mut indices = Vec::with_capacity(size);
        for k in 0..=order_cap {
            subsets_of_size(p, k, &mut indices);
        }
        debug_assert_eq!(indices.len(), size);
        let position = indices.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self {
            p,
            order_cap,
            indices,
            position,
        })
    }

    /// All `2^p` subsets.
    pub fn full(p: usize) -> Result<Self, WalshError> {
        Self::new(p, p)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn order_cap(&self) -> usize {
        self.order_cap
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    /// Position of subset `mask`, if it is in the dictionary.
    pub fn position(&self, mask: u64) -> Option<usize> {
        self.position.get(&mask).copied()
    }

    fn check(&self, t: &TreatmentSlate) -> Result<(), WalshError> {
        if t.dim() != self.p {
            return Err(WalshError::DimensionMismatch {
                expected: self.p,
                got: t.dim(),
            });
        }
        Ok(())
    }

    /// Writes the characters of the slate with negative-coordinate mask `neg`.
    pub fn fill_features(&self, neg: u64, out: &mut [f64]) {
        for (o, &s) in out.iter_mut().zip(&self.indices) {
            *o = if (s & neg).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
}

/// Character values `Z_S(t)` for every `S` in the dictionary.
pub fn walsh_features(t: &TreatmentSlate, set: &WalshIndexSet) -> Result<Vec<f64>, WalshError> {
    set.check(t)?;
    let mut out = vec![0.0; set.len()];
    set.fill_features(t.neg_mask(), &mut out);
    Ok(out)
}

/// `Z(t2) - Z(t)`; entries are in {-2, 0, 2}.
pub fn contrast_direction(t: &TreatmentSlate, t2: &TreatmentSlate, set: &WalshIndexSet) -> Result<Vec<f64>, WalshError> {
    let a = walsh_features(t, set)?;
    let mut b = walsh_features(t2, set)?;
    for (x, y) in b.iter_mut().zip(&a) {
        *x -= y;
    }
    Ok(b)
}

/// Dense coefficient vector aligned with a [`WalshIndexSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoeffsDump", into = "CoeffsDump")]
pub struct WalshCoeffs {
    index_set: WalshIndexSet,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CoeffsDump {
    p: usize,
    order_cap: usize,
    values: Vec<f64>,
}

impl TryFrom<CoeffsDump> for WalshCoeffs {
    type Error = WalshError;
    fn try_from(d: CoeffsDump) -> Result<Self, Self::Error> {
        WalshCoeffs::new(WalshIndexSet::new(d.p, d.order_cap)?, d.values)
    }
}

impl From<WalshCoeffs> for CoeffsDump {
    fn from(c: WalshCoeffs) -> Self {
        CoeffsDump {
            p: c.index_set.p,
            order_cap: c.index_set.order_cap,
            values: c.values,
        }
    }
}

impl WalshCoeffs {
    pub fn new(index_set: WalshIndexSet, values: Vec<f64>) -> Result<Self, WalshError> {
        if values.len() != index_set.len() {
            return Err(WalshError::Length {
                expected: index_set.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(WalshError::NonFinite(i));
        }
        Ok(Self { index_set, values })
    }

    pub fn zeros(index_set: WalshIndexSet) -> Self {
        let values = vec![0.0; index_set.len()];
        Self { index_set, values }
    }

    /// Coefficients given as `(subset mask, value)` pairs; every mask must be
    /// in the dictionary.
    pub fn from_sparse(index_set: WalshIndexSet, terms: &[(u64, f64)]) -> Result<Self, WalshError> {
        let mut values = vec![0.0; index_set.len()];
        for &(mask, v) in terms {
            let k = index_set.position(mask).ok_or(WalshError::OrderCap {
                p: index_set.p,
                order_cap: mask.count_ones() as usize,
            })?;
            values[k] += v;
        }
        Self::new(index_set, values)
    }

    pub fn index_set(&self) -> &WalshIndexSet {
        &self.index_set
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Inner product with a vector over the same index set.
    pub fn dot(&self, v: &[f64]) -> Result<f64, WalshError> {
        if v.len() != self.values.len() {
            return Err(WalshError::Length {
                expected: self.values.len(),
                got: v.len(),
            });
        }
        Ok(self.values.iter().zip(v).map(|(a, b)| a * b).sum())
    }
}

/// `f(t) = <alpha, Z(t)>`.
pub fn evaluate_response(alpha: &WalshCoeffs, t: &TreatmentSlate) -> Result<f64, WalshError> {
    let z = walsh_features(t, &alpha.index_set)?;
    alpha.dot(&z)
}
