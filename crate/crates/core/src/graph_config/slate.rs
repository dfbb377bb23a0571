use std::fmt;

use serde::{Deserialize, Serialize};

use super::ConfigError;

/// Largest supported slate dimension; slates are packed into a `u64` mask.
pub const MAX_SLATE_DIM: usize = 64;

/// A unit's binary treatment vector with entries in {-1, +1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct TreatmentSlate {
    bits: Vec<i8>,
}

impl TreatmentSlate {
    pub fn new(bits: Vec<i8>) -> Result<Self, ConfigError> {
        if bits.is_empty() || bits.len() > MAX_SLATE_DIM {
            return Err(ConfigError::SlateDimension(bits.len()));
        }
        if let Some((pos, &value)) = bits.iter().enumerate().find(|(_, &b)| b != 1 && b != -1) {
            return Err(ConfigError::InvalidSlateEntry { pos, value });
        }
        Ok(Self { bits })
    }

    /// Slate with every coordinate equal to `value` (must be ±1).
    pub fn constant(p: usize, value: i8) -> Result<Self, ConfigError> {
        Self::new(vec![value; p])
    }

    /// Inverse of [`TreatmentSlate::neg_mask`].
    pub fn from_neg_mask(p: usize, mask: u64) -> Result<Self, ConfigError> {
        Self::new((0..p).map(|l| if mask >> l & 1 == 1 { -1 } else { 1 }).collect())
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    pub fn get(&self, coord: usize) -> i8 {
        self.bits[coord]
    }

    /// Copy with coordinate `coord` set to `value`.
    pub fn with(&self, coord: usize, value: i8) -> Result<Self, ConfigError> {
        let mut bits = self.bits.clone();
        if coord >= bits.len() {
            return Err(ConfigError::SlateDimension(coord + 1));
        }
        bits[coord] = value;
        Self::new(bits)
    }

    /// Bit `l` is set iff coordinate `l` equals -1.
    pub fn neg_mask(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == -1)
            .fold(0u64, |m, (l, _)| m | 1 << l)
    }

    /// Number of coordinates where the two slates differ.
    pub fn hamming(&self, other: &Self) -> Result<usize, ConfigError> {
        if self.dim() != other.dim() {
            return Err(ConfigError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok((self.neg_mask() ^ other.neg_mask()).count_ones() as usize)
    }
}

impl TryFrom<Vec<i8>> for TreatmentSlate {
    type Error = ConfigError;
    fn try_from(bits: Vec<i8>) -> Result<Self, Self::Error> {
        Self::new(bits)
    }
}

impl From<TreatmentSlate> for Vec<i8> {
    fn from(s: TreatmentSlate) -> Self {
        s.bits
    }
}

impl fmt::Display for TreatmentSlate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, b) in self.bits.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", if *b > 0 { "+1" } else { "-1" })?;
        }
        write!(f, ")")
    }
}
