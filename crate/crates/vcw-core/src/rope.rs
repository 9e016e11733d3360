//! Rotary position embeddings: frequency tables, pairwise rotation, and
//! relative-position attention scores.
//!
//! Frequencies follow the zero-based convention `theta_i = base^(-2i/d)` for
//! `i` in `[0, d/2)`, so the lowest dimension rotates one radian per position
//! step. Rotation acts on adjacent component pairs `(2i, 2i+1)`.

use crate::error::{Error, Result};

/// Head dimension and frequency base for a rotary embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotaryConfig {
    /// Per-head dimension `d`; must be even and >= 2.
    pub head_dim: usize,
    /// Frequency base `b`, typically 10000.
    pub base: f64,
}

impl RotaryConfig {
    pub fn new(head_dim: usize, base: f64) -> Result<Self> {
        if head_dim < 2 || head_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "head_dim must be even and >= 2, got {head_dim}"
            )));
        }
        if !(base > 1.0) {
            return Err(Error::Config(format!("base must be > 1, got {base}")));
        }
        Ok(Self { head_dim, base })
    }

    pub fn with_default_base(head_dim: usize) -> Result<Self> {
        Self::new(head_dim, 10000.0)
    }
}

/// Per-dimension rotary frequencies, strictly decreasing, first entry 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    thetas: Vec<f64>,
}

impl FrequencyTable {
    /// Wraps a raw frequency vector. Entries must be positive, at most 1, and
    /// strictly decreasing.
    pub fn from_thetas(thetas: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::Config("frequency table must be non-empty".into()));
        }
        for (i, &t) in thetas.iter().enumerate() {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("theta[{i}] = {t} outside (0, 1]")));
            }
            if i > 0 && thetas[i - 1] <= t {
                return Err(Error::Config(format!(
                    "thetas not strictly decreasing at index {i}"
                )));
            }
        }
        Ok(Self { thetas })
    }

    pub fn head_dim(&self) -> usize {
        self.thetas.len() * 2
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn theta(&self, dim_index: usize) -> Result<f64> {
        self.thetas.get(dim_index).copied().ok_or_else(|| {
            Error::Argument(format!(
                "dim_index {dim_index} out of range for {} dimensions",
                self.thetas.len()
            ))
        })
    }

    /// Positions per full rotation in dimension `dim_index`: `2*pi / theta_i`.
    pub fn wavelength(&self, dim_index: usize) -> Result<f64> {
        Ok(2.0 * std::f64::consts::PI / self.theta(dim_index)?)
    }
}

/// `theta_i = base^(-2i/d)` for `i = 0 .. d/2`.
pub fn frequency_table(config: RotaryConfig) -> FrequencyTable {
    let half = config.head_dim / 2;
    let thetas = (0..half)
        .map(|i| config.base.powf(-2.0 * i as f64 / config.head_dim as f64))
        .collect();
    FrequencyTable { thetas }
}

/// One attention head's query or key vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadVector(pub Vec<f64>);

impl HeadVector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &HeadVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

fn check_len(vector_len: usize, table: &FrequencyTable) -> Result<()> {
    if vector_len != table.head_dim() {
        return Err(Error::Argument(format!(
            "vector length {vector_len} does not match head_dim {}",
            table.head_dim()
        )));
    }
    Ok(())
}

/// Rotates adjacent component pairs of `components` in place by angle
/// `position * theta_i`.
pub fn rotate_in_place(
    components: &mut [f64],
    position: u64,
    table: &FrequencyTable,
) -> Result<()> {
    check_len(components.len(), table)?;
    let m = position as f64;
    for (i, &theta) in table.thetas.iter().enumerate() {
        let angle = m * theta;
        let (sin, cos) = angle.sin_cos();
        let a = components[2 * i];
        let b = components[2 * i + 1];
        components[2 * i] = a * cos - b * sin;
        components[2 * i + 1] = a * sin + b * cos;
    }
    Ok(())
}

/// Applies the block-diagonal rotation `R_m` to a head vector.
pub fn rotate(vector: &HeadVector, position: u64, table: &FrequencyTable) -> Result<HeadVector> {
    let mut out = vector.0.clone();
    rotate_in_place(&mut out, position, table)?;
    Ok(HeadVector(out))
}

/// `dot(R_m q, R_n k)`; depends only on `n - m`.
pub fn attention_score(
    q: &HeadVector,
    k: &HeadVector,
    m: u64,
    n: u64,
    table: &FrequencyTable,
) -> Result<f64> {
    check_len(q.0.len(), table)?;
    check_len(k.0.len(), table)?;
    Ok(rotate(q, m, table)?.dot(&rotate(k, n, table)?))
}
