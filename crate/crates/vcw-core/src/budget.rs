//! Inference memory budgeting: KV-cache arithmetic and an affine
//! tokens-to-gigabytes model calibrated against measured observations.

use crate::error::{Error, Result};

/// One measured (token count, memory) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryObservation {
    pub tokens: u64,
    pub memory_gb: f64,
}

/// Affine memory predictor: fixed cost plus a per-token slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryModel {
    pub base_gb: f64,
    pub per_token_gb: f64,
}

/// Decoder cache geometry. Defaults are representative of a 7B-class decoder,
/// not taken from any particular checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KvGeometry {
    pub layers: u64,
    pub kv_heads: u64,
    pub head_dim: u64,
    pub bytes_per_element: u64,
}

impl Default for KvGeometry {
    fn default() -> Self {
        Self {
            layers: 28,
            kv_heads: 4,
            head_dim: 128,
            bytes_per_element: 2,
        }
    }
}

/// Bytes of key/value cache for `tokens` positions.
pub fn kv_cache_bytes(geometry: &KvGeometry, tokens: u64) -> u64 {
    2 * geometry.layers
        * geometry.kv_heads
        * geometry.head_dim
        * geometry.bytes_per_element
        * tokens
}

/// Ordinary least-squares line through the observations.
pub fn fit_affine(observations: &[MemoryObservation]) -> Result<MemoryModel> {
    if observations.len() < 2 {
        return Err(Error::DegenerateFit("need at least 2 observations".into()));
    }
    let n = observations.len() as f64;
    let mean_x = observations.iter().map(|o| o.tokens as f64).sum::<f64>() / n;
    let mean_y = observations.iter().map(|o| o.memory_gb).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for o in observations {
        let dx = o.tokens as f64 - mean_x;
        sxx += dx * dx;
        sxy += dx * (o.memory_gb - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateFit(
            "all observations share the same token count".into(),
        ));
    }
    let per_token_gb = sxy / sxx;
    Ok(MemoryModel {
        base_gb: mean_y - per_token_gb * mean_x,
        per_token_gb,
    })
}

/// Predicted memory in GB for a token count.
pub fn predict(model: &MemoryModel, tokens: u64) -> f64 {
    model.base_gb + model.per_token_gb * tokens as f64
}

/// Fractional reduction going from `memory_a` to `memory_b`.
pub fn reduction(memory_a: f64, memory_b: f64) -> Result<f64> {
    if !(memory_a > 0.0) {
        return Err(Error::Argument(format!(
            "baseline memory must be positive, got {memory_a}"
        )));
    }
    Ok((memory_a - memory_b) / memory_a)
}
