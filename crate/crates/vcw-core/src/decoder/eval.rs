//! Sliding-window perplexity and the modality-separation statistic.

use super::model::DecoderWeights;
use crate::error::{Error, Result};
use crate::rope::FrequencyTable;

/// Per-token negative log-likelihoods for `tokens[1..]`, each token
/// conditioning on at most `window - 1` predecessors. Windows advance by
/// `stride`, clamped to `window - 1` so no token loses all of its context.
pub fn sliding_window_nll(
    weights: &DecoderWeights,
    tokens: &[u32],
    table: &FrequencyTable,
    window: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    if tokens.len() < 2 {
        return Err(Error::Argument(
            "sequence must contain at least 2 tokens".into(),
        ));
    }
    if window < 2 {
        return Err(Error::Argument("window must be at least 2".into()));
    }
    if stride == 0 {
        return Err(Error::Argument("stride must be at least 1".into()));
    }
    let stride = stride.min(window - 1);
    let n = tokens.len();
    let vocab = weights.config.vocab_size;
    let mut nll = vec![0.0; n - 1];
    let mut scored_until = 1usize; // first unscored token index
    let mut start = 0usize;
    while scored_until < n {
        let end = (start + window).min(n);
        let logits = weights.forward(&tokens[start..end], table)?;
        for t in scored_until..end {
            let rel = t - start;
            let row = &logits[(rel - 1) * vocab..rel * vocab];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
            nll[t - 1] = log_z - row[tokens[t] as usize];
        }
        scored_until = end;
        start += stride;
    }
    Ok(nll)
}

/// `exp` of the mean negative log-likelihood under the sliding window.
pub fn sliding_window_perplexity(
    weights: &DecoderWeights,
    tokens: &[u32],
    table: &FrequencyTable,
    window: usize,
    stride: usize,
) -> Result<f64> {
    let nll = sliding_window_nll(weights, tokens, table, window, stride)?;
    Ok((nll.iter().sum::<f64>() / nll.len() as f64).exp())
}

/// Cluster-separation summary for two labeled embedding sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalityGap {
    /// Cosine distance between the two label centroids.
    pub centroid_distance: f64,
    /// Mean cosine distance of each visual vector to the visual centroid.
    pub intra_visual: f64,
    /// Mean cosine distance of each language vector to the language centroid.
    pub intra_language: f64,
    /// Centroid distance over the mean intra-label distance; infinite when
    /// both clusters are degenerate points.
    pub separation_ratio: f64,
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

fn centroid(vectors: &[Vec<f64>]) -> Vec<f64> {
    let dim = vectors[0].len();
    let mut c = vec![0.0; dim];
    for v in vectors {
        for (ci, vi) in c.iter_mut().zip(v) {
            *ci += vi;
        }
    }
    let inv = 1.0 / vectors.len() as f64;
    for ci in &mut c {
        *ci *= inv;
    }
    c
}

/// Measures how far apart the visual and language embedding clusters sit.
pub fn modality_gap(visual: &[Vec<f64>], language: &[Vec<f64>]) -> Result<ModalityGap> {
    for (name, set) in [("visual", visual), ("language", language)] {
        if set.len() < 2 {
            return Err(Error::Argument(format!(
                "{name} label needs at least 2 vectors, got {}",
                set.len()
            )));
        }
    }
    let dim = visual[0].len();
    if language[0].len() != dim || visual.iter().chain(language).any(|v| v.len() != dim) {
        return Err(Error::Argument("embedding dimensions differ".into()));
    }
    let cv = centroid(visual);
    let cl = centroid(language);
    let centroid_distance = cosine_distance(&cv, &cl);
    let intra = |set: &[Vec<f64>], c: &[f64]| {
        set.iter().map(|v| cosine_distance(v, c)).sum::<f64>() / set.len() as f64
    };
    let intra_visual = intra(visual, &cv);
    let intra_language = intra(language, &cl);
    let mean_intra = 0.5 * (intra_visual + intra_language);
    let separation_ratio = if mean_intra == 0.0 {
        f64::INFINITY
    } else {
        centroid_distance / mean_intra
    };
    Ok(ModalityGap {
        centroid_distance,
        intra_visual,
        intra_language,
        separation_ratio,
    })
}
