//! Synthetic needle-in-a-haystack episodes.
//!
//! Filler tokens come from a narrow "visual" id band and the needle/query from
//! a disjoint "language" band, so the two populations form separable clusters
//! in embedding space. An episode hides a key/value pair in the filler and
//! ends with the key again; the model must emit the value as the next token.

use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::model::{greedy_next_token, DecoderWeights};
use crate::error::{Error, Result};
use crate::rope::FrequencyTable;

/// Token-band layout for episode generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NiahSpec {
    /// Filler ("visual") token ids, half-open range.
    pub visual_band: (u32, u32),
    /// Needle and query ("language") token ids, half-open range.
    pub language_band: (u32, u32),
    /// Key length in tokens.
    pub key_len: usize,
}

impl NiahSpec {
    /// Splits the vocabulary evenly between the two bands.
    pub fn for_vocab(vocab_size: usize) -> Self {
        let half = vocab_size as u32 / 2;
        Self {
            visual_band: (0, half),
            language_band: (half, vocab_size as u32),
            key_len: 1,
        }
    }

    /// Shortest sequence able to carry needle plus query.
    pub fn min_len(&self) -> usize {
        2 * self.key_len + 1
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.key_len == 0 {
            return Err(Error::Config("key_len must be positive".into()));
        }
        let (vlo, vhi) = self.visual_band;
        let (llo, lhi) = self.language_band;
        if vlo >= vhi || llo >= lhi || lhi.max(vhi) as usize > config.vocab_size {
            return Err(Error::Config(
                "token bands empty or out of vocabulary".into(),
            ));
        }
        if vhi.min(lhi) > vlo.max(llo) {
            return Err(Error::Config("visual and language bands overlap".into()));
        }
        if lhi - llo < 2 {
            return Err(Error::Config(
                "language band needs at least 2 tokens for key and value".into(),
            ));
        }
        Ok(())
    }
}

/// One concrete probe: the sequence to feed and the value to retrieve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NiahEpisode {
    pub tokens: Vec<u32>,
    pub answer: u32,
    /// Index of the first needle token.
    pub needle_index: usize,
}

/// Generates an episode of `length` tokens with the needle at fractional
/// `depth` of the filler.
pub fn generate_episode(
    spec: &NiahSpec,
    length: usize,
    depth: f64,
    rng: &mut impl Rng,
) -> Result<NiahEpisode> {
    if length < spec.min_len() {
        return Err(Error::Argument(format!(
            "length {length} below minimum {}",
            spec.min_len()
        )));
    }
    if !(0.0..=1.0).contains(&depth) {
        return Err(Error::Argument(format!("depth {depth} outside [0, 1]")));
    }
    let (llo, lhi) = spec.language_band;
    let key: Vec<u32> = (0..spec.key_len).map(|_| rng.gen_range(llo..lhi)).collect();
    let answer = loop {
        let v = rng.gen_range(llo..lhi);
        if !key.contains(&v) {
            break v;
        }
    };
    let filler_count = length - spec.min_len();
    let insert_at = (depth * filler_count as f64).round() as usize;
    let (vlo, vhi) = spec.visual_band;
    let mut tokens = Vec::with_capacity(length);
    for _ in 0..insert_at {
        tokens.push(rng.gen_range(vlo..vhi));
    }
    let needle_index = tokens.len();
    tokens.extend_from_slice(&key);
    tokens.push(answer);
    for _ in insert_at..filler_count {
        tokens.push(rng.gen_range(vlo..vhi));
    }
    tokens.extend_from_slice(&key);
    Ok(NiahEpisode {
        tokens,
        answer,
        needle_index,
    })
}

/// Retrieval accuracy per (sequence length, needle depth) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub lengths: Vec<usize>,
    pub depths: Vec<f64>,
    /// `cells[i][j]` is accuracy at `lengths[i]`, `depths[j]`; `None` marks a
    /// cell whose length cannot hold the needle.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl EvalGrid {
    /// Mean over valid cells at one length.
    pub fn mean_at_length(&self, length: usize) -> Option<f64> {
        let i = self.lengths.iter().position(|&l| l == length)?;
        let valid: Vec<f64> = self.cells[i].iter().flatten().copied().collect();
        if valid.is_empty() {
            None
        } else {
            Some(valid.iter().sum::<f64>() / valid.len() as f64)
        }
    }
}

// Per-cell seeding independent of evaluation order.
fn cell_rng(base_seed: u64, length: usize, depth_index: usize, episode: usize) -> ChaCha8Rng {
    let mut mix = StdRng::seed_from_u64(
        base_seed
            ^ (length as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
            ^ (depth_index as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
            ^ (episode as u64).wrapping_mul(0x1656_67b1_9e37_79f9),
    );
    ChaCha8Rng::seed_from_u64(mix.next_u64())
}

/// Greedy-decodes the value token across the length/depth grid, `episodes`
/// independently seeded probes per cell.
pub fn niah_eval(
    weights: &DecoderWeights,
    table: &FrequencyTable,
    spec: &NiahSpec,
    lengths: &[usize],
    depths: &[f64],
    episodes: usize,
    base_seed: u64,
) -> Result<EvalGrid> {
    spec.validate(&weights.config)?;
    if episodes == 0 {
        return Err(Error::Argument("episodes must be positive".into()));
    }
    let mut cells = Vec::with_capacity(lengths.len());
    for (_, &length) in lengths.iter().enumerate() {
        let mut row = Vec::with_capacity(depths.len());
        for (j, &depth) in depths.iter().enumerate() {
            if length < spec.min_len() {
                row.push(None);
                continue;
            }
            let mut correct = 0usize;
            for e in 0..episodes {
                let mut rng = cell_rng(base_seed, length, j, e);
                let episode = generate_episode(spec, length, depth, &mut rng)?;
                if greedy_next_token(weights, &episode.tokens, table)? == episode.answer {
                    correct += 1;
                }
            }
            row.push(Some(correct as f64 / episodes as f64));
        }
        cells.push(row);
    }
    Ok(EvalGrid {
        lengths: lengths.to_vec(),
        depths: depths.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episode_layout() {
        let spec = NiahSpec::for_vocab(512);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ep = generate_episode(&spec, 64, 0.5, &mut rng).unwrap();
        assert_eq!(ep.tokens.len(), 64);
        let key = ep.tokens[ep.needle_index];
        assert_eq!(ep.tokens[ep.needle_index + 1], ep.answer);
        assert_eq!(*ep.tokens.last().unwrap(), key);
        assert!(key >= 256 && ep.answer >= 256);
        assert_ne!(key, ep.answer);
        // filler stays in the visual band
        for (i, &t) in ep.tokens.iter().enumerate() {
            if i != ep.needle_index && i != ep.needle_index + 1 && i != ep.tokens.len() - 1 {
                assert!(t < 256, "filler token {t} at {i}");
            }
        }
    }

    #[test]
    fn depth_placement() {
        let spec = NiahSpec::for_vocab(512);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shallow = generate_episode(&spec, 100, 0.0, &mut rng).unwrap();
        assert_eq!(shallow.needle_index, 0);
        let deep = generate_episode(&spec, 100, 1.0, &mut rng).unwrap();
        assert_eq!(deep.needle_index, 100 - spec.min_len());
    }

    #[test]
    fn too_short_rejected() {
        let spec = NiahSpec::for_vocab(512);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(generate_episode(&spec, 2, 0.5, &mut rng).is_err());
        assert!(generate_episode(&spec, 3, 0.5, &mut rng).is_ok());
    }

    #[test]
    fn eval_deterministic_and_marks_invalid_cells() {
        let config = ModelConfig {
            vocab_size: 64,
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            mlp_ratio: 2,
            train_context: 32,
        };
        let weights = DecoderWeights::init(config, 5).unwrap();
        let table = crate::rope::frequency_table(
            crate::rope::RotaryConfig::with_default_base(config.head_dim()).unwrap(),
        );
        let spec = NiahSpec::for_vocab(64);
        let lengths = [2usize, 16, 32];
        let depths = [0.0, 0.5, 1.0];
        let a = niah_eval(&weights, &table, &spec, &lengths, &depths, 3, 42).unwrap();
        let b = niah_eval(&weights, &table, &spec, &lengths, &depths, 3, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.cells[0].iter().all(Option::is_none));
        assert!(a.cells[1].iter().all(Option::is_some));
    }
}
