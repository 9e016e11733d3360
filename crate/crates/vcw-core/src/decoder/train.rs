//! Deterministic single-threaded training of the toy decoder on retrieval
//! episodes, using adaptive moment estimation with fixed hyperparameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::model::{loss_and_gradients, DecoderWeights, Sequence};
use super::niah::NiahSpec;
use crate::error::{Error, Result};
use crate::rope::FrequencyTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyperparams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: f64,
    /// Shortest training sequence; lengths are sampled between this and
    /// `train_context`.
    pub min_seq_len: usize,
    /// Needle repetitions per training episode. Every repetition after the
    /// first is scored, so the retrieval circuit sees dense signal at varied
    /// relative distances; evaluation episodes still carry a single needle.
    pub needle_copies: usize,
    /// Tokens of sequence per key/value pair: lower means denser supervision.
    pub pair_interval: usize,
}

impl Default for TrainHyperparams {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: 1.0,
            min_seq_len: 16,
            needle_copies: 2,
            pair_interval: 12,
        }
    }
}

/// Builds one training sequence: several key/value needles hidden in filler,
/// each key repeated `copies` times at random depths. Every repeat of a key is
/// scored against its value (the first sighting is unpredictable), and the
/// sequence ends with one more repeated key so the final position always
/// carries the retrieval signal the evaluation episodes probe.
fn training_sequence(
    spec: &NiahSpec,
    length: usize,
    copies: usize,
    pair_interval: usize,
    rng: &mut ChaCha8Rng,
) -> Sequence {
    let needle_len = spec.key_len + 1;
    let copies = copies.max(2);
    // one key/value pair per `pair_interval` tokens, capped so needles fill at
    // most half the sequence
    let max_pairs = (length - spec.key_len) / (2 * copies * needle_len);
    let pairs = (length / pair_interval.max(1)).clamp(1, max_pairs.max(1));
    let copies = copies
        .min((length - spec.key_len) / (pairs * needle_len))
        .max(1);

    let (llo, lhi) = spec.language_band;
    // distinct keys so each retrieval is unambiguous
    let mut keys: Vec<u32> = Vec::with_capacity(pairs);
    while keys.len() < pairs {
        let k = rng.gen_range(llo..lhi);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let values: Vec<u32> = keys
        .iter()
        .map(|&k| loop {
            let v = rng.gen_range(llo..lhi);
            if v != k {
                break v;
            }
        })
        .collect();

    let filler_count = length - pairs * copies * needle_len - spec.key_len;
    // (filler offset, pair, occurrence) placements in sequence order
    let mut events: Vec<(usize, usize, usize)> = Vec::with_capacity(pairs * copies);
    for p in 0..pairs {
        let mut offsets: Vec<usize> = (0..copies)
            .map(|_| rng.gen_range(0..=filler_count))
            .collect();
        offsets.sort_unstable();
        for (c, at) in offsets.into_iter().enumerate() {
            events.push((at, p, c));
        }
    }
    events.sort_unstable();

    let (vlo, vhi) = spec.visual_band;
    let mut tokens = Vec::with_capacity(length);
    let mut targets = vec![None; length];
    let mut filler_used = 0usize;
    let mut seen = vec![false; pairs];
    for (at, p, _) in events {
        while filler_used < at {
            tokens.push(rng.gen_range(vlo..vhi));
            filler_used += 1;
        }
        tokens.push(keys[p]);
        if seen[p] {
            targets[tokens.len() - 1] = Some(values[p]);
        }
        seen[p] = true;
        tokens.push(values[p]);
    }
    while filler_used < filler_count {
        tokens.push(rng.gen_range(vlo..vhi));
        filler_used += 1;
    }
    let query = rng.gen_range(0..pairs);
    tokens.push(keys[query]);
    targets[length - 1] = Some(values[query]);
    debug_assert_eq!(tokens.len(), length);
    Sequence { tokens, targets }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], hp: &TrainHyperparams) {
        self.step += 1;
        let bc1 = 1.0 - hp.beta1.powi(self.step as i32);
        let bc2 = 1.0 - hp.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = hp.beta1 * self.m[i] + (1.0 - hp.beta1) * g;
            self.v[i] = hp.beta2 * self.v[i] + (1.0 - hp.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= hp.learning_rate * mhat / (vhat.sqrt() + hp.eps);
        }
    }
}

/// Training progress callback: (step index, loss).
pub type ProgressFn<'a> = dyn FnMut(usize, f64) + 'a;

/// Trains from scratch on randomly generated multi-needle sequences, scoring
/// every repeated key against its value (see [`TrainHyperparams`]), with a
/// short-first length curriculum. Fully deterministic for a fixed seed.
pub fn train(
    config: &ModelConfig,
    spec: &NiahSpec,
    table: &FrequencyTable,
    hp: &TrainHyperparams,
    steps: usize,
    seed: u64,
    mut progress: Option<&mut ProgressFn<'_>>,
) -> Result<DecoderWeights> {
    if steps == 0 {
        return Err(Error::Argument("steps must be at least 1".into()));
    }
    config.validate()?;
    spec.validate(config)?;
    if spec.key_len != 1 {
        return Err(Error::Config(
            "training sequences currently require key_len = 1".into(),
        ));
    }
    if hp.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let min_len = hp.min_seq_len.max(spec.min_len());
    if min_len > config.train_context {
        return Err(Error::Config("min_seq_len exceeds train_context".into()));
    }

    let mut weights = DecoderWeights::init(*config, seed)?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed_da7a));
    let mut adam = Adam::new(weights.num_params());

    for step in 0..steps {
        let frac = step as f64 / steps as f64;
        // Two-phase length curriculum: the retrieval circuit forms much faster
        // at short range and, being relative-position based, transfers to
        // longer sequences. The first half trains on sequences up to a quarter
        // of the window; the second half covers the full window.
        let cap = if frac < 0.5 {
            (config.train_context / 4).max(min_len)
        } else {
            config.train_context
        };
        // Linear learning-rate decay to 10% over the final quarter settles the
        // retrieval heads.
        let lr_scale = if frac < 0.75 {
            1.0
        } else {
            1.0 - 3.6 * (frac - 0.75)
        };
        let step_hp = TrainHyperparams {
            learning_rate: hp.learning_rate * lr_scale,
            ..*hp
        };
        let mut batch = Vec::with_capacity(hp.batch_size);
        for _ in 0..hp.batch_size {
            let length = data_rng.gen_range(min_len..=cap);
            batch.push(training_sequence(
                spec,
                length,
                hp.needle_copies.max(1),
                hp.pair_interval,
                &mut data_rng,
            ));
        }
        let (loss, mut grads) = loss_and_gradients(&weights, &batch, table)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step,
                reason: format!("non-finite loss {loss}"),
            });
        }
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > hp.grad_clip {
            let scale = hp.grad_clip / norm;
            for g in &mut grads {
                *g *= scale;
            }
        }
        adam.update(&mut weights.params, &grads, &step_hp);
        if let Some(cb) = progress.as_deref_mut() {
            cb(step, loss);
        }
    }
    Ok(weights)
}
