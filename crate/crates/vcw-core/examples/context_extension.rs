//! Trains the default toy decoder and compares needle retrieval beyond the
//! training window under raw extrapolation vs extended frequency tables.
//!
//! Usage: context_extension [steps] [seed] [lr] [batch] [pair_interval]

use std::time::Instant;

use vcw_core::decoder::{niah_eval, train, ModelConfig, NiahSpec, TrainHyperparams};
use vcw_core::extension::{scaled_frequency_table, ScalingConfig};
use vcw_core::rope::{frequency_table, RotaryConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(6000);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    let config = ModelConfig::default();
    let spec = NiahSpec::for_vocab(config.vocab_size);
    let rotary = RotaryConfig::with_default_base(config.head_dim()).unwrap();
    let table = frequency_table(rotary);
    let hp = TrainHyperparams {
        learning_rate: args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3),
        batch_size: args.get(4).and_then(|s| s.parse().ok()).unwrap_or(16),
        pair_interval: args.get(5).and_then(|s| s.parse().ok()).unwrap_or(12),
        ..TrainHyperparams::default()
    };

    let t0 = Instant::now();
    let mut cb = |step: usize, loss: f64| {
        if step % 50 == 0 {
            eprintln!("step {step:5}  loss {loss:.4}  ({:.1?})", t0.elapsed());
        }
    };
    let weights = train(&config, &spec, &table, &hp, steps, seed, Some(&mut cb)).unwrap();
    eprintln!("trained {steps} steps in {:.1?}", t0.elapsed());

    let depths = [0.1, 0.3, 0.5, 0.7, 0.9];
    let lengths = [256usize, 512, 1024];
    let episodes = 20;

    let t1 = Instant::now();
    let base_grid = niah_eval(&weights, &table, &spec, &lengths, &depths, episodes, 99).unwrap();
    let scaled = scaled_frequency_table(
        rotary,
        &ScalingConfig::with_defaults(config.train_context as u64, 1024).unwrap(),
    )
    .unwrap();
    let ext_grid = niah_eval(&weights, &scaled, &spec, &lengths, &depths, episodes, 99).unwrap();
    eprintln!("eval in {:.1?}", t1.elapsed());

    for &len in &lengths {
        println!(
            "len {len:5}: extrapolate {:.3}  extend {:.3}",
            base_grid.mean_at_length(len).unwrap(),
            ext_grid.mean_at_length(len).unwrap()
        );
    }
}
