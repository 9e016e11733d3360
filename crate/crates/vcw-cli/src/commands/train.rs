//! `vcw train` — train the toy decoder on retrieval episodes and write a
//! checkpoint.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::formats::write_checkpoint;
use crate::manifest::RunManifest;
use vcw_core::decoder::{train, ModelConfig, NiahSpec, TrainHyperparams};
use vcw_core::rope::{frequency_table, RotaryConfig};

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 512)]
    pub vocab: usize,
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub mlp_ratio: usize,
    /// Maximum training sequence length.
    #[arg(long, default_value_t = 256)]
    pub train_context: usize,
    /// Optimization steps; the default reliably forms the retrieval circuit.
    #[arg(long, default_value_t = 6000)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint output path.
    #[arg(long, short, default_value = "model.vcwc")]
    pub out: PathBuf,
    /// Print loss every N steps (0 = quiet).
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub log_every: usize,
}

impl TrainArgs {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            vocab_size: self.vocab,
            d_model: self.d_model,
            n_layers: self.layers,
            n_heads: self.heads,
            mlp_ratio: self.mlp_ratio,
            train_context: self.train_context,
        }
    }
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let config = args.model_config();
    config
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let spec = NiahSpec::for_vocab(config.vocab_size);
    let table = frequency_table(
        RotaryConfig::with_default_base(config.head_dim())
            .map_err(|e| CliError::Validation(e.to_string()))?,
    );
    let hp = TrainHyperparams {
        batch_size: args.batch_size,
        learning_rate: args.lr,
        ..TrainHyperparams::default()
    };
    let mut log = |step: usize, loss: f64| {
        if args.log_every > 0 && step % args.log_every == 0 {
            eprintln!("step {step}  loss {loss:.4}");
        }
    };
    let weights = train(
        &config,
        &spec,
        &table,
        &hp,
        args.steps,
        args.seed,
        Some(&mut log),
    )?;
    write_checkpoint(&args.out, &weights)?;
    RunManifest::new(super::CommandArgs::Train(args.clone()), &[])?.write_alongside(&args.out)?;
    Ok(())
}
