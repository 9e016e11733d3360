//! `vcw ppl` — sliding-window perplexity of a checkpoint over a generated
//! held-out sequence, bucketed by position.

use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::formats::read_checkpoint;
use crate::manifest::RunManifest;
use vcw_core::decoder::{generate_episode, sliding_window_nll, NiahSpec};
use vcw_core::extension::ScalingConfig;

use super::fmt_f64;
use super::niah::{table_for, Strategy};

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PplArgs {
    /// Trained checkpoint (VCWC).
    #[arg(long, short)]
    pub checkpoint: PathBuf,
    /// Scoring window size.
    #[arg(long, default_value_t = 256)]
    pub window: usize,
    /// Window advance.
    #[arg(long, default_value_t = 128)]
    pub stride: usize,
    /// Evaluation sequence length.
    #[arg(long, default_value_t = 1024)]
    pub length: usize,
    /// Position-bucket width for the report.
    #[arg(long, default_value_t = 128)]
    pub bucket: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Strategy::Extrapolate)]
    pub strategy: Strategy,
    #[arg(long, default_value_t = ScalingConfig::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = ScalingConfig::DEFAULT_BETA)]
    pub beta: f64,
    /// Output CSV path.
    #[arg(long, short, default_value = "ppl.csv")]
    pub out: PathBuf,
}

pub fn run(args: &PplArgs) -> CliResult<()> {
    if args.window < 2 {
        return Err(CliError::Validation("--window must be at least 2".into()));
    }
    if args.stride == 0 || args.bucket == 0 {
        return Err(CliError::Validation(
            "--stride and --bucket must be positive".into(),
        ));
    }
    if args.length < 2 {
        return Err(CliError::Validation("--length must be at least 2".into()));
    }

    let weights = read_checkpoint(&args.checkpoint)?;
    let table = table_for(
        &weights,
        args.strategy,
        args.length as u64,
        args.alpha,
        args.beta,
    )?;
    let spec = NiahSpec::for_vocab(weights.config.vocab_size);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let episode = generate_episode(&spec, args.length, 0.5, &mut rng)?;
    let nll = sliding_window_nll(&weights, &episode.tokens, &table, args.window, args.stride)?;

    let mut csv = String::from("bucket_start,bucket_end,ppl\n");
    // nll[i] scores token i+1
    let mut start = 1usize;
    while start < args.length {
        let end = (start + args.bucket).min(args.length);
        let slice = &nll[start - 1..end - 1];
        let ppl = (slice.iter().sum::<f64>() / slice.len() as f64).exp();
        csv.push_str(&format!("{start},{end},{}\n", fmt_f64(ppl)));
        start = end;
    }
    let overall = (nll.iter().sum::<f64>() / nll.len() as f64).exp();
    csv.push_str(&format!("1,{},{}\n", args.length, fmt_f64(overall)));
    std::fs::write(&args.out, csv)?;
    RunManifest::new(super::CommandArgs::Ppl(args.clone()), &[&args.checkpoint])?
        .write_alongside(&args.out)?;
    println!("{}", fmt_f64(overall));
    Ok(())
}
