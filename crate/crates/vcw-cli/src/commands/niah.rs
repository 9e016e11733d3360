//! `vcw niah` — needle-in-a-haystack accuracy grid for a trained checkpoint.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::formats::read_checkpoint;
use crate::manifest::RunManifest;
use vcw_core::decoder::{niah_eval, DecoderWeights, NiahSpec};
use vcw_core::extension::{scaled_frequency_table, ScalingConfig};
use vcw_core::rope::{frequency_table, FrequencyTable, RotaryConfig};

use super::{fmt_f64, parse_list};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Unmodified frequencies beyond the training window.
    Extrapolate,
    /// Visual-context-window scaled frequencies.
    Extend,
}

/// Builds the evaluation frequency table for a checkpoint and strategy.
pub fn table_for(
    weights: &DecoderWeights,
    strategy: Strategy,
    target_len: u64,
    alpha: f64,
    beta: f64,
) -> CliResult<FrequencyTable> {
    let rotary = RotaryConfig::with_default_base(weights.config.head_dim())
        .map_err(|e| CliError::Validation(e.to_string()))?;
    match strategy {
        Strategy::Extrapolate => Ok(frequency_table(rotary)),
        Strategy::Extend => {
            let train_len = weights.config.train_context as u64;
            let scaling = ScalingConfig::new(train_len, target_len.max(train_len), alpha, beta)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            Ok(scaled_frequency_table(rotary, &scaling)?)
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NiahArgs {
    /// Trained checkpoint (VCWC).
    #[arg(long, short)]
    pub checkpoint: PathBuf,
    /// Comma-separated sequence lengths.
    #[arg(long, default_value = "256,512,1024")]
    pub lengths: String,
    /// Comma-separated needle depths in [0, 1].
    #[arg(long, default_value = "0.1,0.3,0.5,0.7,0.9")]
    pub depths: String,
    /// Episodes per grid cell.
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seeds: u64,
    #[arg(long, value_enum, default_value_t = Strategy::Extend)]
    pub strategy: Strategy,
    /// Extension target length; defaults to the largest evaluated length.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target_len: Option<u64>,
    #[arg(long, default_value_t = ScalingConfig::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = ScalingConfig::DEFAULT_BETA)]
    pub beta: f64,
    /// Output CSV path.
    #[arg(long, short, default_value = "niah_grid.csv")]
    pub out: PathBuf,
}

pub fn run(args: &NiahArgs) -> CliResult<()> {
    let lengths: Vec<usize> = parse_list(&args.lengths, "--lengths")?;
    let depths: Vec<f64> = parse_list(&args.depths, "--depths")?;
    if lengths.is_empty() || depths.is_empty() {
        return Err(CliError::Validation(
            "--lengths and --depths must be non-empty".into(),
        ));
    }
    if depths.iter().any(|d| !(0.0..=1.0).contains(d)) {
        return Err(CliError::Validation(
            "--depths entries must lie in [0, 1]".into(),
        ));
    }
    if args.episodes == 0 {
        return Err(CliError::Validation("--episodes must be positive".into()));
    }

    let weights = read_checkpoint(&args.checkpoint)?;
    let target = args
        .target_len
        .unwrap_or_else(|| lengths.iter().copied().max().unwrap_or(0) as u64);
    let table = table_for(&weights, args.strategy, target, args.alpha, args.beta)?;
    let spec = NiahSpec::for_vocab(weights.config.vocab_size);
    let grid = niah_eval(
        &weights,
        &table,
        &spec,
        &lengths,
        &depths,
        args.episodes,
        args.seeds,
    )?;

    let mut csv = String::from("length,depth,accuracy\n");
    for (i, &length) in grid.lengths.iter().enumerate() {
        for (j, &depth) in grid.depths.iter().enumerate() {
            match grid.cells[i][j] {
                Some(acc) => {
                    csv.push_str(&format!("{length},{},{}\n", fmt_f64(depth), fmt_f64(acc)))
                }
                None => csv.push_str(&format!("{length},{},invalid\n", fmt_f64(depth))),
            }
        }
    }
    std::fs::write(&args.out, csv)?;
    RunManifest::new(super::CommandArgs::Niah(args.clone()), &[&args.checkpoint])?
        .write_alongside(&args.out)?;
    Ok(())
}
