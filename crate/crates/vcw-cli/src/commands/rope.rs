//! `vcw rope` — dump the per-dimension frequency scaling report as CSV.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use vcw_core::extension::{dimension_report, ScalingConfig};
use vcw_core::rope::RotaryConfig;

use super::fmt_f64;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RopeArgs {
    /// Rotary head dimension (even).
    #[arg(long, default_value_t = 128)]
    pub head_dim: usize,
    /// Frequency base.
    #[arg(long, default_value_t = 10000.0)]
    pub base: f64,
    /// Visual context length seen in training, tokens.
    #[arg(long = "l-train", default_value_t = ScalingConfig::DEFAULT_VISUAL_TRAIN_LEN)]
    pub l_train: u64,
    /// Target visual context length, tokens. Defaults to `l-train * scale`.
    #[arg(long = "l-test", conflicts_with = "scale")]
    pub l_test: Option<u64>,
    /// Context extension factor; shorthand for setting `l-test`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scale: Option<f64>,
    /// Lower ramp knee.
    #[arg(long, default_value_t = ScalingConfig::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Upper ramp knee.
    #[arg(long, default_value_t = ScalingConfig::DEFAULT_BETA)]
    pub beta: f64,
    /// Output CSV path.
    #[arg(long, short, default_value = "rope_report.csv")]
    pub out: PathBuf,
}

impl RopeArgs {
    /// Materializes `l_test` from `scale` so the manifest carries only
    /// resolved values.
    pub fn resolve(mut self) -> CliResult<Self> {
        if let Some(scale) = self.scale.take() {
            if !(scale >= 1.0) {
                return Err(CliError::Validation(format!(
                    "--scale must be >= 1, got {scale}"
                )));
            }
            self.l_test = Some((self.l_train as f64 * scale).round() as u64);
        }
        if self.l_test.is_none() {
            self.l_test = Some(self.l_train);
        }
        Ok(self)
    }
}

pub fn run(args: &RopeArgs) -> CliResult<()> {
    let rotary = RotaryConfig::new(args.head_dim, args.base)
        .map_err(|e| CliError::Validation(format!("--head-dim/--base: {e}")))?;
    let l_test = args.l_test.expect("resolved");
    let scaling = ScalingConfig::new(args.l_train, l_test, args.alpha, args.beta)
        .map_err(|e| CliError::Validation(format!("--l-train/--l-test/--alpha/--beta: {e}")))?;
    let report = dimension_report(rotary, &scaling)?;

    let mut csv = String::from("dim,theta,wavelength,r,gamma,theta_scaled\n");
    for rec in &report {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rec.dim_index,
            fmt_f64(rec.theta),
            fmt_f64(rec.wavelength),
            fmt_f64(rec.ratio_r),
            fmt_f64(rec.gamma),
            fmt_f64(rec.theta_scaled)
        ));
    }
    std::fs::write(&args.out, csv)?;
    RunManifest::new(super::CommandArgs::Rope(args.clone()), &[])?.write_alongside(&args.out)?;
    Ok(())
}
