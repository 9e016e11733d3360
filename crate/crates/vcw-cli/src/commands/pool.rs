//! `vcw pool` — progressively pool an embedding file and emit the layout
//! manifest.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::formats::{read_embedding, write_pooled};
use crate::manifest::RunManifest;
use vcw_core::pooling::{progressive_pool, PoolingPlan};

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PoolArgs {
    /// Input embedding file (VCWE).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Output embedding file.
    #[arg(long, short, default_value = "pooled.vcwe")]
    pub output: PathBuf,
    /// Layout manifest CSV path.
    #[arg(long, default_value = "layout.csv")]
    pub layout: PathBuf,
    /// Uniform pooling: one stride for every frame.
    #[arg(long, conflicts_with_all = ["k", "sh", "sl"])]
    #[serde(default)]
    pub uniform: bool,
    /// Stride for uniform pooling.
    #[arg(long, requires = "uniform")]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stride: Option<usize>,
    /// Frames per group.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// High-resolution stride for each group head.
    #[arg(long, default_value_t = 2)]
    pub sh: usize,
    /// Low-resolution stride for the remaining frames.
    #[arg(long, default_value_t = 8)]
    pub sl: usize,
}

fn plan_of(args: &PoolArgs) -> CliResult<PoolingPlan> {
    if args.uniform {
        let stride = args
            .stride
            .ok_or_else(|| CliError::Validation("--uniform requires --stride".into()))?;
        Ok(PoolingPlan::uniform(stride)
            .map_err(|e| CliError::Validation(format!("--stride: {e}")))?)
    } else {
        Ok(PoolingPlan::grouped(args.k, args.sh, args.sl)
            .map_err(|e| CliError::Validation(format!("--k/--sh/--sl: {e}")))?)
    }
}

pub fn run(args: &PoolArgs) -> CliResult<()> {
    let plan = plan_of(args)?;
    let video = read_embedding(&args.input)?;
    let pooled = progressive_pool(&video, &plan)?;

    write_pooled(&args.output, &pooled)?;

    let mut csv = String::from("frame_index,group_index,is_head,side,token_offset\n");
    for f in &pooled.frames {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            f.frame_index, f.group_index, f.is_head as u8, f.grid.side, f.token_offset
        ));
    }
    std::fs::write(&args.layout, csv)?;

    RunManifest::new(super::CommandArgs::Pool(args.clone()), &[&args.input])?
        .write_alongside(&args.output)?;
    println!("{}", pooled.total_tokens);
    Ok(())
}
