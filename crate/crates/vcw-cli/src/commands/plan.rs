//! `vcw plan` — token/memory budget report across the standard pooling
//! configurations, using an affine model fitted to calibration data.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use vcw_core::budget::{
    fit_affine, kv_cache_bytes, predict, reduction, KvGeometry, MemoryObservation,
};
use vcw_core::pooling::{token_count, PoolingPlan};

use super::fmt_f64;

/// Built-in calibration measurements: pooling config vs observed GB at 256
/// frames on a 27x27 grid.
const DEFAULT_CALIBRATION: &str = include_str!("../../data/calibration.csv");

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PlanArgs {
    /// Frame count to budget for.
    #[arg(long, default_value_t = 256)]
    pub frames: usize,
    /// Spatial grid side per frame.
    #[arg(long, default_value_t = 27)]
    pub grid: usize,
    /// Calibration CSV (sh,sl,k,memory_gb). Defaults to
    /// `$VCW_CONFIG_DIR/calibration.csv` when set, else the built-in table.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub calibration: Option<PathBuf>,
    /// Decoder layers for the KV-cache column.
    #[arg(long, default_value_t = 28)]
    pub layers: u64,
    /// KV heads per layer.
    #[arg(long, default_value_t = 4)]
    pub kv_heads: u64,
    /// Per-head dimension.
    #[arg(long, default_value_t = 128)]
    pub head_dim: u64,
    /// Bytes per cached element.
    #[arg(long, default_value_t = 2)]
    pub bytes: u64,
    /// Output CSV path.
    #[arg(long, short, default_value = "plan.csv")]
    pub out: PathBuf,
}

impl PlanArgs {
    /// Materializes the calibration source from `VCW_CONFIG_DIR` so the
    /// manifest records an explicit path.
    pub fn resolve(mut self) -> CliResult<Self> {
        if self.calibration.is_none() {
            if let Ok(dir) = std::env::var("VCW_CONFIG_DIR") {
                let candidate = Path::new(&dir).join("calibration.csv");
                if candidate.exists() {
                    self.calibration = Some(candidate);
                }
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy)]
struct PlanRow {
    sh: usize,
    sl: usize,
    k: usize,
}

impl PlanRow {
    fn plan(&self) -> CliResult<PoolingPlan> {
        let plan = if self.k == 0 {
            PoolingPlan::uniform(self.sh)
        } else {
            PoolingPlan::grouped(self.k, self.sh, self.sl)
        };
        plan.map_err(|e| CliError::Validation(e.to_string()))
    }

    fn label(&self) -> String {
        format!("({};{});{}", self.sh, self.sl, self.k)
    }
}

fn parse_calibration(text: &str) -> CliResult<Vec<(PlanRow, f64)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CliError::Format(format!(
                "calibration line {}: expected sh,sl,k,memory_gb",
                i + 1
            )));
        }
        let parse = |s: &str| -> CliResult<usize> {
            s.trim().parse().map_err(|_| {
                CliError::Format(format!("calibration line {}: bad integer '{s}'", i + 1))
            })
        };
        let row = PlanRow {
            sh: parse(parts[0])?,
            sl: parse(parts[1])?,
            k: parse(parts[2])?,
        };
        let gb: f64 = parts[3].trim().parse().map_err(|_| {
            CliError::Format(format!(
                "calibration line {}: bad memory '{}'",
                i + 1,
                parts[3]
            ))
        })?;
        rows.push((row, gb));
    }
    Ok(rows)
}

pub fn run(args: &PlanArgs) -> CliResult<()> {
    if args.frames == 0 {
        return Err(CliError::Validation("--frames must be positive".into()));
    }
    if args.grid == 0 {
        return Err(CliError::Validation("--grid must be positive".into()));
    }
    let geometry = KvGeometry {
        layers: args.layers,
        kv_heads: args.kv_heads,
        head_dim: args.head_dim,
        bytes_per_element: args.bytes,
    };
    if geometry.layers == 0
        || geometry.kv_heads == 0
        || geometry.head_dim == 0
        || geometry.bytes_per_element == 0
    {
        return Err(CliError::Validation(
            "KV geometry values must be positive".into(),
        ));
    }

    let (text, inputs): (String, Vec<&Path>) = match &args.calibration {
        Some(path) => (
            std::fs::read_to_string(path).map_err(|e| {
                CliError::Validation(format!("cannot read {}: {e}", path.display()))
            })?,
            vec![path.as_path()],
        ),
        None => (DEFAULT_CALIBRATION.to_string(), vec![]),
    };
    let calibration = parse_calibration(&text)?;
    // calibration token counts always use the 256-frame, 27-grid measurement
    // setting, independent of the requested --frames
    let observations: Vec<MemoryObservation> = calibration
        .iter()
        .map(|(row, gb)| {
            Ok(MemoryObservation {
                tokens: token_count(256, 27, &row.plan()?)? as u64,
                memory_gb: *gb,
            })
        })
        .collect::<CliResult<_>>()?;
    let model = fit_affine(&observations)?;

    let baseline_plan = PoolingPlan::uniform(2).expect("stride 2");
    let baseline_tokens = token_count(args.frames, args.grid, &baseline_plan)? as u64;
    let baseline_gb = predict(&model, baseline_tokens);

    let mut csv = String::from("config,tokens,predicted_gb,kv_cache_gb,reduction_vs_baseline\n");
    for (row, _) in &calibration {
        let tokens = token_count(args.frames, args.grid, &row.plan()?)? as u64;
        let gb = predict(&model, tokens);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.label(),
            tokens,
            fmt_f64(gb),
            fmt_f64(kv_cache_bytes(&geometry, tokens) as f64 / 1e9),
            fmt_f64(reduction(baseline_gb, gb)?)
        ));
    }
    std::fs::write(&args.out, csv)?;
    RunManifest::new(super::CommandArgs::Plan(args.clone()), &inputs)?
        .write_alongside(&args.out)?;
    Ok(())
}
