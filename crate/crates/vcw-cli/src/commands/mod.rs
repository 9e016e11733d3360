pub mod niah;
pub mod plan;
pub mod pool;
pub mod ppl;
pub mod rope;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::CliResult;

/// Fully resolved arguments of any subcommand, as recorded in a manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum CommandArgs {
    Rope(rope::RopeArgs),
    Pool(pool::PoolArgs),
    Plan(plan::PlanArgs),
    Train(train::TrainArgs),
    Niah(niah::NiahArgs),
    Ppl(ppl::PplArgs),
}

impl CommandArgs {
    pub fn name(&self) -> &'static str {
        match self {
            CommandArgs::Rope(_) => "rope",
            CommandArgs::Pool(_) => "pool",
            CommandArgs::Plan(_) => "plan",
            CommandArgs::Train(_) => "train",
            CommandArgs::Niah(_) => "niah",
            CommandArgs::Ppl(_) => "ppl",
        }
    }

    /// Validates flags and executes; no input file is touched before
    /// validation succeeds.
    pub fn run(&self) -> CliResult<()> {
        match self {
            CommandArgs::Rope(a) => rope::run(a),
            CommandArgs::Pool(a) => pool::run(a),
            CommandArgs::Plan(a) => plan::run(a),
            CommandArgs::Train(a) => train::run(a),
            CommandArgs::Niah(a) => niah::run(a),
            CommandArgs::Ppl(a) => ppl::run(a),
        }
    }
}

/// Formats an f64 for CSV output; shortest round-trip representation keeps
/// reruns byte-identical.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| crate::error::CliError::Validation(format!("bad {what} entry '{p}'")))
        })
        .collect()
}
