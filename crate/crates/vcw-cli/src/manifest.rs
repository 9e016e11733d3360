//! Run manifests: every output CSV or checkpoint is accompanied by a JSON
//! record of the fully resolved configuration and input digests, and any run
//! can be replayed byte-for-byte from its manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::CommandArgs;
use crate::error::{CliError, CliResult};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub subcommand: String,
    /// Fully resolved flags, defaults materialized.
    pub config: CommandArgs,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let data = fs::read(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut h = Sha256::new();
    h.update(&data);
    Ok(format!("{:x}", h.finalize()))
}

impl RunManifest {
    pub fn new(config: CommandArgs, input_paths: &[&Path]) -> CliResult<Self> {
        let mut inputs = BTreeMap::new();
        for p in input_paths {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        Ok(Self {
            artifact_version: ARTIFACT_VERSION.to_string(),
            subcommand: config.name().to_string(),
            config,
            inputs,
        })
    }

    /// Manifest path for a primary output: `<output>.manifest.json`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    pub fn write_alongside(&self, output: &Path) -> CliResult<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Format(e.to_string()))?;
        fs::write(Self::path_for(output), text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Format(format!("bad manifest {}: {e}", path.display())))
    }

    /// Confirms that the recorded inputs still hash to the same digests.
    pub fn verify_inputs(&self) -> CliResult<()> {
        for (path, digest) in &self.inputs {
            let now = sha256_file(Path::new(path))?;
            if &now != digest {
                return Err(CliError::Validation(format!(
                    "input {path} changed since the manifest was written"
                )));
            }
        }
        Ok(())
    }
}
