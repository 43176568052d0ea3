//! Report provenance: tool version, resolved-config hash, and input file
//! hashes embedded in every emitted report.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = "netspect";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub config_sha256: String,
    /// path -> sha256 of the file bytes
    pub inputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Hash the resolved config by serializing it; field order is fixed by the
/// struct definition, so the hash is stable.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(
        serde_json::to_string(config)
            .expect("config serializes")
            .as_bytes(),
    )
}

pub fn provenance<T: Serialize>(config: &T, input_paths: &[&Path]) -> Result<Provenance> {
    let mut inputs = BTreeMap::new();
    for path in input_paths {
        inputs.insert(path.display().to_string(), hash_file(path)?);
    }
    Ok(Provenance {
        tool: TOOL_NAME,
        tool_version: TOOL_VERSION,
        config_sha256: config_hash(config),
        inputs,
    })
}

/// Fail fast with a clear message when an input path is missing.
pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        anyhow::bail!(crate::CliError::MissingInput(format!(
            "{what} not found: `{}`",
            path.display()
        )));
    }
    Ok(())
}

pub fn write_json_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text)
        .with_context(|| format!("cannot write report `{}`", path.display()))?;
    Ok(())
}
