//! The per-run manifest: resolved settings plus provenance.
//!
//! Primary outputs (CSV/JSON artifacts) are byte-deterministic for a fixed
//! seed; anything time-dependent — the wall-clock timestamp and the run
//! duration — lives only here.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::errors::{CliError, CliResult};

pub const MANIFEST_SCHEMA: &str = "energylens-manifest-v1";

/// File name of the manifest inside the run's output directory.
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    /// Subcommand that ran.
    pub command: String,
    /// Seed every random choice in the run derived from.
    pub seed: u64,
    /// Fully resolved settings (flag > config file > default).
    pub settings: BTreeMap<String, String>,
    /// Files read.
    pub inputs: Vec<String>,
    /// Files written (not counting this manifest).
    pub outputs: Vec<String>,
    /// Seconds since the Unix epoch when the run finished.
    pub unix_time_s: u64,
    /// Run duration.
    pub wall_time_ms: u128,
}

/// Writes `<out_dir>/manifest.json`.
pub fn write_manifest(manifest: &Manifest, out_dir: &Path) -> CliResult<()> {
    let path = out_dir.join(MANIFEST_NAME);
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::runtime(format!("manifest serialization failed: {e}")))?;
    std::fs::write(&path, body + "\n")
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))
}

/// Seconds since the Unix epoch, saturating at 0 if the clock is wrong.
pub fn unix_time_s() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
