//! Output plumbing: the commented metadata header, the config hash, fixed
//! CSV numeric formatting, and file/stdout writing.

use std::io::Write;
use std::path::PathBuf;

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TOOL_NAME: &str = "pml";

pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Fixed-precision scientific with 17 significant digits; round-trips every
/// double exactly.
pub fn fmt_e(v: f64) -> String {
    format!("{v:.16e}")
}

/// SHA-256 over the canonical config record, plus the raw workload bytes
/// when the workload came from a file, so the hash pins the actual input.
pub fn config_hash(record: &serde_json::Value, workload_bytes: Option<&[u8]>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(record.to_string().as_bytes());
    if let Some(bytes) = workload_bytes {
        hasher.update(bytes);
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Commented header line carried by every output file.
pub fn meta_line(hash: &str, workload_seed: Option<u64>, oracle_seed: Option<u64>) -> String {
    let ws = workload_seed.map_or_else(|| "-".to_string(), |s| s.to_string());
    let os = oracle_seed.map_or_else(|| "-".to_string(), |s| s.to_string());
    format!(
        "# {TOOL_NAME} version={} config_sha256={hash} workload_seed={ws} oracle_seed={os}",
        version()
    )
}

/// Metadata object embedded in JSON records (JSON has no comment syntax).
pub fn meta_value(
    hash: &str,
    workload_seed: Option<u64>,
    oracle_seed: Option<u64>,
) -> serde_json::Value {
    json!({
        "tool": TOOL_NAME,
        "version": version(),
        "config_sha256": hash,
        "workload_seed": workload_seed,
        "oracle_seed": oracle_seed,
    })
}

/// Writes to the output file, or stdout when no path was given.
pub fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write stdout: {e}"))),
    }
}

/// Assembles a JSON record document: metadata, the resolved config, and the
/// command's results, pretty-printed with a trailing newline.
pub fn json_document(
    meta: serde_json::Value,
    config: serde_json::Value,
    results: serde_json::Value,
) -> Result<String, CliError> {
    let doc = json!({
        "meta": meta,
        "config": config,
        "results": results,
    });
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Io(format!("cannot serialize record: {e}")))?;
    Ok(text + "\n")
}
