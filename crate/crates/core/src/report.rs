//! Run artifacts: pretty-printed JSON reports, CSV tables, and a manifest
//! tying outputs back to the exact configuration and seed that produced
//! them.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Error, Result};

/// FNV-1a over the raw config text; cheap and stable across runs, which is
/// all the manifest needs to detect a changed input.
pub fn config_fingerprint(text: &str) -> String {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x100_0000_01b3;
    let mut hash = OFFSET;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(PRIME);
    }
    format!("{hash:016x}")
}

/// Identifies one run: what was executed, from which config, with which
/// seed. The timestamp is informational and is the only field expected to
/// differ between reruns of the same config.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub tool_version: String,
    pub unix_time_secs: u64,
}

impl Manifest {
    pub fn new(command: &str, config_text: &str, seed: u64) -> Self {
        let unix_time_secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Manifest {
            command: command.to_string(),
            config_fingerprint: config_fingerprint(config_text),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            unix_time_secs,
        }
    }
}

fn io_err(path: &Path, err: std::io::Error) -> Error {
    Error::InvalidParam(format!("cannot write {}: {err}", path.display()))
}

/// Serializes `value` as pretty JSON under `dir/name`.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidParam(format!("cannot serialize {name}: {e}")))?;
    let path = dir.join(name);
    fs::write(&path, body + "\n").map_err(|e| io_err(&path, e))
}

/// Writes an already-rendered CSV table under `dir/name`.
pub fn write_csv(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| io_err(&path, e))
}

/// Renders rows of (name, value, provenance) as a constants table.
pub fn constants_csv<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = (&'a str, f64, &'a str)>,
{
    let mut out = String::from("name,value,provenance\n");
    for (name, value, provenance) in rows {
        let quoted = provenance.replace('"', "\"\"");
        out.push_str(&format!("{name},{value:.12e},\"{quoted}\"\n"));
    }
    out
}

/// Renders a numeric table: a header plus rows of equal arity.
pub fn numeric_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable_and_input_sensitive() {
        let a = config_fingerprint("[kernel]\nalpha = 0.5\n");
        let b = config_fingerprint("[kernel]\nalpha = 0.5\n");
        let c = config_fingerprint("[kernel]\nalpha = 1.0\n");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
        // Frozen reference value for the empty input.
        assert_eq!(config_fingerprint(""), "cbf29ce484222325");
    }

    #[test]
    fn csv_renderers_quote_and_align() {
        let constants = constants_csv([("c1", 1.5, "growth check, step 0.01")]);
        assert!(constants.starts_with("name,value,provenance\n"));
        assert!(constants.contains("c1,1.5"));
        assert!(constants.contains("\"growth check, step 0.01\""));

        let table = numeric_csv(&["t", "sup"], &[vec![0.5, 2.0], vec![1.0, 1.0]]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "t,sup");
        assert!(lines[1].starts_with("5.0"));
    }

    #[test]
    fn manifest_carries_version_and_fingerprint() {
        let m = Manifest::new("density", "[kernel]\n", 42);
        assert_eq!(m.command, "density");
        assert_eq!(m.seed, 42);
        assert_eq!(m.config_fingerprint, config_fingerprint("[kernel]\n"));
        assert!(!m.tool_version.is_empty());
    }
}
