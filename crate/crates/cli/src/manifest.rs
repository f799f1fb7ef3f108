use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub args: serde_json::Value,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// Hex SHA-256 of every input and output file.
    pub checksums: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, f64>,
    pub peak_memory_kb: Option<u64>,
    pub metrics: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, args: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION"),
            args,
            config: serde_json::Value::Null,
            seed: None,
            checksums: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
            peak_memory_kb: None,
            metrics: serde_json::Value::Null,
        }
    }

    pub fn checksum(&mut self, label: &str, path: &Path) -> anyhow::Result<()> {
        let sum = hdindex::ingest::file_checksum(path)
            .with_context(|| format!("checksumming {}", path.display()))?;
        self.checksums.insert(label.into(), hex(&sum));
        Ok(())
    }

    pub fn time(&mut self, label: &str, since: Instant) {
        self.timings_ms
            .insert(label.into(), since.elapsed().as_secs_f64() * 1e3);
    }

    pub fn write(mut self, path: &Path) -> anyhow::Result<()> {
        self.peak_memory_kb = peak_memory_kb();
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

pub fn default_path(out: &Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    })
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Peak resident set size (VmHWM) on Linux.
fn peak_memory_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}
