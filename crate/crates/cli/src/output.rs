use crate::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const REPORT_SCHEMA: &str = "holgen-report/1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything a report records about how it was produced.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub schema: &'static str,
    pub command: String,
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    pub precision: holgen::Precision,
    pub grid: crate::config::GridConfig,
    pub tool_version: &'static str,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    provenance: &'a Provenance,
    result: &'a T,
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    unix_time: u64,
    files: &'a [String],
}

/// Output directory; every file is written through a temporary and renamed.
pub struct Out {
    dir: PathBuf,
    written: Vec<String>,
}

impl Out {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Out { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn report<T: Serialize>(&mut self, prov: &Provenance, result: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(&Report { provenance: prov, result })
            .map_err(|e| CliError::Io(format!("report serialization: {e}")))?;
        bytes.push(b'\n');
        self.write("report.json", &bytes)
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.write(name, &bytes)
    }

    /// Sidecar with the wall-clock timestamp, kept out of the report.
    pub fn finish(mut self, command: &str) -> Result<Vec<String>, CliError> {
        let unix_time = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let files = self.written.clone();
        let bytes = serde_json::to_vec_pretty(&Meta { command, unix_time, files: &files })
            .map_err(|e| CliError::Io(format!("meta serialization: {e}")))?;
        self.write("meta.json", &bytes)?;
        Ok(self.written)
    }
}
