//! Stage bookkeeping: input and config hashes appended to `run.log`, and
//! the per-directory lock.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::CliError;

pub const RUN_LOG: &str = "run.log";
pub const LOCK_FILE: &str = ".regrowth.lock";

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// Accumulates every file a stage reads. Files are keyed by their path
/// relative to the run directory so the hash does not depend on where
/// that directory lives.
pub struct InputHasher {
    root: PathBuf,
    entries: Vec<(String, String)>,
}

impl InputHasher {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf(), entries: vec![] }
    }

    pub fn add(&mut self, path: &Path, bytes: &[u8]) {
        let key = path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().replace('\\', "/");
        self.entries.push((key, sha256_hex(bytes)));
    }

    pub fn finish(mut self) -> String {
        self.entries.sort();
        self.entries.dedup();
        let mut h = Sha256::new();
        for (name, digest) in &self.entries {
            h.update(name.as_bytes());
            h.update(b"\0");
            h.update(digest.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestLine {
    pub stage: String,
    pub input_hash: String,
    pub config_hash: String,
    pub duration_ms: u128,
}

impl ManifestLine {
    pub fn render(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.stage, self.input_hash, self.config_hash, self.duration_ms)
    }

    pub fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return None;
        }
        Some(Self { stage: f[0].into(), input_hash: f[1].into(), config_hash: f[2].into(), duration_ms: f[3].parse().ok()? })
    }
}

pub fn append(out_dir: &Path, stage: &str, input_hash: String, config_hash: String, took: Duration) -> Result<(), CliError> {
    let path = out_dir.join(RUN_LOG);
    let line = ManifestLine { stage: stage.into(), input_hash, config_hash, duration_ms: took.as_millis() };
    let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| CliError::io(&path, e))?;
    writeln!(f, "{}", line.render()).map_err(|e| CliError::io(&path, e))
}

pub fn read_log(out_dir: &Path) -> Result<Vec<ManifestLine>, CliError> {
    let path = out_dir.join(RUN_LOG);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(text.lines().filter_map(ManifestLine::parse).collect())
}

/// Held for the duration of a stage; the file goes away on drop.
pub struct Lock {
    path: PathBuf,
}

impl Lock {
    pub fn acquire(out_dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        let path = out_dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(path)),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
