//! Artifact directory with a hashed manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Directory that collects the files of one run.
pub struct RunDir {
    pub path: PathBuf,
    pub files: Vec<FileRecord>,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(path)?;
        Ok(Self { path: path.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        fs::write(self.path.join(name), contents)?;
        self.files.push(FileRecord { name: name.into(), sha256: sha256_hex(contents.as_bytes()), bytes: contents.len() });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.into()))?;
        self.write(name, &(text + "\n"))
    }
}

/// Output directory for a run: absolute `dir` as given, otherwise below `root`.
pub fn resolve_dir(root: &Path, dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        dir.to_path_buf()
    } else {
        root.join(dir)
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
