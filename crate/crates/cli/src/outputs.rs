use std::fs;
use std::path::{Path, PathBuf};

use dictstereo::io::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

pub const OUTPUTS_FILE: &str = "outputs.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory.
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub version: u32,
    pub command: String,
    pub files: Vec<OutputEntry>,
}

/// Collects a hash for every artifact a command writes and stores them as
/// `outputs.json`.
#[derive(Debug)]
pub struct OutputLog {
    dir: PathBuf,
    manifest: OutputManifest,
}

impl OutputLog {
    pub fn new(dir: &Path, command: &str) -> Self {
        OutputLog {
            dir: dir.to_path_buf(),
            manifest: OutputManifest { version: 1, command: command.into(), files: Vec::new() },
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn record(&mut self, file: &str) -> CliResult<()> {
        let path = self.dir.join(file);
        let bytes = fs::read(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        self.manifest.files.push(OutputEntry {
            file: file.replace('\\', "/"),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::input(e.to_string()))?;
        write_file(&self.dir.join(file), text.as_bytes())?;
        self.record(file)
    }

    pub fn write_text(&mut self, file: &str, text: &str) -> CliResult<()> {
        write_file(&self.dir.join(file), text.as_bytes())?;
        self.record(file)
    }

    pub fn finish(mut self) -> CliResult<OutputManifest> {
        self.manifest.files.sort_by(|a, b| a.file.cmp(&b.file));
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| CliError::input(e.to_string()))?;
        write_file(&self.dir.join(OUTPUTS_FILE), text.as_bytes())?;
        Ok(self.manifest)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force` is set.
pub fn prepare_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let used = fs::read_dir(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?.next().is_some();
        if used && !force {
            return Err(CliError::input(format!("{} is not empty; pass --force to overwrite", dir.display())));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))
}

/// Checks every recorded hash in `dir/outputs.json`.
pub fn verify(dir: &Path) -> CliResult<OutputManifest> {
    let path = dir.join(OUTPUTS_FILE);
    let text = crate::config::read_text(&path)?;
    let m: OutputManifest = serde_json::from_str(&text).map_err(|e| crate::config::json_error(&path, e))?;
    for f in &m.files {
        let p = dir.join(&f.file);
        let bytes = fs::read(&p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(CliError::input(format!("{}: content hash does not match {OUTPUTS_FILE}", p.display())));
        }
    }
    Ok(m)
}
