use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    /// Effective configuration after flags were applied.
    pub effective_config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub toolkit_version: String,
    pub duration_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Output directory that refuses to overwrite unless forced.
pub struct OutDir {
    pub dir: PathBuf,
    force: bool,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn new(dir: &Path, force: bool) -> Result<OutDir, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            force,
            written: Vec::new(),
        })
    }

    /// Fails before any work is done if one of `names` already exists.
    pub fn claim(&self, names: &[&str]) -> Result<(), CliError> {
        if self.force {
            return Ok(());
        }
        for n in names.iter().chain(std::iter::once(&MANIFEST_FILE)) {
            let p = self.dir.join(n);
            if p.exists() {
                return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", p.display())));
            }
        }
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        self.written.push(p.clone());
        Ok(p)
    }

    /// Records a file written by other means.
    pub fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    pub fn finish(self, mut manifest: RunManifest, started: Instant) -> Result<(), CliError> {
        manifest.outputs = self.written.iter().map(|p| digest(p)).collect::<Result<_, _>>()?;
        manifest.duration_secs = started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
        let p = self.dir.join(MANIFEST_FILE);
        fs::write(&p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    }
}
