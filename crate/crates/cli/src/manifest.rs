//! Run manifests: one JSON file per command invocation binding its outputs
//! to the exact inputs and configuration that produced them.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::data("io", format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn same_file_name(a: &str, b: &Path) -> bool {
    Path::new(a).file_name().is_some() && Path::new(a).file_name() == b.file_name()
}

impl RunManifest {
    pub fn begin(command: &str, config: serde_json::Value, deterministic: bool) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            corpus_fingerprint: None,
            index_fingerprint: None,
            embedder: None,
            classifier: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: (!deterministic).then(Utc::now),
            finished_at: None,
        }
    }

    /// Records an input after checking it against the manifest that
    /// produced it, if there is one.
    pub fn input(&mut self, role: &str, path: &Path) -> CliResult<String> {
        let sha = verify_input(path)?;
        self.inputs.push(FileRecord { role: role.into(), path: path.display().to_string(), sha256: sha.clone() });
        Ok(sha)
    }

    pub fn output(&mut self, role: &str, path: &Path) -> CliResult<()> {
        let sha = sha256_file(path)?;
        self.outputs.push(FileRecord { role: role.into(), path: path.display().to_string(), sha256: sha });
        Ok(())
    }

    pub fn finish(mut self, out: &Path) -> CliResult<PathBuf> {
        if self.started_at.is_some() {
            self.finished_at = Some(Utc::now());
        }
        let path = manifest_path(out);
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::data("io", format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::data("io", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::data("manifest", format!("{}: {e}", path.display())))
    }

    pub fn input_sha(&self, role: &str) -> Option<&str> {
        self.inputs.iter().find(|r| r.role == role).map(|r| r.sha256.as_str())
    }
}

/// Hashes `path` and, when a manifest sits next to it, checks that the
/// manifest lists this file among its outputs with the same hash.
pub fn verify_input(path: &Path) -> CliResult<String> {
    let sha = sha256_file(path)?;
    let mpath = manifest_path(path);
    if !mpath.exists() {
        log::debug!("{}: no manifest, accepting as a source file", path.display());
        return Ok(sha);
    }
    let manifest = RunManifest::load(&mpath)?;
    check_listed(&manifest, path, &sha, &mpath)?;
    Ok(sha)
}

/// Checks a file that some other manifest (not its sibling) lists as output.
pub fn check_listed(manifest: &RunManifest, path: &Path, sha: &str, mpath: &Path) -> CliResult<()> {
    match manifest.outputs.iter().find(|r| same_file_name(&r.path, path)) {
        Some(rec) if rec.sha256 == sha => Ok(()),
        Some(rec) => Err(CliError::data(
            "fingerprint_mismatch",
            format!(
                "{} was modified after {} wrote it (sha256 {} != recorded {})",
                path.display(),
                mpath.display(),
                sha,
                rec.sha256
            ),
        )),
        None => Err(CliError::data(
            "fingerprint_mismatch",
            format!("{} does not list {} as an output", mpath.display(), path.display()),
        )),
    }
}
