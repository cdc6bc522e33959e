use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmittedFile {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub wall_clock_seconds: f64,
    pub files: Vec<EmittedFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Writes every `(name, content)` into `dir`, then the manifest describing them.
pub fn write_outputs(
    dir: &Path,
    command: &str,
    config: &serde_json::Value,
    wall_clock_seconds: f64,
    files: &[(&str, String)],
) -> Result<RunManifest, CliError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut emitted = Vec::with_capacity(files.len());
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(io(&path))?;
        emitted.push(EmittedFile {
            name: name.to_string(),
            bytes: content.len(),
            sha256: sha256_hex(content.as_bytes()),
        });
    }
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        wall_clock_seconds,
        files: emitted,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(manifest)
}
