use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "run-manifest.json";

/// Record of one subcommand run. Holds no timestamps, so identical runs
/// write identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Arguments after the program name; rerunning them repeats the run.
    pub argv: Vec<String>,
    /// Fully resolved settings after config file and flags.
    pub settings: serde_json::Value,
    /// sha256 per input file.
    pub inputs: BTreeMap<String, String>,
    /// sha256 per written file.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut reader = BufReader::new(File::open(path)?);
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Collects inputs and outputs while a subcommand runs.
#[derive(Debug)]
pub struct RunRecorder {
    manifest: RunManifest,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl RunRecorder {
    pub fn new(command: &str, argv: &[String], settings: serde_json::Value) -> Self {
        RunRecorder {
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                argv: argv.to_vec(),
                settings,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                summary: serde_json::Value::Null,
            },
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn summary(&mut self, value: serde_json::Value) {
        self.manifest.summary = value;
    }

    /// Hashes every recorded file and writes the manifest to `path`.
    /// Directories are hashed file by file.
    pub fn finish(mut self, path: &Path) -> std::io::Result<RunManifest> {
        let base = path.parent().unwrap_or(Path::new("."));
        for (files, map) in [
            (&self.inputs, &mut self.manifest.inputs),
            (&self.outputs, &mut self.manifest.outputs),
        ] {
            for f in files {
                for file in expand(f)? {
                    let key = file.strip_prefix(base).unwrap_or(&file).display().to_string();
                    map.insert(key, sha256_file(&file)?);
                }
            }
        }
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(self.manifest)
    }
}

fn expand(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for e in entries {
        if e.file_name().is_some_and(|n| n == MANIFEST_NAME) {
            continue;
        }
        out.extend(expand(&e)?);
    }
    Ok(out)
}
