//! Model directories: `manifest.json` next to a `weights.nvw` file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, SequenceClassifier};
use super::params::ParamSet;
use super::train::TrainConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.nvw";

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: invalid manifest: {source}")]
    Manifest {
        path: String,
        source: serde_json::Error,
    },
}

/// Everything needed to rebuild and rerun a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    /// `rule-type`, `detector` or `explainer`.
    pub kind: String,
    /// Fine or coarse type name for per-type models, `universal` otherwise.
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub seed: u64,
    pub decision_threshold: f64,
    pub encoder_checkpoint: String,
    pub with_context: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    /// Input-construction switches that must match at prediction time.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<String, String>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_manifest(path: &Path, manifest: &ModelManifest) -> Result<(), PersistError> {
    let f = File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(BufWriter::new(f), manifest).map_err(|source| {
        PersistError::Manifest {
            path: path.display().to_string(),
            source,
        }
    })
}

pub fn read_manifest(path: &Path) -> Result<ModelManifest, PersistError> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| PersistError::Manifest {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_model(
    dir: &Path,
    manifest: &ModelManifest,
    model: &SequenceClassifier,
) -> Result<(), PersistError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_manifest(&dir.join(MANIFEST_FILE), manifest)?;
    let weights = dir.join(WEIGHTS_FILE);
    let f = File::create(&weights).map_err(io_err(&weights))?;
    model
        .params()
        .write_to(BufWriter::new(f))
        .map_err(io_err(&weights))
}

pub fn load_model(dir: &Path) -> Result<(ModelManifest, SequenceClassifier), PersistError> {
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    let weights = dir.join(WEIGHTS_FILE);
    let f = File::open(&weights).map_err(io_err(&weights))?;
    let stored = ParamSet::read_from(BufReader::new(f)).map_err(io_err(&weights))?;
    let mut model = SequenceClassifier::new(&manifest.model, manifest.with_context, manifest.seed);
    model
        .params_mut()
        .load_values(&stored)
        .map_err(io_err(&weights))?;
    Ok((manifest, model))
}
