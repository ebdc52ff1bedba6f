//! Loading systems and workflows from JSON and STG files, and generating
//! synthetic instances.

mod json;
mod stg;
mod synthetic;

use std::path::Path;

use thiserror::Error;

pub use json::{
    parse_schedule_json, parse_system_json, parse_workflows_json, schedule_to_json,
    system_to_json, workflows_to_json,
};
pub use stg::parse_stg;
pub use synthetic::{generate_synthetic, layer_width};

use crate::model::{CycleError, FeatureSet, ModelError, System, Workflow};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Json,
    Stg,
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct InstanceBundle {
    pub system: System,
    pub workflows: Vec<Workflow>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("STG line {line}: {message}")]
    Stg { line: usize, message: String },
    #[error("system has no nodes")]
    EmptySystem,
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error("invalid model: {0}")]
    Model(ModelError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl From<ModelError> for IngestError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Cycle(c) => IngestError::Cycle(c),
            ModelError::EmptySystem => IngestError::EmptySystem,
            other => IngestError::Model(other),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, IngestError> {
    std::fs::read(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_system(path: &Path) -> Result<System, IngestError> {
    parse_system_json(&read(path)?)
}

/// Options applied to STG tasks, which carry no resource or feature requests.
#[derive(Debug, Clone)]
pub struct StgDefaults {
    pub cores: u32,
    pub features: FeatureSet,
}

impl Default for StgDefaults {
    fn default() -> Self {
        StgDefaults {
            cores: 1,
            features: FeatureSet::new(),
        }
    }
}

/// Loads `.stg` files as one workflow named after the file stem, anything else as a
/// workflows JSON document.
pub fn load_workflows(path: &Path, stg: &StgDefaults) -> Result<Vec<Workflow>, IngestError> {
    let bytes = read(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("stg")) {
        let text = String::from_utf8_lossy(&bytes);
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "stg".into());
        Ok(vec![parse_stg(&text, &id, stg.cores, &stg.features)?])
    } else {
        parse_workflows_json(&bytes)
    }
}
