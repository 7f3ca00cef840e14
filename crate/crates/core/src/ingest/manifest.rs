//! Instance-labelled pairing of event streams and color images.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: String,
    /// EVT file, relative to the manifest's directory unless absolute.
    pub events: String,
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub instances: Vec<InstanceEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(instances: Vec<InstanceEntry>, base_dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let m = Self {
            instances,
            base_dir: base_dir.into(),
        };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<(), IngestError> {
        let mut seen = HashSet::new();
        for inst in &self.instances {
            if !seen.insert(inst.id.as_str()) {
                return Err(IngestError::InvalidManifest(format!(
                    "duplicate instance id `{}`",
                    inst.id
                )));
            }
            if inst.events.is_empty() {
                return Err(IngestError::InvalidManifest(format!(
                    "instance `{}` has no event stream",
                    inst.id
                )));
            }
            if inst.images.is_empty() {
                return Err(IngestError::InvalidManifest(format!(
                    "instance `{}` has no color image",
                    inst.id
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let bytes = std::fs::read(path).map_err(|e| IngestError::io(path, e))?;
        let mut m: Self = serde_json::from_slice(&bytes)
            .map_err(|e| IngestError::InvalidManifest(e.to_string()))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.check()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        std::fs::write(path, self.to_json()).map_err(|e| IngestError::io(path, e))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    /// Number of instances.
    pub fn num_instances(&self) -> usize {
        self.instances.len()
    }

    /// Total number of color images.
    pub fn num_images(&self) -> usize {
        self.instances.iter().map(|i| i.images.len()).sum()
    }

    /// Number of event streams (one per instance).
    pub fn num_streams(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}
