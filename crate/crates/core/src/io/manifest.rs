use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::dataset::AugmentParams;
use crate::depth_filter::FilterParams;
use crate::render::RenderParams;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetMode {
    Filtered,
    Leaky,
}

impl fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Filtered => "filtered",
            Self::Leaky => "leaky",
        })
    }
}

impl FromStr for DatasetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "filtered" => Ok(Self::Filtered),
            "leaky" => Ok(Self::Leaky),
            other => Err(format!(
                "unknown mode \"{other}\" (expected filtered or leaky)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestParameters {
    pub filter: FilterParams,
    pub render: RenderParams,
    pub augment: AugmentParams,
}

/// Index of a generated dataset, stored as `manifest.json` at its root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub mode: DatasetMode,
    pub ids: Vec<String>,
    pub parameters: ManifestParameters,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), String> {
        if self.version != MANIFEST_VERSION {
            return Err(format!("unsupported manifest version {}", self.version));
        }
        let mut ids: Vec<&String> = self.ids.iter().collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(format!("duplicate pair id \"{}\"", w[0]));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), IoError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| IoError::file(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| IoError::format(path, e))?;
        manifest.validate().map_err(|e| IoError::format(path, e))?;
        Ok(manifest)
    }
}
