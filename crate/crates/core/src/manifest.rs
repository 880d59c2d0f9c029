//! Dataset manifest: which configurations exist and where their files live.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phantom::{NoiseModel, Phantom, ScanGeometry};
use crate::sinogram::{Sinogram, SinogramMeta};
use crate::tensor;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Plane {
    Plane0,
    Plane1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Position {
    Top,
    Middle,
    Bottom,
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The six (plane, position) strata in canonical order.
pub fn all_strata() -> Vec<(Plane, Position)> {
    let mut out = Vec::with_capacity(6);
    for plane in [Plane::Plane0, Plane::Plane1] {
        for pos in [Position::Top, Position::Middle, Position::Bottom] {
            out.push((plane, pos));
        }
    }
    out
}

pub fn stratum_label(plane: Plane, position: Position) -> String {
    format!("{plane}-{position}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationEntry {
    pub label: String,
    pub plane: Plane,
    pub position: Position,
    #[serde(default)]
    pub clean_path: Option<PathBuf>,
    pub sample_paths: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic {
        noise: NoiseModel,
        n_samples: usize,
        phantoms: Vec<Phantom>,
    },
    External {
        description: String,
    },
}

/// Paths inside a manifest are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub configurations: Vec<ConfigurationEntry>,
    pub geometry: ScanGeometry,
    pub provenance: Provenance,
    #[serde(skip)]
    pub root: PathBuf,
}

/// Identifies one noisy sample: configuration index and sample index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleRef {
    pub configuration: usize,
    pub index: usize,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        m.validate(true)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Checks label uniqueness and, when `check_files`, that every path exists.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        self.geometry.validate()?;
        let mut seen = HashSet::new();
        for c in &self.configurations {
            if !seen.insert(c.label.as_str()) {
                return Err(Error::config(format!("duplicate configuration label {}", c.label)));
            }
            if check_files {
                for p in c.clean_path.iter().chain(&c.sample_paths) {
                    let full = self.resolve(p);
                    if !full.is_file() {
                        return Err(Error::io(
                            full,
                            std::io::Error::new(std::io::ErrorKind::NotFound, "listed in manifest"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.configurations.iter().position(|c| c.label == label)
    }

    /// All samples in manifest order.
    pub fn samples(&self) -> Vec<SampleRef> {
        self.configurations
            .iter()
            .enumerate()
            .flat_map(|(ci, c)| {
                (0..c.sample_paths.len()).map(move |index| SampleRef {
                    configuration: ci,
                    index,
                })
            })
            .collect()
    }

    pub fn sample_id(&self, s: SampleRef) -> String {
        format!("{}/{}", self.configurations[s.configuration].label, s.index)
    }

    fn read_sinogram(&self, path: &Path, meta: SinogramMeta) -> Result<Sinogram> {
        let data = tensor::read_grid(&self.resolve(path))?;
        Sinogram::new(data, self.geometry, meta)
    }

    pub fn load_sample(&self, s: SampleRef) -> Result<Sinogram> {
        let c = self
            .configurations
            .get(s.configuration)
            .ok_or_else(|| Error::config(format!("no configuration {}", s.configuration)))?;
        let path = c
            .sample_paths
            .get(s.index)
            .ok_or_else(|| Error::config(format!("{} has no sample {}", c.label, s.index)))?;
        self.read_sinogram(
            path,
            SinogramMeta {
                label: c.label.clone(),
                sample_index: Some(s.index),
            },
        )
    }

    pub fn load_clean(&self, configuration: usize) -> Result<Option<Sinogram>> {
        let c = &self.configurations[configuration];
        c.clean_path
            .as_ref()
            .map(|p| {
                self.read_sinogram(
                    p,
                    SinogramMeta {
                        label: c.label.clone(),
                        sample_index: None,
                    },
                )
            })
            .transpose()
    }
}
