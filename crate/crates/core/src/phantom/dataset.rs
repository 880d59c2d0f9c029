use std::fs;
use std::path::{Path, PathBuf};

use super::{apply_noise, forward_project, NoiseModel, Phantom, ScanGeometry};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::manifest::{
    all_strata, stratum_label, ConfigurationEntry, DatasetManifest, Plane, Position, Provenance,
    MANIFEST_SCHEMA_VERSION,
};
use crate::tensor;

/// One configuration to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationSpec {
    pub label: String,
    pub plane: Plane,
    pub position: Position,
    pub phantom: Phantom,
}

impl ConfigurationSpec {
    /// The first `count` (≤ 6) default configurations, each with its own
    /// ring-and-spokes variant.
    pub fn defaults(count: usize) -> Result<Vec<Self>> {
        let strata = all_strata();
        if count == 0 || count > strata.len() {
            return Err(Error::config(format!(
                "configuration count must be in 1..={}, got {count}",
                strata.len()
            )));
        }
        Ok(strata
            .into_iter()
            .take(count)
            .enumerate()
            .map(|(i, (plane, position))| Self {
                label: stratum_label(plane, position),
                plane,
                position,
                phantom: Phantom::ring_and_spokes(i),
            })
            .collect())
    }
}

/// File counts a generation run will produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetPlan {
    pub configurations: usize,
    pub samples_per_configuration: usize,
}

impl DatasetPlan {
    pub fn noisy_files(&self) -> usize {
        self.configurations * self.samples_per_configuration
    }

    pub fn clean_files(&self) -> usize {
        self.configurations
    }

    /// Tensor files plus the manifest.
    pub fn total_files(&self) -> usize {
        self.noisy_files() + self.clean_files() + 1
    }
}

fn sample_file(i: usize) -> String {
    format!("sample_{i:05}.stf")
}

/// Simulates every configuration and writes clean + noisy STF1 files and
/// `manifest.json` under `out_dir`.
///
/// Sample `k` of configuration `c` uses the noise seed derived from
/// `(noise.seed, c, k)`, so the output does not depend on scheduling.
pub fn generate_dataset(
    configurations: &[ConfigurationSpec],
    geometry: &ScanGeometry,
    noise: &NoiseModel,
    n_samples: usize,
    out_dir: &Path,
    exec: Exec,
) -> Result<DatasetManifest> {
    if configurations.is_empty() {
        return Err(Error::config("at least one configuration is required"));
    }
    geometry.validate()?;
    noise.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut entries = Vec::with_capacity(configurations.len());
    for (ci, spec) in configurations.iter().enumerate() {
        let rel_dir = PathBuf::from(&spec.label);
        let dir = out_dir.join(&rel_dir);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

        let clean = forward_project(&spec.phantom, geometry)?;
        let clean_rel = rel_dir.join("clean.stf");
        tensor::write_grid(&out_dir.join(&clean_rel), &clean.data)?;

        let written: Vec<Result<PathBuf>> = exec.map(n_samples, |k| {
            let noisy = apply_noise(&clean, &noise.for_sample(ci, k))?;
            let rel = rel_dir.join(sample_file(k));
            tensor::write_grid(&out_dir.join(&rel), &noisy.data)?;
            Ok(rel)
        });
        let sample_paths = written.into_iter().collect::<Result<Vec<_>>>()?;
        log::info!("{}: wrote {} samples", spec.label, sample_paths.len());

        entries.push(ConfigurationEntry {
            label: spec.label.clone(),
            plane: spec.plane,
            position: spec.position,
            clean_path: Some(clean_rel),
            sample_paths,
        });
    }

    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        configurations: entries,
        geometry: *geometry,
        provenance: Provenance::Synthetic {
            noise: *noise,
            n_samples,
            phantoms: configurations.iter().map(|c| c.phantom.clone()).collect(),
        },
        root: out_dir.to_path_buf(),
    };
    manifest.validate(true)?;
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::SampleRef;

    fn count_stf(dir: &Path) -> usize {
        let mut n = 0;
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                n += count_stf(&p);
            } else if p.extension().is_some_and(|x| x == "stf") {
                n += 1;
            }
        }
        n
    }

    #[test]
    fn paper_scale_counts() {
        let plan = DatasetPlan {
            configurations: 6,
            samples_per_configuration: 2000,
        };
        assert_eq!(plan.noisy_files(), 12_000);
        assert_eq!(plan.clean_files(), 6);
    }

    #[test]
    fn writes_expected_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let g = ScanGeometry::covering(16, 12);
        let specs = ConfigurationSpec::defaults(5).unwrap();
        let m = generate_dataset(&specs, &g, &NoiseModel::new(1000.0, 1), 10, dir.path(), Exec::default())
            .unwrap();
        assert_eq!(count_stf(dir.path()), 55);
        assert_eq!(m.configurations.len(), 5);
        assert_eq!(m.samples().len(), 50);

        let loaded = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(loaded.configurations, m.configurations);
        let s = loaded.load_sample(SampleRef { configuration: 2, index: 3 }).unwrap();
        assert_eq!(s.dim(), (16, 12));
        assert_eq!(s.meta.label, "Plane0-Bottom");
        assert!(loaded.load_clean(0).unwrap().is_some());
    }

    #[test]
    fn zero_samples_keeps_clean_references() {
        let dir = tempfile::tempdir().unwrap();
        let g = ScanGeometry::covering(8, 8);
        let specs = ConfigurationSpec::defaults(2).unwrap();
        let m = generate_dataset(&specs, &g, &NoiseModel::new(100.0, 1), 0, dir.path(), Exec::Sequential)
            .unwrap();
        assert_eq!(count_stf(dir.path()), 2);
        assert!(m.samples().is_empty());
        assert!(m.configurations.iter().all(|c| c.clean_path.is_some()));
    }

    #[test]
    fn schedule_independent_output() {
        let g = ScanGeometry::covering(12, 10);
        let specs = ConfigurationSpec::defaults(1).unwrap();
        let noise = NoiseModel::new(300.0, 77);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_dataset(&specs, &g, &noise, 4, a.path(), Exec::Sequential).unwrap();
        generate_dataset(&specs, &g, &noise, 4, b.path(), Exec::Parallel).unwrap();
        for k in 0..4 {
            let rel = format!("Plane0-Top/{}", sample_file(k));
            assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap());
        }
    }

    #[test]
    fn rejects_empty_and_unwritable() {
        let g = ScanGeometry::covering(8, 8);
        let noise = NoiseModel::new(100.0, 1);
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_dataset(&[], &g, &noise, 1, dir.path(), Exec::Sequential).is_err());
        let file = dir.path().join("occupied");
        fs::write(&file, b"x").unwrap();
        let specs = ConfigurationSpec::defaults(1).unwrap();
        assert!(matches!(
            generate_dataset(&specs, &g, &noise, 1, &file.join("sub"), Exec::Sequential),
            Err(Error::Io { .. })
        ));
        assert!(ConfigurationSpec::defaults(7).is_err());
    }
}
