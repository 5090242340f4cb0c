//! Manifest-driven staging: a JSON list of meshes with the artifacts each
//! stage reads and writes, sealed with SHA-256 digests of the files.

use std::path::{Path, PathBuf};

use cagekit::cage::CageParams;
use cagekit::coords::CoordinateMethod;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{file_sha256, json_bytes, read_json, sha256_hex, write_atomic};

/// A file referenced by a manifest, relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    /// Digest of the file contents once the producing stage has run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

impl FileRef {
    pub fn new(path: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            sha256: None,
        }
    }
}

/// Settings shared by every stage of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Cage offsets per mesh, strictly increasing; one cage entry each.
    pub offsets: Vec<f64>,
    pub grid_dims: [usize; 3],
    pub target_faces: usize,
    pub max_faces: usize,
    pub require_enclosure: bool,
    pub coordinate_method: CoordinateMethod,
    pub geodesic_dims: [usize; 3],
    /// Eigenpairs behind the heat kernel signature channels; none when zero.
    #[serde(default)]
    pub hks_eigenpairs: usize,
}

impl PipelineConfig {
    pub fn cage_params(&self, offset: f64) -> CageParams {
        CageParams {
            offset,
            target_faces: self.target_faces,
            max_faces: self.max_faces,
            grid_dims: self.grid_dims,
            require_enclosure: self.require_enclosure,
        }
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Artifacts of one cage of one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CageRecord {
    pub offset: f64,
    pub cage: FileRef,
    pub coords: FileRef,
    pub features: FileRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRecord {
    pub name: String,
    pub mesh: FileRef,
    pub cages: Vec<CageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<FileRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<FileRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<FileRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<FileRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub config: PipelineConfig,
    pub config_digest: String,
    pub records: Vec<MeshRecord>,
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub path: PathBuf,
    pub base: PathBuf,
    pub manifest: PipelineManifest,
}

/// Which artifacts a stage requires to be present and sealed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Inputs,
    Cages,
    Coords,
    Features,
}

impl PipelineManifest {
    pub fn new(config: PipelineConfig, records: Vec<MeshRecord>) -> Self {
        Self {
            config_digest: config.digest(),
            config,
            records,
        }
    }
}

impl LoadedManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let manifest: PipelineManifest = read_json(path)?;
        if manifest.config_digest != manifest.config.digest() {
            return Err(CliError::Manifest(format!(
                "{}: config digest {} does not match its config",
                path.display(),
                manifest.config_digest
            )));
        }
        for r in &manifest.records {
            if r.cages.len() != manifest.config.offsets.len()
                || r.cages.iter().zip(&manifest.config.offsets).any(|(c, o)| c.offset != *o)
            {
                return Err(CliError::Manifest(format!(
                    "record {} does not list one cage per configured offset",
                    r.name
                )));
            }
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            path: path.to_path_buf(),
            base,
            manifest,
        })
    }

    pub fn resolve(&self, f: &FileRef) -> PathBuf {
        self.base.join(&f.path)
    }

    fn refs_up_to(record: &MeshRecord, stage: Stage) -> Vec<&FileRef> {
        let mut refs = vec![&record.mesh];
        refs.extend(record.skeleton.iter());
        refs.extend(record.weights.iter());
        refs.extend(record.clip.iter());
        refs.extend(record.labels.iter());
        for c in &record.cages {
            if stage >= Stage::Cages {
                refs.push(&c.cage);
            }
            if stage >= Stage::Coords {
                refs.push(&c.coords);
            }
            if stage >= Stage::Features {
                refs.push(&c.features);
            }
        }
        refs
    }

    /// Checks that every file required up to `stage` exists and matches its
    /// recorded digest.
    pub fn verify(&self, stage: Stage) -> Result<()> {
        match self.produced(stage)? {
            None => Ok(()),
            Some(missing) => Err(CliError::Manifest(format!("{missing} has not been produced yet"))),
        }
    }

    /// Checks every recorded digest up to `stage`. Returns the first file that
    /// no stage has produced yet, if any; a file whose contents differ from
    /// its digest is an error.
    pub fn produced(&self, stage: Stage) -> Result<Option<String>> {
        let mut missing = None;
        for r in &self.manifest.records {
            for f in Self::refs_up_to(r, stage) {
                let Some(expected) = &f.sha256 else {
                    missing.get_or_insert_with(|| format!("{} in record {}", f.path, r.name));
                    continue;
                };
                let actual = file_sha256(&self.resolve(f))?;
                if &actual != expected {
                    return Err(CliError::Manifest(format!(
                        "digest of {} is {actual}, manifest records {expected}",
                        f.path
                    )));
                }
            }
        }
        Ok(missing)
    }

    pub fn save(&self) -> Result<()> {
        write_atomic(&self.path, &json_bytes(&self.manifest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> PipelineConfig {
        PipelineConfig {
            offsets: vec![0.02],
            grid_dims: [32; 3],
            target_faces: 100,
            max_faces: 200,
            require_enclosure: true,
            coordinate_method: CoordinateMethod::Mvc,
            geodesic_dims: [24; 3],
            hks_eigenpairs: 0,
        }
    }

    fn record(mesh: FileRef) -> MeshRecord {
        MeshRecord {
            name: "m".into(),
            mesh,
            cages: vec![CageRecord {
                offset: 0.02,
                cage: FileRef::new("m.cage.obj"),
                coords: FileRef::new("m.gbc"),
                features: FileRef::new("m.fts"),
            }],
            skeleton: None,
            weights: None,
            clip: None,
            labels: None,
        }
    }

    #[test]
    fn digests_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.obj"), "v 0 0 0\n").unwrap();
        let mut mesh = FileRef::new("m.obj");
        mesh.sha256 = Some(file_sha256(&dir.path().join("m.obj")).unwrap());
        let path = dir.path().join("p.json");
        let loaded = LoadedManifest {
            path: path.clone(),
            base: dir.path().into(),
            manifest: PipelineManifest::new(config(), vec![record(mesh)]),
        };
        loaded.save().unwrap();
        let back = LoadedManifest::load(&path).unwrap();
        back.verify(Stage::Inputs).unwrap();
        assert!(matches!(back.verify(Stage::Cages), Err(CliError::Manifest(_))));
        std::fs::write(dir.path().join("m.obj"), "v 1 0 0\n").unwrap();
        let err = back.verify(Stage::Inputs).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn tampered_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = PipelineManifest::new(config(), vec![record(FileRef::new("m.obj"))]);
        m.config.target_faces = 99;
        let path = dir.path().join("p.json");
        std::fs::write(&path, json_bytes(&m)).unwrap();
        assert!(matches!(LoadedManifest::load(&path), Err(CliError::Manifest(_))));
        let mut m = PipelineManifest::new(config(), vec![record(FileRef::new("m.obj"))]);
        m.records[0].cages[0].offset = 0.03;
        std::fs::write(&path, json_bytes(&m)).unwrap();
        assert!(matches!(LoadedManifest::load(&path), Err(CliError::Manifest(_))));
    }
}
