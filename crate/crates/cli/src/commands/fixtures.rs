use std::path::Path;

use cagekit::coords::CoordinateMethod;
use cagekit::fixtures::{articulated_corpus, observed_classes, wild_corpus, WildClass};
use cagekit::learn::TrainConfig;
use cagekit::mesh::obj_string;
use serde::Serialize;

use super::overfit::LabelsFile;
use crate::cli::FixturesArgs;
use crate::error::Result;
use crate::io::{file_sha256, json_bytes, write_atomic};
use crate::manifest::{CageRecord, FileRef, MeshRecord, PipelineConfig, PipelineManifest};

/// Articulated tubes written by `fixtures`; the first [`TRAIN_TUBES`] form
/// the training split.
pub const TUBE_COUNT: usize = 40;
pub const TRAIN_TUBES: usize = 30;
pub const TRAIN_OFFSETS: [f64; 2] = [0.02, 0.04];

#[derive(Debug, Serialize)]
struct CorpusIndexEntry {
    name: String,
    class: WildClass,
    observed: Vec<WildClass>,
    vertices: usize,
    faces: usize,
    label_classes: usize,
}

fn sealed(dir: &Path, rel: String, bytes: &[u8]) -> Result<FileRef> {
    let path = dir.join(&rel);
    write_atomic(&path, bytes)?;
    Ok(FileRef {
        sha256: Some(file_sha256(&path)?),
        path: rel,
    })
}

fn cage_records(stem: &str, offsets: &[f64]) -> Vec<CageRecord> {
    offsets
        .iter()
        .enumerate()
        .map(|(i, &offset)| CageRecord {
            offset,
            cage: FileRef::new(format!("work/{stem}.o{i}.cage.obj")),
            coords: FileRef::new(format!("work/{stem}.o{i}.gbc")),
            features: FileRef::new(format!("work/{stem}.o{i}.fts")),
        })
        .collect()
}

fn wild(dir: &Path, seed: u64) -> Result<()> {
    let corpus = wild_corpus(seed)?;
    let config = PipelineConfig {
        offsets: vec![0.01],
        grid_dims: [96; 3],
        target_faces: 2000,
        max_faces: 4000,
        require_enclosure: true,
        coordinate_method: CoordinateMethod::Mvc,
        geodesic_dims: [40; 3],
        hks_eigenpairs: 0,
    };
    let mut index = Vec::new();
    let mut records = Vec::new();
    for e in &corpus {
        let mesh = sealed(dir, format!("{}.obj", e.name), obj_string(&e.mesh).as_bytes())?;
        let labels = LabelsFile {
            classes: e.classes,
            labels: e.labels.clone(),
        };
        let labels = sealed(dir, format!("{}.labels.json", e.name), &json_bytes(&labels))?;
        records.push(MeshRecord {
            name: e.name.clone(),
            mesh,
            cages: cage_records(&e.name, &config.offsets),
            skeleton: None,
            weights: None,
            clip: None,
            labels: Some(labels),
        });
        index.push(CorpusIndexEntry {
            name: e.name.clone(),
            class: e.class,
            observed: observed_classes(&e.mesh),
            vertices: e.mesh.vertex_count(),
            faces: e.mesh.face_count(),
            label_classes: e.classes,
        });
    }
    write_atomic(&dir.join("corpus.json"), &json_bytes(&index))?;
    write_atomic(
        &dir.join("manifest.json"),
        &json_bytes(&PipelineManifest::new(config, records)),
    )
}

fn tubes(dir: &Path, seed: u64) -> Result<()> {
    let corpus = articulated_corpus(TUBE_COUNT, seed)?;
    let config_for = |offsets: &[f64]| PipelineConfig {
        offsets: offsets.to_vec(),
        grid_dims: [64; 3],
        target_faces: 400,
        max_faces: 1600,
        require_enclosure: true,
        coordinate_method: CoordinateMethod::Mvc,
        geodesic_dims: [40; 3],
        hks_eigenpairs: 0,
    };
    let train_config = config_for(&TRAIN_OFFSETS);
    let test_config = config_for(&TRAIN_OFFSETS[..1]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, t) in corpus.iter().enumerate() {
        let stem = format!("tube_{i:02}");
        let mesh = sealed(dir, format!("{stem}.obj"), obj_string(&t.mesh).as_bytes())?;
        let skeleton = sealed(dir, format!("{stem}.skeleton.json"), &json_bytes(&t.skeleton))?;
        let mut weights = t.weights.to_json_string();
        weights.push('\n');
        let weights = sealed(dir, format!("{stem}.weights.json"), weights.as_bytes())?;
        let clip = sealed(dir, format!("{stem}.clip.json"), &json_bytes(&t.clip))?;
        write_atomic(&dir.join(format!("{stem}.params.json")), &json_bytes(&t.params))?;
        let (split, offsets) = if i < TRAIN_TUBES {
            (&mut train, &train_config.offsets)
        } else {
            (&mut test, &test_config.offsets)
        };
        split.push(MeshRecord {
            cages: cage_records(&stem, offsets),
            name: stem,
            mesh,
            skeleton: Some(skeleton),
            weights: Some(weights),
            clip: Some(clip),
            labels: None,
        });
    }
    let train_settings = TrainConfig {
        epochs: 200,
        learning_rate: 1e-2,
        seed,
        augmentation_offsets: TRAIN_OFFSETS.to_vec(),
        ..TrainConfig::default()
    };
    write_atomic(&dir.join("train_config.json"), &json_bytes(&train_settings))?;
    write_atomic(
        &dir.join("train.json"),
        &json_bytes(&PipelineManifest::new(train_config, train)),
    )?;
    write_atomic(
        &dir.join("test.json"),
        &json_bytes(&PipelineManifest::new(test_config, test)),
    )
}

pub fn run(args: &FixturesArgs, seed: u64) -> Result<()> {
    wild(&args.out.join("wild"), seed)?;
    tubes(&args.out.join("tubes"), seed)?;
    log::info!("fixtures written to {}", args.out.display());
    Ok(())
}
