use std::path::Path;

use cagekit::fixtures::{observed_classes, WildClass};
use cagekit::mesh::topology_report;
use cagekit::spatial::winding_numbers;
use cagekit::{TopologyReport, TriangleMesh};
use serde::Serialize;

use super::{digest_hex, load_mesh};
use crate::cli::ReportArgs;
use crate::error::Result;
use crate::io::{json_bytes, write_atomic};
use crate::manifest::{LoadedManifest, Stage};

#[derive(Debug, Serialize)]
struct MeshSummary {
    digest: String,
    vertex_count: usize,
    face_count: usize,
    bbox_min: Option<[f64; 3]>,
    bbox_max: Option<[f64; 3]>,
    classes: Vec<WildClass>,
    topology: TopologyReport,
}

impl MeshSummary {
    fn new(mesh: &TriangleMesh) -> Self {
        let bounds = mesh.bounds();
        Self {
            digest: digest_hex(mesh.digest()),
            vertex_count: mesh.vertex_count(),
            face_count: mesh.face_count(),
            bbox_min: bounds.map(|(lo, _)| [lo.x, lo.y, lo.z]),
            bbox_max: bounds.map(|(_, hi)| [hi.x, hi.y, hi.z]),
            classes: observed_classes(mesh),
            topology: topology_report(mesh),
        }
    }
}

#[derive(Debug, Serialize)]
struct CageSummary {
    #[serde(flatten)]
    mesh: MeshSummary,
    valid: bool,
    /// Smallest winding number of the mesh vertices with respect to the cage.
    min_winding: f64,
    outside_vertices: usize,
}

#[derive(Debug, Serialize)]
struct MeshReport {
    mesh: MeshSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    cage: Option<CageSummary>,
}

#[derive(Debug, Serialize)]
struct ManifestReport {
    config_digest: String,
    records: usize,
    /// Stages whose artifacts are all present and match their digests.
    completed: Vec<Stage>,
    /// First artifact of the next stage still to be produced.
    next_missing: Option<String>,
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            print!("{}", String::from_utf8_lossy(bytes));
            Ok(())
        }
    }
}

pub fn run(args: &ReportArgs) -> Result<()> {
    if let Some(m) = &args.manifest {
        let loaded = LoadedManifest::load(m)?;
        let mut completed = Vec::new();
        let mut next_missing = None;
        for stage in [Stage::Inputs, Stage::Cages, Stage::Coords, Stage::Features] {
            match loaded.produced(stage)? {
                None => completed.push(stage),
                Some(missing) => {
                    next_missing = Some(missing);
                    break;
                }
            }
        }
        let report = ManifestReport {
            config_digest: loaded.manifest.config_digest.clone(),
            records: loaded.manifest.records.len(),
            completed,
            next_missing,
        };
        return emit(args.out.as_deref(), &json_bytes(&report));
    }
    let mesh = load_mesh(super::required(&args.mesh, "--mesh")?)?;
    let cage = match &args.cage {
        Some(path) => {
            let cage = load_mesh(path)?;
            let winding = winding_numbers(&mesh.positions, &cage);
            let summary = MeshSummary::new(&cage);
            Some(CageSummary {
                valid: summary.topology.is_valid_cage(),
                mesh: summary,
                min_winding: winding.iter().copied().fold(f64::INFINITY, f64::min),
                outside_vertices: winding.iter().filter(|&&w| w < 0.5).count(),
            })
        }
        None => None,
    };
    let report = MeshReport {
        mesh: MeshSummary::new(&mesh),
        cage,
    };
    emit(args.out.as_deref(), &json_bytes(&report))
}
