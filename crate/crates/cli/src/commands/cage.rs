use std::path::Path;

use cagekit::cage::{generate_cage, Cage, CageParams, GrowthStep};
use cagekit::mesh::obj_string;
use cagekit::{TopologyReport, TriangleMesh};
use serde::{Deserialize, Serialize};

use super::{digest_hex, load_mesh, par_map, required, write_mesh, write_ref};
use crate::cli::CageArgs;
use crate::error::Result;
use crate::io::write_json;
use crate::manifest::{LoadedManifest, Stage};

/// Everything known about one generated cage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CageReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<String>,
    pub mesh_digest: String,
    pub cage_digest: String,
    pub requested_offset: f64,
    pub effective_offset: f64,
    pub vertex_count: usize,
    pub face_count: usize,
    pub component_count: usize,
    pub valid: bool,
    pub topology: TopologyReport,
    pub min_enclosure_winding: f64,
    pub face_budget: usize,
    pub level_set_faces: usize,
    pub reached_target: bool,
    pub growth: Vec<GrowthStep>,
    pub warnings: Vec<String>,
}

impl CageReport {
    pub fn new(record: Option<String>, mesh: &TriangleMesh, cage: &Cage) -> Self {
        let topology = cage.topology();
        let provenance = cage.provenance.clone().expect("generated cages carry provenance");
        Self {
            record,
            mesh_digest: digest_hex(mesh.digest()),
            cage_digest: digest_hex(cage.mesh.digest()),
            requested_offset: provenance.params.offset,
            effective_offset: provenance.effective_offset,
            vertex_count: cage.mesh.vertex_count(),
            face_count: cage.mesh.face_count(),
            component_count: topology.component_count,
            valid: topology.is_valid_cage(),
            topology,
            min_enclosure_winding: provenance.min_enclosure_winding,
            face_budget: provenance.face_budget,
            level_set_faces: provenance.level_set_faces,
            reached_target: provenance.reached_target,
            growth: provenance.growth,
            warnings: provenance.warnings,
        }
    }
}

fn warn_outside_unit_box(name: &Path, mesh: &TriangleMesh) {
    if let Some((lo, hi)) = mesh.bounds() {
        if lo.min() < -0.5 - 1e-9 || hi.max() > 0.5 + 1e-9 {
            log::warn!(
                "{} extends beyond the unit box centred at the origin; offsets are absolute lengths",
                name.display()
            );
        }
    }
}

pub fn run(args: &CageArgs) -> Result<()> {
    if let Some(m) = &args.manifest {
        return run_manifest(m, args.report.as_deref());
    }
    let input = required(&args.input, "--input")?;
    let out = required(&args.out, "--out")?;
    let params = CageParams {
        offset: args.offset,
        target_faces: args.target_faces,
        max_faces: args.max_faces,
        grid_dims: [args.grid; 3],
        require_enclosure: args.enclose,
    };
    let mesh = load_mesh(input)?;
    warn_outside_unit_box(input, &mesh);
    let cage = generate_cage(&mesh, &params)?;
    let report = CageReport::new(None, &mesh, &cage);
    write_mesh(out, &cage.mesh)?;
    if let Some(r) = &args.report {
        write_json(r, &report)?;
    }
    log::info!(
        "cage with {} faces at offset {}",
        report.face_count,
        report.effective_offset
    );
    Ok(())
}

fn run_manifest(path: &Path, report_path: Option<&Path>) -> Result<()> {
    let mut loaded = LoadedManifest::load(path)?;
    loaded.verify(Stage::Inputs)?;
    let config = loaded.manifest.config.clone();
    let jobs: Vec<(usize, usize)> = (0..loaded.manifest.records.len())
        .flat_map(|r| (0..config.offsets.len()).map(move |c| (r, c)))
        .collect();
    let meshes = par_map(&loaded.manifest.records, |r| load_mesh(&loaded.resolve(&r.mesh)))?;
    let cages = par_map(&jobs, |&(r, c)| {
        let params = config.cage_params(config.offsets[c]);
        let cage = generate_cage(&meshes[r], &params)?;
        let name = format!("{}@{}", loaded.manifest.records[r].name, config.offsets[c]);
        log::info!("{name}: {} faces", cage.mesh.face_count());
        Ok((CageReport::new(Some(name), &meshes[r], &cage), cage))
    })?;
    for (&(r, c), (_, cage)) in jobs.iter().zip(&cages) {
        let entry = &mut loaded.manifest.records[r].cages[c];
        let before = entry.cage.sha256.clone();
        let target = loaded.base.join(&entry.cage.path);
        write_ref(&target, obj_string(&cage.mesh).as_bytes(), &mut entry.cage)?;
        if entry.cage.sha256 != before {
            entry.coords.sha256 = None;
            entry.features.sha256 = None;
        }
    }
    loaded.save()?;
    if let Some(p) = report_path {
        let reports: Vec<&CageReport> = cages.iter().map(|(r, _)| r).collect();
        write_json(p, &reports)?;
    }
    Ok(())
}
