use std::path::Path;

use cagekit::cage::Cage;
use cagekit::coords::{
    compute_harmonic_matrix, compute_mvc_matrix, CoordinateMatrix, CoordinateMethod, HarmonicParams,
};
use cagekit::TriangleMesh;

use super::{load_mesh, par_map, required, write_ref};
use crate::cli::CoordsArgs;
use crate::error::Result;
use crate::io::write_atomic;
use crate::manifest::{LoadedManifest, Stage};

pub fn compute(
    mesh: &TriangleMesh,
    cage: TriangleMesh,
    method: CoordinateMethod,
    grid: usize,
) -> Result<CoordinateMatrix> {
    let cage = Cage::from_mesh(cage)?;
    Ok(match method {
        CoordinateMethod::Mvc => compute_mvc_matrix(mesh, &cage)?,
        CoordinateMethod::Harmonic => compute_harmonic_matrix(
            mesh,
            &cage,
            &HarmonicParams {
                grid_dims: [grid; 3],
                ..HarmonicParams::default()
            },
        )?,
    })
}

pub fn run(args: &CoordsArgs) -> Result<()> {
    if let Some(m) = &args.manifest {
        return run_manifest(m, args.grid);
    }
    let mesh = load_mesh(required(&args.mesh, "--mesh")?)?;
    let cage = load_mesh(required(&args.cage, "--cage")?)?;
    let coords = compute(&mesh, cage, args.method.into(), args.grid)?;
    write_atomic(required(&args.out, "--out")?, &coords.to_bytes())?;
    log::info!(
        "{} x {} coordinates, row-sum error {:.3e}",
        coords.mesh_vertex_count(),
        coords.cage_vertex_count(),
        coords.max_row_sum_error()
    );
    Ok(())
}

fn run_manifest(path: &Path, grid: usize) -> Result<()> {
    let mut loaded = LoadedManifest::load(path)?;
    loaded.verify(Stage::Cages)?;
    let method = loaded.manifest.config.coordinate_method;
    let jobs: Vec<(usize, usize)> = loaded
        .manifest
        .records
        .iter()
        .enumerate()
        .flat_map(|(r, rec)| (0..rec.cages.len()).map(move |c| (r, c)))
        .collect();
    let meshes = par_map(&loaded.manifest.records, |r| load_mesh(&loaded.resolve(&r.mesh)))?;
    let matrices = par_map(&jobs, |&(r, c)| {
        let cage = load_mesh(&loaded.resolve(&loaded.manifest.records[r].cages[c].cage))?;
        Ok(compute(&meshes[r], cage, method, grid)?.to_bytes())
    })?;
    for (&(r, c), bytes) in jobs.iter().zip(&matrices) {
        let entry = &mut loaded.manifest.records[r].cages[c];
        let target = loaded.base.join(&entry.coords.path);
        write_ref(&target, bytes, &mut entry.coords)?;
    }
    loaded.save()
}
