use std::path::Path;

use cagekit::features::{
    cotan_laplacian_mass, default_hks_times, eigenbasis, hks_features, position_features,
    volumetric_geodesic_to_bones, EigenSolver, FeatureSet,
};
use cagekit::skin::Skeleton;
use cagekit::TriangleMesh;

use super::{load_mesh, par_map, required, write_ref};
use crate::cli::FeaturesArgs;
use crate::error::Result;
use crate::io::write_atomic;
use crate::manifest::{LoadedManifest, Stage};

/// Cage positions, then one geodesic channel per bone when a skeleton is
/// given, then heat kernel signatures when `hks_eigenpairs > 0`.
pub fn compute(
    cage: &TriangleMesh,
    skeleton: Option<&Skeleton>,
    geodesic_dims: [usize; 3],
    hks_eigenpairs: usize,
) -> Result<FeatureSet> {
    let mut parts = vec![position_features(cage)?];
    if let Some(s) = skeleton {
        parts.push(volumetric_geodesic_to_bones(cage, s, geodesic_dims)?);
    }
    if hks_eigenpairs > 0 {
        let op = cotan_laplacian_mass(cage)?;
        let basis = eigenbasis(&op, hks_eigenpairs, EigenSolver::Auto)?;
        parts.push(hks_features(&basis, &default_hks_times())?);
    }
    Ok(FeatureSet::concat(&parts)?)
}

pub fn run(args: &FeaturesArgs) -> Result<()> {
    if let Some(m) = &args.manifest {
        return run_manifest(m);
    }
    let cage = load_mesh(required(&args.cage, "--cage")?)?;
    let skeleton = args.skeleton.as_ref().map(Skeleton::load).transpose()?;
    let eigen = if args.hks { args.eigen } else { 0 };
    let set = compute(&cage, skeleton.as_ref(), [args.geodesic_grid; 3], eigen)?;
    write_atomic(required(&args.out, "--out")?, &set.to_bytes())?;
    log::info!("{} features per cage vertex", set.width());
    Ok(())
}

fn run_manifest(path: &Path) -> Result<()> {
    let mut loaded = LoadedManifest::load(path)?;
    loaded.verify(Stage::Cages)?;
    let config = loaded.manifest.config.clone();
    let skeletons = par_map(&loaded.manifest.records, |r| {
        Ok(r.skeleton
            .as_ref()
            .map(|s| Skeleton::load(loaded.resolve(s)))
            .transpose()?)
    })?;
    let jobs: Vec<(usize, usize)> = loaded
        .manifest
        .records
        .iter()
        .enumerate()
        .flat_map(|(r, rec)| (0..rec.cages.len()).map(move |c| (r, c)))
        .collect();
    let sets = par_map(&jobs, |&(r, c)| {
        let cage = load_mesh(&loaded.resolve(&loaded.manifest.records[r].cages[c].cage))?;
        let set = compute(&cage, skeletons[r].as_ref(), config.geodesic_dims, config.hks_eigenpairs)?;
        Ok(set.to_bytes())
    })?;
    for (&(r, c), bytes) in jobs.iter().zip(&sets) {
        let entry = &mut loaded.manifest.records[r].cages[c];
        let target = loaded.base.join(&entry.features.path);
        write_ref(&target, bytes, &mut entry.features)?;
    }
    loaded.save()
}
