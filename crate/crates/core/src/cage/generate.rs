use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::components::{pairwise_max_gap, remove_internal_components, split_components};
use super::marching_cubes::marching_cubes;
use super::qem::simplify_qem;
use crate::error::{Error, Result};
use crate::mesh::{topology_report, TopologyReport, TriangleMesh};
use crate::spatial::{canonical_triangle, sample_udf_band, winding_numbers, ScalarGrid, TriangleIndex};

const MAX_GROWTH_STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CageParams {
    /// Level of the unsigned distance field that is extracted.
    pub offset: f64,
    pub target_faces: usize,
    pub max_faces: usize,
    pub grid_dims: [usize; 3],
    /// Require every input vertex to have winding number at least 0.5 with
    /// respect to the cage.
    pub require_enclosure: bool,
}

impl Default for CageParams {
    fn default() -> Self {
        Self {
            offset: 0.01,
            target_faces: 2000,
            max_faces: 4000,
            grid_dims: [96, 96, 96],
            require_enclosure: true,
        }
    }
}

impl CageParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.offset > 0.0 && self.offset.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "offset {} must be positive",
                self.offset
            )));
        }
        if self.target_faces < 4 {
            return Err(Error::InvalidArgument(format!(
                "target_faces {} must be at least 4",
                self.target_faces
            )));
        }
        if self.max_faces < self.target_faces {
            return Err(Error::InvalidArgument(format!(
                "max_faces {} is below target_faces {}",
                self.max_faces, self.target_faces
            )));
        }
        if self.grid_dims.iter().any(|&d| d < 8) {
            return Err(Error::InvalidArgument(format!(
                "grid dims {:?} must be at least 8 per axis",
                self.grid_dims
            )));
        }
        Ok(())
    }
}

/// One pass of the offset-growth loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthStep {
    pub offset: f64,
    /// Components of the extracted level set.
    pub level_set_components: usize,
    /// Components left after interior removal.
    pub outer_components: usize,
    /// Largest gap between input parts when more than one outer component
    /// remained.
    pub gap: Option<f64>,
    pub grid_spacing: f64,
}

/// How a generated cage was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CageProvenance {
    pub params: CageParams,
    pub effective_offset: f64,
    pub growth: Vec<GrowthStep>,
    /// Face budget the final simplification ran with.
    pub face_budget: usize,
    /// Faces of the level set before simplification.
    pub level_set_faces: usize,
    pub reached_target: bool,
    pub min_enclosure_winding: f64,
    pub warnings: Vec<String>,
}

/// Closed, edge- and vertex-manifold, single-component triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Cage {
    pub mesh: TriangleMesh,
    pub provenance: Option<CageProvenance>,
}

impl Cage {
    /// Wraps an existing mesh after checking the cage invariants.
    pub fn from_mesh(mesh: TriangleMesh) -> Result<Self> {
        check_cage(&mesh)?;
        Ok(Self {
            mesh,
            provenance: None,
        })
    }

    pub fn effective_offset(&self) -> Option<f64> {
        self.provenance.as_ref().map(|p| p.effective_offset)
    }

    pub fn topology(&self) -> TopologyReport {
        topology_report(&self.mesh)
    }
}

fn check_cage(mesh: &TriangleMesh) -> Result<()> {
    let r = topology_report(mesh);
    if !r.is_valid_cage() {
        return Err(Error::InvalidCage(format!(
            "closed={} edge_manifold={} vertex_manifold={} components={}",
            r.is_closed, r.is_edge_manifold, r.is_vertex_manifold, r.component_count
        )));
    }
    Ok(())
}

/// Distance grid framed for `frame_offset`, exact wherever the distance is
/// at most `2·level + 2·spacing`, which covers every level up to
/// `level + spacing`.
fn grid_for(mesh: &TriangleMesh, dims: [usize; 3], frame_offset: f64, level: f64) -> Result<ScalarGrid> {
    // the widest margin the frame can give for this padding, so that
    // spacing is known before sampling
    let n = dims.iter().copied().min().unwrap_or(2) as f64;
    let (lo, hi) = mesh.bounds().ok_or(Error::EmptyMesh)?;
    let ext = (hi - lo).max();
    let spacing = (ext + 4.0 * frame_offset) / (n - 5.0);
    sample_udf_band(mesh, dims, 2.0 * frame_offset + 2.0 * spacing, 2.0 * level + 2.0 * spacing)
}

/// Input faces grouped by the outer level-set component nearest to their
/// centroid; empty groups are dropped.
fn group_input_by_component(input: &TriangleMesh, outer: &[TriangleMesh]) -> Vec<TriangleMesh> {
    let indices: Vec<TriangleIndex> = outer.iter().map(TriangleIndex::new).collect();
    let owner: Vec<usize> = (0..input.face_count())
        .into_par_iter()
        .map(|f| {
            let t = canonical_triangle(&input.triangle(f));
            let c = (t[0] + t[1] + t[2]) / 3.0;
            let mut best = (f64::INFINITY, 0);
            for (k, idx) in indices.iter().enumerate() {
                let d = idx.distance(&c);
                if d < best.0 {
                    best = (d, k);
                }
            }
            best.1
        })
        .collect();
    let mut groups = vec![Vec::new(); outer.len()];
    for (f, &k) in owner.iter().enumerate() {
        groups[k].push(f);
    }
    groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| input.submesh(&g).0)
        .collect()
}

struct LevelSet {
    mesh: TriangleMesh,
    offset: f64,
    growth: Vec<GrowthStep>,
    spacing: f64,
}

fn grow_single_component(mesh: &TriangleMesh, params: &CageParams) -> Result<LevelSet> {
    let mut offset = params.offset;
    let mut frame_offset = offset;
    let mut sampled_for = offset;
    let mut grid = grid_for(mesh, params.grid_dims, frame_offset, sampled_for)?;
    let mut growth = Vec::new();
    for _ in 0..MAX_GROWTH_STEPS {
        if offset > sampled_for + grid.spacing {
            sampled_for = offset;
            grid = grid_for(mesh, params.grid_dims, frame_offset, sampled_for)?;
        }
        let extracted = match marching_cubes(&grid, offset) {
            Ok(m) => m,
            Err(Error::LevelSetClipped { .. }) => {
                frame_offset = offset;
                sampled_for = offset;
                grid = grid_for(mesh, params.grid_dims, frame_offset, sampled_for)?;
                marching_cubes(&grid, offset)?
            }
            Err(e) => return Err(e),
        };
        let level_set_components = split_components(&extracted).len();
        let outer = remove_internal_components(&extracted);
        let parts = split_components(&outer);
        let mut step = GrowthStep {
            offset,
            level_set_components,
            outer_components: parts.len(),
            gap: None,
            grid_spacing: grid.spacing,
        };
        if parts.len() == 1 {
            growth.push(step);
            return Ok(LevelSet {
                mesh: outer,
                offset,
                growth,
                spacing: grid.spacing,
            });
        }
        let groups = group_input_by_component(mesh, &parts);
        let gap = pairwise_max_gap(&groups)
            .or_else(|| pairwise_max_gap(&parts))
            .unwrap_or(0.0);
        step.gap = Some(gap);
        growth.push(step);
        offset += (0.5 * gap).max(0.5 * grid.spacing);
    }
    Err(Error::InvalidCage(format!(
        "offset growth did not reach a single component within {MAX_GROWTH_STEPS} steps"
    )))
}

fn min_winding(input: &TriangleMesh, cage: &TriangleMesh) -> f64 {
    winding_numbers(&input.positions, cage)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Builds a cage around `mesh` (expected in the unit box): the offset level
/// set of its unsigned distance field, with interior shells removed, the
/// offset grown until a single component remains, then simplified.
pub fn generate_cage(mesh: &TriangleMesh, params: &CageParams) -> Result<Cage> {
    params.validate()?;
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let level_set = grow_single_component(mesh, params)?;
    let mut warnings = Vec::new();
    if params.offset < level_set.spacing {
        warnings.push(format!(
            "offset {} is below the grid spacing {}",
            params.offset, level_set.spacing
        ));
    }
    let mut budget = params.target_faces;
    loop {
        let simplified = simplify_qem(&level_set.mesh, budget);
        check_cage(&simplified.mesh)?;
        let winding = min_winding(mesh, &simplified.mesh);
        let enclosed = winding >= 0.5;
        if enclosed || !params.require_enclosure || budget >= params.max_faces {
            if params.require_enclosure && !enclosed {
                return Err(Error::EnclosureUnreachable {
                    faces: simplified.mesh.face_count(),
                    min_winding: winding,
                });
            }
            if !simplified.reached_target {
                warnings.push(format!(
                    "simplification stopped at {} faces above the budget {budget}",
                    simplified.mesh.face_count()
                ));
            }
            return Ok(Cage {
                mesh: simplified.mesh,
                provenance: Some(CageProvenance {
                    params: *params,
                    effective_offset: level_set.offset,
                    growth: level_set.growth,
                    face_budget: budget,
                    level_set_faces: level_set.mesh.face_count(),
                    reached_target: simplified.reached_target,
                    min_enclosure_winding: winding,
                    warnings,
                }),
            });
        }
        budget = (2 * budget).min(params.max_faces);
    }
}

/// One cage per offset, generated independently.
pub fn generate_offset_family(
    mesh: &TriangleMesh,
    offsets: &[f64],
    params: &CageParams,
) -> Result<Vec<Cage>> {
    if offsets.is_empty() {
        return Err(Error::InvalidArgument("no offsets given".into()));
    }
    if offsets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "offsets {offsets:?} must be strictly increasing"
        )));
    }
    offsets
        .par_iter()
        .map(|&offset| generate_cage(mesh, &CageParams { offset, ..*params }))
        .collect()
}
