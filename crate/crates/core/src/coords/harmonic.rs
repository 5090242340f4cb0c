use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::matrix::{CoordinateMatrix, CoordinateMethod};
use crate::cage::Cage;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::spatial::{grid_frame, winding_number, winding_numbers, ScalarGrid, TriangleIndex};
use crate::Vec3;

const CG_TOLERANCE: f64 = 1e-8;

/// Grid discretization used by [`compute_harmonic_matrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicParams {
    pub grid_dims: [usize; 3],
    /// Relative residual at which each conjugate-gradient solve stops.
    pub tolerance: f64,
}

impl Default for HarmonicParams {
    fn default() -> Self {
        Self {
            grid_dims: [48, 48, 48],
            tolerance: CG_TOLERANCE,
        }
    }
}

/// Interior voxelization of a cage with the Dirichlet data of every exterior
/// node that touches the interior or a query stencil.
struct Voxelization {
    grid: ScalarGrid,
    /// Interior id per grid node, or `usize::MAX` for exterior nodes.
    interior_id: Vec<usize>,
    interior_nodes: Vec<usize>,
    /// Interior neighbour ids per interior node (`usize::MAX` if exterior).
    neighbors: Vec<[usize; 6]>,
    /// Hat-function values `(cage vertex, value)` per exterior node.
    hats: HashMap<usize, [(usize, f64); 3]>,
}

fn barycentric(p: &Vec3, [a, b, c]: [Vec3; 3]) -> [f64; 3] {
    let (v0, v1, v2) = (b - a, c - a, p - a);
    let (d00, d01, d11) = (v0.dot(&v0), v0.dot(&v1), v1.dot(&v1));
    let (d20, d21) = (v2.dot(&v0), v2.dot(&v1));
    let den = d00 * d11 - d01 * d01;
    if den.abs() <= f64::EPSILON * d00 * d11 {
        return [1.0 / 3.0; 3];
    }
    let v = ((d11 * d20 - d01 * d21) / den).max(0.0);
    let w = ((d00 * d21 - d01 * d20) / den).max(0.0);
    let u = (1.0 - v - w).max(0.0);
    let s = u + v + w;
    [u / s, v / s, w / s]
}

fn hat_values(p: &Vec3, cage: &TriangleMesh, index: &TriangleIndex) -> [(usize, f64); 3] {
    let hit = index.closest(p).expect("cage has faces");
    let tri = cage.faces[hit.face];
    let b = barycentric(&hit.point, cage.triangle(hit.face));
    [(tri[0], b[0]), (tri[1], b[1]), (tri[2], b[2])]
}

fn voxelize(cage: &TriangleMesh, mesh: &TriangleMesh, dims: [usize; 3]) -> Result<Voxelization> {
    let (lo, hi) = cage.bounds().ok_or(Error::EmptyMesh)?;
    let n = dims.iter().copied().min().unwrap_or(0);
    if n < 8 {
        return Err(Error::InvalidArgument(format!(
            "harmonic grid dims {dims:?} must be at least 8 per axis"
        )));
    }
    let spacing = (hi - lo).max() / (n as f64 - 5.0);
    let (origin, spacing) = grid_frame(cage, dims, 2.0 * spacing)?;
    let mut grid = ScalarGrid::new(origin, spacing, dims, vec![0.0; dims[0] * dims[1] * dims[2]])?;
    let candidates: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let p = grid.position(grid.unindex(i));
            (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
        })
        .collect();
    let points: Vec<Vec3> = candidates
        .iter()
        .map(|&i| grid.position(grid.unindex(i)))
        .collect();
    let winding = winding_numbers(&points, cage);
    let index = TriangleIndex::new(cage);
    // nodes on the cage surface carry boundary data, whatever their
    // winding number rounds to
    let on_surface: Vec<bool> = points
        .par_iter()
        .map(|p| index.distance(p) <= 1e-9 * spacing)
        .collect();
    let mut interior_id = vec![usize::MAX; grid.len()];
    let mut interior_nodes = Vec::new();
    for ((&node, &w), &surface) in candidates.iter().zip(&winding).zip(&on_surface) {
        if w >= 0.5 && !surface {
            interior_id[node] = interior_nodes.len();
            interior_nodes.push(node);
            grid.values[node] = 1.0;
        }
    }
    if interior_nodes.is_empty() {
        return Err(Error::EmptyInterior);
    }

    let offsets: [[isize; 3]; 6] = [
        [-1, 0, 0],
        [1, 0, 0],
        [0, -1, 0],
        [0, 1, 0],
        [0, 0, -1],
        [0, 0, 1],
    ];
    let mut neighbors = Vec::with_capacity(interior_nodes.len());
    let mut exterior = Vec::new();
    for &node in &interior_nodes {
        let ijk = grid.unindex(node);
        let mut nb = [usize::MAX; 6];
        for (slot, off) in nb.iter_mut().zip(&offsets) {
            let q = [
                ijk[0] as isize + off[0],
                ijk[1] as isize + off[1],
                ijk[2] as isize + off[2],
            ];
            // interior nodes lie inside the cage bounds, which the padding
            // keeps two cells away from the grid boundary
            let q = grid.index(q[0] as usize, q[1] as usize, q[2] as usize);
            if interior_id[q] != usize::MAX {
                *slot = interior_id[q];
            } else {
                exterior.push(q);
            }
        }
        neighbors.push(nb);
    }
    for p in &mesh.positions {
        if let Some(stencil) = grid.trilinear_stencil(p) {
            for (node, _) in stencil {
                if interior_id[node] == usize::MAX {
                    exterior.push(node);
                }
            }
        }
    }
    exterior.sort_unstable();
    exterior.dedup();
    let hats: HashMap<usize, [(usize, f64); 3]> = exterior
        .par_iter()
        .map(|&node| (node, hat_values(&grid.position(grid.unindex(node)), cage, &index)))
        .collect();
    Ok(Voxelization {
        grid,
        interior_id,
        interior_nodes,
        neighbors,
        hats,
    })
}

/// Conjugate gradients on the 7-point Laplacian restricted to the interior
/// nodes (`6 u_i - sum of interior neighbours = rhs_i`).
fn solve_interior(vox: &Voxelization, rhs: &[f64], tolerance: f64) -> Vec<f64> {
    let n = rhs.len();
    let apply = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut s = 6.0 * x[i];
            for &j in &vox.neighbors[i] {
                if j != usize::MAX {
                    s -= x[j];
                }
            }
            out[i] = s;
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        return x;
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for _ in 0..10 * n.max(10) {
        if rr.sqrt() <= tolerance * bnorm {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

/// Harmonic coordinates solved on a voxel grid: for every cage vertex `j`,
/// the discrete Laplace equation on the interior nodes with boundary values
/// given by the piecewise-linear hat function of `j` at the closest cage
/// point. Values are read by trilinear interpolation and every row is
/// renormalized to sum to one.
pub fn compute_harmonic_matrix(
    mesh: &TriangleMesh,
    cage: &Cage,
    params: &HarmonicParams,
) -> Result<CoordinateMatrix> {
    for (i, p) in mesh.positions.iter().enumerate() {
        let w = winding_number(p, &cage.mesh);
        if w < 0.5 {
            return Err(Error::VertexOutsideCage {
                vertex: i,
                winding: w,
            });
        }
    }
    let vox = voxelize(&cage.mesh, mesh, params.grid_dims)?;
    let nv = cage.mesh.vertex_count();
    let n_int = vox.interior_nodes.len();

    // right-hand side contributions per cage vertex
    let mut rhs_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for (i, nb) in vox.neighbors.iter().enumerate() {
        let ijk = vox.grid.unindex(vox.interior_nodes[i]);
        let offsets: [[isize; 3]; 6] = [
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ];
        for (slot, off) in nb.iter().zip(&offsets) {
            if *slot != usize::MAX {
                continue;
            }
            let q = vox.grid.index(
                (ijk[0] as isize + off[0]) as usize,
                (ijk[1] as isize + off[1]) as usize,
                (ijk[2] as isize + off[2]) as usize,
            );
            for &(j, h) in &vox.hats[&q] {
                if h != 0.0 {
                    rhs_terms[j].push((i, h));
                }
            }
        }
    }
    let stencils: Vec<[(usize, f64); 8]> = mesh
        .positions
        .iter()
        .map(|p| vox.grid.trilinear_stencil(p).expect("vertex inside the cage"))
        .collect();

    let columns: Vec<Vec<f64>> = (0..nv)
        .into_par_iter()
        .map(|j| {
            let mut rhs = vec![0.0; n_int];
            for &(i, h) in &rhs_terms[j] {
                rhs[i] += h;
            }
            let u = solve_interior(&vox, &rhs, params.tolerance);
            stencils
                .iter()
                .map(|st| {
                    st.iter()
                        .map(|&(node, w)| {
                            let id = vox.interior_id[node];
                            let value = if id != usize::MAX {
                                u[id]
                            } else {
                                vox.hats[&node]
                                    .iter()
                                    .filter(|(k, _)| *k == j)
                                    .map(|(_, h)| h)
                                    .sum()
                            };
                            w * value
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut entries = DMatrix::from_fn(mesh.vertex_count(), nv, |i, j| columns[j][i]);
    for mut row in entries.row_iter_mut() {
        let s = row.sum();
        if s != 0.0 {
            row /= s;
        }
    }
    Ok(CoordinateMatrix {
        entries,
        method: CoordinateMethod::Harmonic,
        mesh_hash: mesh.digest(),
        cage_hash: cage.mesh.digest(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::shapes;

    fn params(n: usize) -> HarmonicParams {
        HarmonicParams {
            grid_dims: [n, n, n],
            ..Default::default()
        }
    }

    /// Cube whose faces are fanned around a centre vertex, so every corner
    /// and every face centre is equivalent under the cube's symmetries.
    fn fanned_cube() -> TriangleMesh {
        let mut positions: Vec<Vec3> = (0..8)
            .map(|c| Vec3::new(
                if c & 1 == 0 { -1.0 } else { 1.0 },
                if c & 2 == 0 { -1.0 } else { 1.0 },
                if c & 4 == 0 { -1.0 } else { 1.0 },
            ))
            .collect();
        let mut faces = Vec::new();
        for axis in 0..3 {
            for side in [-1.0, 1.0] {
                let mut center = Vec3::zeros();
                center[axis] = side;
                let ring: Vec<usize> = {
                    let mut r: Vec<usize> =
                        (0..8).filter(|&c| positions[c][axis] == side).collect();
                    let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
                    r.sort_by(|&p, &q| {
                        let ang = |v: usize| positions[v][c].atan2(positions[v][b]);
                        ang(p).total_cmp(&ang(q))
                    });
                    r
                };
                positions.push(center);
                let m = positions.len() - 1;
                for k in 0..4 {
                    let (a, b) = (ring[k], ring[(k + 1) % 4]);
                    let n = (positions[a] - positions[m]).cross(&(positions[b] - positions[m]));
                    faces.push(if n.dot(&center) > 0.0 { [m, a, b] } else { [m, b, a] });
                }
            }
        }
        TriangleMesh::new(positions, faces).unwrap()
    }

    #[test]
    fn cube_center_is_uniform_over_corners() {
        let cage = Cage::from_mesh(fanned_cube()).unwrap();
        let mesh = TriangleMesh {
            positions: vec![Vec3::zeros()],
            faces: vec![],
        };
        let c = compute_harmonic_matrix(&mesh, &cage, &params(25)).unwrap();
        let corners: Vec<f64> = (0..8).map(|j| c.entries[(0, j)]).collect();
        let centers: Vec<f64> = (8..14).map(|j| c.entries[(0, j)]).collect();
        let mean = corners.iter().sum::<f64>() / 8.0;
        assert!(corners.iter().all(|w| (w - mean).abs() < 1e-3), "{corners:?}");
        let mean_c = centers.iter().sum::<f64>() / 6.0;
        assert!(centers.iter().all(|w| (w - mean_c).abs() < 1e-3), "{centers:?}");
        let fine = compute_harmonic_matrix(&mesh, &cage, &params(41)).unwrap();
        assert!((fine.entries - &c.entries).amax() < 1e-2);
    }

    #[test]
    fn rows_sum_to_one_and_stay_in_range() {
        let cage = Cage::from_mesh(shapes::icosphere(1, 1.0)).unwrap();
        let mesh = shapes::icosphere(2, 0.6);
        let c = compute_harmonic_matrix(&mesh, &cage, &params(20)).unwrap();
        assert!(c.max_row_sum_error() <= 1e-9);
        assert!(c.entries.iter().all(|&x| (-1e-6..=1.0 + 1e-6).contains(&x)));
        assert_eq!(c.method, CoordinateMethod::Harmonic);
    }

    #[test]
    fn constant_boundary_gives_constant_interior() {
        let cage = Cage::from_mesh(shapes::icosphere(1, 1.0)).unwrap();
        let vox = voxelize(&cage.mesh, &shapes::icosphere(1, 0.5), [16, 16, 16]).unwrap();
        let mut rhs = vec![0.0; vox.interior_nodes.len()];
        for (i, nb) in vox.neighbors.iter().enumerate() {
            rhs[i] = nb.iter().filter(|&&s| s == usize::MAX).count() as f64;
        }
        let u = solve_interior(&vox, &rhs, 1e-12);
        assert!(u.iter().all(|&x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn outside_vertex_rejected() {
        let cage = Cage::from_mesh(shapes::icosphere(1, 1.0)).unwrap();
        let mesh = TriangleMesh {
            positions: vec![Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0)],
            faces: vec![],
        };
        assert!(matches!(
            compute_harmonic_matrix(&mesh, &cage, &params(12)),
            Err(Error::VertexOutsideCage { vertex: 1, .. })
        ));
    }
}
