use std::collections::HashMap;

use super::tables::TRIANGLE_TABLE;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::spatial::ScalarGrid;

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

const T_CLAMP: f64 = 1e-9;

/// Extracts the `level` isosurface of `grid`. A node is inside when its
/// value is below `level`; triangles are oriented so that normals point
/// towards increasing values. Vertices are shared through grid-edge identity.
pub fn marching_cubes(grid: &ScalarGrid, level: f64) -> Result<TriangleMesh> {
    let [nx, ny, nz] = grid.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid dims {:?} must be at least 2 per axis",
            grid.dims
        )));
    }
    let (lo, hi) = grid.min_max();
    if !(lo < level && level <= hi) {
        return Err(Error::EmptyLevelSet { level });
    }
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let on_boundary =
                    i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
                if on_boundary && grid.get(i, j, k) < level {
                    return Err(Error::LevelSetClipped { level });
                }
            }
        }
    }

    let mut positions = Vec::new();
    let mut faces = Vec::new();
    let mut welded: HashMap<(usize, usize), usize> = HashMap::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            for k in 0..nz - 1 {
                let mut nodes = [[0usize; 3]; 8];
                let mut vals = [0.0; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    nodes[c] = [i + off[0], j + off[1], k + off[2]];
                    vals[c] = grid.get(nodes[c][0], nodes[c][1], nodes[c][2]);
                    if vals[c] < level {
                        case |= 1 << c;
                    }
                }
                let row = &TRIANGLE_TABLE[case];
                if row[0] < 0 {
                    continue;
                }
                let mut vertex_of_edge = |e: usize, positions: &mut Vec<_>| -> usize {
                    let [c0, c1] = EDGES[e];
                    let (a, b) = if nodes[c0] <= nodes[c1] { (c0, c1) } else { (c1, c0) };
                    let axis = (0..3).find(|&d| nodes[a][d] != nodes[b][d]).unwrap();
                    let key = (grid.index(nodes[a][0], nodes[a][1], nodes[a][2]), axis);
                    *welded.entry(key).or_insert_with(|| {
                        let t = ((level - vals[a]) / (vals[b] - vals[a])).clamp(T_CLAMP, 1.0 - T_CLAMP);
                        let pa = grid.position(nodes[a]);
                        let pb = grid.position(nodes[b]);
                        positions.push(pa + (pb - pa) * t);
                        positions.len() - 1
                    })
                };
                for tri in row.chunks(3).take_while(|t| t[0] >= 0) {
                    let a = vertex_of_edge(tri[0] as usize, &mut positions);
                    let b = vertex_of_edge(tri[1] as usize, &mut positions);
                    let c = vertex_of_edge(tri[2] as usize, &mut positions);
                    faces.push([a, c, b]);
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::EmptyLevelSet { level });
    }
    Ok(TriangleMesh { positions, faces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{connected_components, topology_report};
    use crate::Vec3;
    use proptest::prelude::*;

    fn sphere_grid(n: usize) -> ScalarGrid {
        let spacing = 3.0 / (n - 1) as f64;
        ScalarGrid::from_fn(Vec3::repeat(-1.5), spacing, [n, n, n], |p| p.norm()).unwrap()
    }

    #[test]
    fn analytic_sphere() {
        let grid = sphere_grid(31);
        let mesh = marching_cubes(&grid, 1.0).unwrap();
        for p in &mesh.positions {
            assert!((p.norm() - 1.0).abs() <= grid.spacing);
        }
        let r = topology_report(&mesh);
        assert!(r.is_valid_cage(), "{r:?}");
        let vol = mesh.signed_volume();
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!(vol > 0.0 && (vol - exact).abs() / exact < 0.03, "{vol}");
    }

    #[test]
    fn constant_grid_is_empty() {
        let grid = ScalarGrid::new(Vec3::zeros(), 1.0, [3, 3, 3], vec![2.0; 27]).unwrap();
        for level in [1.9, 2.1] {
            assert!(matches!(
                marching_cubes(&grid, level),
                Err(Error::EmptyLevelSet { .. })
            ));
        }
    }

    #[test]
    fn boundary_clipping_is_reported() {
        let grid = sphere_grid(11);
        assert!(matches!(
            marching_cubes(&grid, 1.6),
            Err(Error::LevelSetClipped { .. })
        ));
    }

    #[test]
    fn two_blobs_give_two_components() {
        let grid = ScalarGrid::from_fn(Vec3::repeat(-2.0), 0.1, [41, 41, 41], |p| {
            let a = (p - Vec3::new(-1.0, 0.0, 0.0)).norm();
            let b = (p - Vec3::new(1.0, 0.0, 0.0)).norm();
            a.min(b)
        })
        .unwrap();
        let mesh = marching_cubes(&grid, 0.6).unwrap();
        assert_eq!(connected_components(&mesh).len(), 2);
        assert!(mesh.signed_volume() > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_fields_are_closed_manifolds(
            seed_vals in proptest::collection::vec(0.0f64..1.0, 6 * 6 * 6),
            level in 0.2f64..0.8,
        ) {
            // pad with a ring of large values so the level set never touches
            // the boundary
            let n = 8;
            let mut values = vec![2.0; n * n * n];
            for i in 0..6 {
                for j in 0..6 {
                    for k in 0..6 {
                        values[((i + 1) * n + j + 1) * n + k + 1] = seed_vals[(i * 6 + j) * 6 + k];
                    }
                }
            }
            let grid = ScalarGrid::new(Vec3::zeros(), 1.0, [n, n, n], values).unwrap();
            match marching_cubes(&grid, level) {
                Ok(mesh) => {
                    let r = topology_report(&mesh);
                    prop_assert!(r.is_closed && r.is_edge_manifold && r.is_vertex_manifold, "{:?}", r);
                    prop_assert!(mesh.signed_volume() > 0.0);
                }
                Err(Error::EmptyLevelSet { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
