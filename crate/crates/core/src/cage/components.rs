use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{component_labels, TriangleMesh};
use crate::spatial::{winding_number, TriangleIndex};

/// Face lists of the connected components, ordered like
/// [`crate::mesh::connected_components`]. Isolated vertices form no entry.
pub fn component_faces(mesh: &TriangleMesh) -> Vec<Vec<usize>> {
    let (labels, count) = component_labels(mesh);
    let mut out = vec![Vec::new(); count];
    for (f, tri) in mesh.faces.iter().enumerate() {
        out[labels[tri[0]]].push(f);
    }
    out.retain(|c| !c.is_empty());
    out
}

/// Connected components as standalone meshes.
pub fn split_components(mesh: &TriangleMesh) -> Vec<TriangleMesh> {
    component_faces(mesh)
        .iter()
        .map(|faces| mesh.submesh(faces).0)
        .collect()
}

/// Deletes every closed component that lies inside another one. A component
/// is inside when its first vertex has winding number at least 0.5 with
/// respect to some other single component. Testing against each other
/// component separately keeps shells nested in a cavity (for example an
/// organ inside a hollow body) from cancelling the enclosing winding.
pub fn remove_internal_components(mesh: &TriangleMesh) -> TriangleMesh {
    let groups = component_faces(mesh);
    if groups.len() < 2 {
        return mesh.without_unreferenced();
    }
    let parts: Vec<TriangleMesh> = groups.iter().map(|g| mesh.submesh(g).0).collect();
    let inside: Vec<bool> = (0..parts.len())
        .into_par_iter()
        .map(|i| {
            let sample = parts[i].positions[0];
            (0..parts.len()).any(|j| j != i && winding_number(&sample, &parts[j]) >= 0.5)
        })
        .collect();
    let keep: Vec<usize> = groups
        .iter()
        .zip(&inside)
        .filter(|(_, &inner)| !inner)
        .flat_map(|(g, _)| g.iter().copied())
        .collect();
    let mut keep = keep;
    keep.sort_unstable();
    mesh.submesh(&keep).0
}

/// Smallest distance from a vertex of either mesh to the surface of the
/// other.
pub fn component_gap_between(a: &TriangleMesh, b: &TriangleMesh) -> f64 {
    let one_way = |from: &TriangleMesh, to: &TriangleMesh| {
        let index = TriangleIndex::new(to);
        from.positions
            .par_iter()
            .map(|p| index.distance(p))
            .reduce(|| f64::INFINITY, f64::min)
    };
    one_way(a, b).min(one_way(b, a))
}

/// Largest, over pairs of connected components, of the vertex-to-surface
/// gap between the two.
pub fn component_gap(mesh: &TriangleMesh) -> Result<f64> {
    let parts = split_components(mesh);
    pairwise_max_gap(&parts).ok_or(Error::SingleComponent)
}

pub(crate) fn pairwise_max_gap(parts: &[TriangleMesh]) -> Option<f64> {
    if parts.len() < 2 {
        return None;
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            best = best.max(component_gap_between(&parts[i], &parts[j]));
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cage::marching_cubes;
    use crate::fixtures::shapes;
    use crate::mesh::{connected_components, TriangleMesh};
    use crate::spatial::{point_triangle_distance, sample_udf_grid};
    use crate::Vec3;

    fn brute_gap(a: &TriangleMesh, b: &TriangleMesh) -> f64 {
        let mut best = f64::INFINITY;
        for (x, y) in [(a, b), (b, a)] {
            for p in &x.positions {
                for f in 0..y.face_count() {
                    best = best.min(point_triangle_distance(p, &y.triangle(f)).0);
                }
            }
        }
        best
    }

    fn first_use_order(m: &TriangleMesh) -> TriangleMesh {
        m.submesh(&(0..m.face_count()).collect::<Vec<_>>()).0
    }

    #[test]
    fn concentric_spheres_keep_outer() {
        let outer = shapes::icosphere(2, 1.0);
        let inner = shapes::icosphere(2, 0.5);
        let out = remove_internal_components(&inner.merged(&outer));
        assert_eq!(out, first_use_order(&outer));
    }

    #[test]
    fn side_by_side_spheres_kept() {
        let a = shapes::icosphere(1, 1.0);
        let b = shapes::translated(&a, Vec3::new(3.0, 0.0, 0.0));
        let m = a.merged(&b);
        assert_eq!(remove_internal_components(&m), first_use_order(&m));
    }

    #[test]
    fn nested_in_cavity_removed() {
        let outer = shapes::icosphere(2, 1.0);
        let cavity = shapes::icosphere(2, 0.9).flipped();
        let organ = shapes::icosphere(1, 0.2);
        let out = remove_internal_components(&outer.merged(&cavity).merged(&organ));
        assert_eq!(out, first_use_order(&outer));
    }

    #[test]
    fn solid_cube_offset_inner_shell_removed() {
        let cube = shapes::box_mesh(Vec3::repeat(-0.5), Vec3::repeat(0.5), 2);
        let grid = sample_udf_grid(&cube, [40, 40, 40], 0.2).unwrap();
        let mc = marching_cubes(&grid, 0.08).unwrap();
        assert_eq!(connected_components(&mc).len(), 2);
        let out = remove_internal_components(&mc);
        assert_eq!(connected_components(&out).len(), 1);
        for p in &cube.positions {
            assert!(winding_number(p, &out) > 0.99);
        }
    }

    #[test]
    fn sphere_gap_examples() {
        let a = shapes::icosphere(3, 1.0);
        let b = shapes::translated(&a, Vec3::new(3.0, 0.0, 0.0));
        let gap = component_gap(&a.merged(&b)).unwrap();
        assert!((gap - 1.0).abs() < 1e-12);
        assert_eq!(gap, brute_gap(&a, &b));

        let unit = shapes::box_mesh(Vec3::zeros(), Vec3::repeat(1.0), 2);
        let m = unit
            .merged(&shapes::translated(&unit, Vec3::new(1.5, 0.0, 0.0)))
            .merged(&shapes::translated(&unit, Vec3::new(3.5, 0.0, 0.0)));
        let parts = split_components(&m);
        let mut expect = f64::NEG_INFINITY;
        for i in 0..3 {
            for j in i + 1..3 {
                expect = expect.max(brute_gap(&parts[i], &parts[j]));
            }
        }
        assert_eq!(component_gap(&m).unwrap(), 2.5);
        assert_eq!(expect, 2.5);

        let touching = shapes::translated(&unit, Vec3::new(1.0, 0.0, 0.0));
        assert!(component_gap(&unit.merged(&touching)).unwrap() < 1e-12);
        assert!(matches!(component_gap(&unit), Err(Error::SingleComponent)));
    }
}
