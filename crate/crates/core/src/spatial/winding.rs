use rayon::prelude::*;

use crate::mesh::{connected_components, topology_report, TriangleMesh};
use crate::Vec3;

/// Signed solid angle subtended by triangle `(a, b, c)` at `p`.
pub fn solid_angle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (a, b, c) = (a - p, b - p, c - p);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let det = a.dot(&b.cross(&c));
    let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
    2.0 * det.atan2(den)
}

/// Generalized winding number: total signed solid angle over `4π`, summed
/// face by face in index order.
pub fn winding_number(p: &Vec3, mesh: &TriangleMesh) -> f64 {
    let mut sum = 0.0;
    for &[a, b, c] in &mesh.faces {
        sum += solid_angle(p, &mesh.positions[a], &mesh.positions[b], &mesh.positions[c]);
    }
    sum / (4.0 * std::f64::consts::PI)
}

/// Batch version of [`winding_number`]; each query is evaluated independently
/// so results do not depend on the worker count.
pub fn winding_numbers(points: &[Vec3], mesh: &TriangleMesh) -> Vec<f64> {
    points.par_iter().map(|p| winding_number(p, mesh)).collect()
}

/// For every connected component (in [`connected_components`] order),
/// whether all of its vertices lie inside some other closed component, that
/// is have a winding number of magnitude above one half with respect to it.
pub fn interior_components(mesh: &TriangleMesh) -> Vec<bool> {
    let comps = connected_components(mesh);
    let mut owner = vec![0; mesh.vertex_count()];
    for (k, c) in comps.iter().enumerate() {
        for &v in c {
            owner[v] = k;
        }
    }
    let mut faces_of = vec![Vec::new(); comps.len()];
    for (f, tri) in mesh.faces.iter().enumerate() {
        faces_of[owner[tri[0]]].push(f);
    }
    let closed: Vec<Option<TriangleMesh>> = faces_of
        .iter()
        .map(|faces| {
            let part = mesh.submesh(faces).0;
            (!faces.is_empty() && topology_report(&part).is_closed).then_some(part)
        })
        .collect();
    comps
        .iter()
        .enumerate()
        .map(|(i, verts)| {
            let points: Vec<Vec3> = verts.iter().map(|&v| mesh.positions[v]).collect();
            closed.iter().enumerate().any(|(j, outer)| {
                i != j
                    && outer
                        .as_ref()
                        .is_some_and(|o| winding_numbers(&points, o).iter().all(|w| w.abs() > 0.5))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::shapes;

    #[test]
    fn cube_inside_outside_flipped() {
        let c = shapes::box_mesh(Vec3::repeat(-0.5), Vec3::repeat(0.5), 1);
        assert!((winding_number(&Vec3::zeros(), &c) - 1.0).abs() < 1e-9);
        assert!(winding_number(&Vec3::new(10.0, 3.0, -2.0), &c).abs() < 1e-9);
        assert!((winding_number(&Vec3::zeros(), &c.flipped()) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn open_geometry_is_fractional() {
        let c = shapes::box_mesh(Vec3::repeat(-0.5), Vec3::repeat(0.5), 1);
        let half = TriangleMesh {
            positions: c.positions.clone(),
            faces: c.faces[..6].to_vec(),
        };
        let w = winding_number(&Vec3::zeros(), &half);
        assert!(w > 0.1 && w < 0.9, "{w}");
    }

    proptest::proptest! {
        #[test]
        fn additive_over_components(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
            let a = shapes::icosphere(1, 0.7);
            let b = shapes::box_mesh(Vec3::new(1.0, -0.4, -0.4), Vec3::new(1.8, 0.4, 0.4), 2);
            let p = Vec3::new(x, y, z);
            let u = winding_number(&p, &a.merged(&b));
            let s = winding_number(&p, &a) + winding_number(&p, &b);
            proptest::prop_assert!((u - s).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_component_is_interior() {
        let outer = shapes::icosphere(2, 1.0);
        let inner = shapes::icosphere(1, 0.3);
        let beside = crate::fixtures::shapes::translated(&shapes::icosphere(1, 0.3), Vec3::new(3.0, 0.0, 0.0));
        let m = outer.merged(&inner).merged(&beside);
        assert_eq!(interior_components(&m), vec![false, true, false]);
        assert_eq!(interior_components(&m.flipped()), vec![false, true, false]);
    }
}
