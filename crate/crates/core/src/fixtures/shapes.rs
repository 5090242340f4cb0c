//! Closed primitive meshes used by the fixture corpora and tests. All are
//! consistently oriented with outward normals.

use std::collections::HashMap;

use crate::mesh::TriangleMesh;
use crate::Vec3;

/// Subdivided icosahedron projected to a sphere: `10·4^s + 2` vertices,
/// `20·4^s` faces.
pub fn icosphere(subdivisions: usize, radius: f64) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, positions: &mut Vec<Vec3>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *cache.entry(key).or_insert_with(|| {
                positions.push(((positions[a] + positions[b]) * 0.5).normalize());
                positions.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut positions);
            let bc = mid(b, c, &mut positions);
            let ca = mid(c, a, &mut positions);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for p in &mut positions {
        *p *= radius;
    }
    TriangleMesh { positions, faces }
}

pub fn translated(mesh: &TriangleMesh, by: Vec3) -> TriangleMesh {
    TriangleMesh {
        positions: mesh.positions.iter().map(|p| p + by).collect(),
        faces: mesh.faces.clone(),
    }
}

pub fn scaled(mesh: &TriangleMesh, by: Vec3) -> TriangleMesh {
    TriangleMesh {
        positions: mesh.positions.iter().map(|p| p.component_mul(&by)).collect(),
        faces: mesh.faces.clone(),
    }
}

/// Axis-aligned box with every face split into `n x n` quads.
pub fn box_mesh(lo: Vec3, hi: Vec3, n: usize) -> TriangleMesh {
    let n = n.max(1);
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut positions = Vec::new();
    let mut vid = |ijk: [usize; 3], positions: &mut Vec<Vec3>| -> usize {
        *index.entry(ijk).or_insert_with(|| {
            let p = Vec3::from_fn(|a, _| lo[a] + (hi[a] - lo[a]) * ijk[a] as f64 / n as f64);
            positions.push(p);
            positions.len() - 1
        })
    };
    let mut faces = Vec::new();
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for side in [0, n] {
            for u in 0..n {
                for v in 0..n {
                    let at = |du: usize, dv: usize| {
                        let mut ijk = [0; 3];
                        ijk[a] = side;
                        ijk[b] = u + du;
                        ijk[c] = v + dv;
                        ijk
                    };
                    let p00 = vid(at(0, 0), &mut positions);
                    let p10 = vid(at(1, 0), &mut positions);
                    let p11 = vid(at(1, 1), &mut positions);
                    let p01 = vid(at(0, 1), &mut positions);
                    if side == n {
                        faces.push([p00, p10, p11]);
                        faces.push([p00, p11, p01]);
                    } else {
                        faces.push([p00, p11, p10]);
                        faces.push([p00, p01, p11]);
                    }
                }
            }
        }
    }
    TriangleMesh { positions, faces }
}

/// Closed tube swept along a polyline with per-sample radii and flat caps.
pub fn tube(path: &[Vec3], radii: &[f64], around: usize) -> TriangleMesh {
    assert!(path.len() >= 2 && radii.len() == path.len() && around >= 3);
    let tangent = |i: usize| -> Vec3 {
        let t = if i == 0 {
            path[1] - path[0]
        } else if i + 1 == path.len() {
            path[i] - path[i - 1]
        } else {
            path[i + 1] - path[i - 1]
        };
        t.normalize()
    };
    // parallel-transported frame
    let t0 = tangent(0);
    let seed = if t0.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let mut normal = (seed - t0 * seed.dot(&t0)).normalize();
    let mut positions = Vec::new();
    for (i, c) in path.iter().enumerate() {
        let t = tangent(i);
        normal = (normal - t * normal.dot(&t)).normalize();
        let binormal = t.cross(&normal);
        for k in 0..around {
            let ang = 2.0 * std::f64::consts::PI * k as f64 / around as f64;
            positions.push(c + (normal * ang.cos() + binormal * ang.sin()) * radii[i]);
        }
    }
    let ring = |i: usize, k: usize| i * around + (k % around);
    let mut faces = Vec::new();
    for i in 0..path.len() - 1 {
        for k in 0..around {
            let (a, b, c, d) = (ring(i, k), ring(i, k + 1), ring(i + 1, k + 1), ring(i + 1, k));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let start = positions.len();
    positions.push(path[0]);
    let end = positions.len();
    positions.push(*path.last().unwrap());
    let last = path.len() - 1;
    for k in 0..around {
        faces.push([start, ring(0, k + 1), ring(0, k)]);
        faces.push([end, ring(last, k), ring(last, k + 1)]);
    }
    let mesh = TriangleMesh { positions, faces };
    if mesh.signed_volume() < 0.0 {
        mesh.flipped()
    } else {
        mesh
    }
}

/// Straight closed cylinder along `x`, centred at the origin.
pub fn cylinder(radius: f64, length: f64, around: usize, along: usize) -> TriangleMesh {
    let path: Vec<Vec3> = (0..=along)
        .map(|i| Vec3::new(-length / 2.0 + length * i as f64 / along as f64, 0.0, 0.0))
        .collect();
    tube(&path, &vec![radius; path.len()], around)
}

pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> TriangleMesh {
    let mut positions = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
            let r = major + minor * v.cos();
            positions.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mesh = TriangleMesh { positions, faces };
    if mesh.signed_volume() < 0.0 {
        mesh.flipped()
    } else {
        mesh
    }
}

/// Regular tetrahedron inscribed in the sphere of the given radius.
pub fn tetrahedron(radius: f64) -> TriangleMesh {
    let s = radius / 3f64.sqrt();
    let positions = vec![
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ];
    let mesh = TriangleMesh {
        positions,
        faces: vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    };
    if mesh.signed_volume() < 0.0 {
        mesh.flipped()
    } else {
        mesh
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::topology_report;

    #[test]
    fn primitives_are_closed_and_outward() {
        let meshes = [
            icosphere(2, 1.0),
            box_mesh(Vec3::repeat(-1.0), Vec3::new(1.0, 2.0, 0.5), 3),
            cylinder(0.2, 1.0, 12, 6),
            torus(1.0, 0.3, 16, 8),
            tetrahedron(1.0),
            tube(
                &[Vec3::zeros(), Vec3::new(0.5, 0.1, 0.0), Vec3::new(1.0, 0.4, 0.0)],
                &[0.1, 0.15, 0.1],
                10,
            ),
        ];
        for m in &meshes {
            let r = topology_report(m);
            assert!(r.is_valid_cage(), "{r:?}");
            assert!(m.signed_volume() > 0.0);
        }
        let ico = icosphere(4, 1.0);
        assert_eq!(ico.vertex_count(), 2562);
        assert_eq!(icosphere(5, 1.0).face_count(), 20480);
        let b = box_mesh(Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0), 2);
        assert!((b.signed_volume() - 6.0).abs() < 1e-12);
        assert!((b.area() - 22.0).abs() < 1e-12);
    }
}
