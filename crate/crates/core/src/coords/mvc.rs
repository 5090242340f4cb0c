use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::matrix::{CoordinateMatrix, CoordinateMethod};
use crate::cage::Cage;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::Vec3;

/// Relative distance (to the cage bbox diagonal) under which a query point
/// snaps to a cage vertex.
const VERTEX_TOL: f64 = 1e-10;
/// Angular tolerance for the on-face and in-plane cases.
const ANGLE_TOL: f64 = 1e-10;
/// Triple product of the unit directions under which `p` counts as lying in
/// the plane of a face (outside it), where the face contributes nothing.
const PLANE_TOL: f64 = 1e-14;

/// 3D mean value coordinates of `p` with respect to a closed triangulated
/// cage. Exact indicator rows at cage vertices and barycentric rows on cage
/// faces.
pub fn mvc_weights(p: &Vec3, cage: &TriangleMesh) -> Result<Vec<f64>> {
    mvc_weights_with_scale(p, cage, cage.bbox_diagonal())
}

pub(crate) fn mvc_weights_with_scale(p: &Vec3, cage: &TriangleMesh, diag: f64) -> Result<Vec<f64>> {
    let nv = cage.vertex_count();
    let mut dist = vec![0.0; nv];
    let mut unit = vec![Vec3::zeros(); nv];
    for (j, v) in cage.positions.iter().enumerate() {
        let d = v - p;
        let n = d.norm();
        if n <= VERTEX_TOL * diag {
            let mut row = vec![0.0; nv];
            row[j] = 1.0;
            return Ok(row);
        }
        dist[j] = n;
        unit[j] = d / n;
    }

    let mut w = vec![0.0; nv];
    for (t, tri) in cage.faces.iter().enumerate() {
        let u = tri.map(|j| unit[j]);
        let d = tri.map(|j| dist[j]);
        let mut theta = [0.0; 3];
        let mut cross = [Vec3::zeros(); 3];
        for i in 0..3 {
            let (a, b) = (u[(i + 1) % 3], u[(i + 2) % 3]);
            cross[i] = a.cross(&b);
            theta[i] = 2.0 * (a - b).norm().atan2((a + b).norm());
        }
        let h = 0.5 * (theta[0] + theta[1] + theta[2]);
        if PI - h < ANGLE_TOL {
            let mut row = vec![0.0; nv];
            let mut sum = 0.0;
            for i in 0..3 {
                let wi = theta[i].sin() * d[(i + 1) % 3] * d[(i + 2) % 3];
                row[tri[i]] += wi;
                sum += wi;
            }
            if !(sum > 0.0 && sum.is_finite()) {
                return Err(Error::NonFiniteWeight {
                    triangle: t,
                    vertex: None,
                });
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
            return Ok(row);
        }
        let det = u[0].dot(&cross[0]);
        if det.abs() <= PLANE_TOL {
            continue;
        }
        // Mean unit normal of the spherical triangle, split along the u_i.
        let mut mean = Vec3::zeros();
        for i in 0..3 {
            let n = cross[i].norm();
            if n > 0.0 {
                mean += (0.5 * theta[i] / n) * cross[i];
            }
        }
        for i in 0..3 {
            let wi = mean.dot(&cross[i]) / (det * d[i]);
            if !wi.is_finite() {
                return Err(Error::NonFiniteWeight {
                    triangle: t,
                    vertex: None,
                });
            }
            w[tri[i]] += wi;
        }
    }
    let sum: f64 = w.iter().sum();
    if !(sum.is_finite() && sum != 0.0) {
        return Err(Error::NonFiniteWeight {
            triangle: cage.faces.len(),
            vertex: None,
        });
    }
    for x in w.iter_mut() {
        *x /= sum;
    }
    Ok(w)
}

/// One row of mean value coordinates per mesh vertex.
pub fn compute_mvc_matrix(mesh: &TriangleMesh, cage: &Cage) -> Result<CoordinateMatrix> {
    let diag = cage.mesh.bbox_diagonal();
    let rows: Vec<Vec<f64>> = mesh
        .positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            mvc_weights_with_scale(p, &cage.mesh, diag).map_err(|e| match e {
                Error::NonFiniteWeight { triangle, .. } => Error::NonFiniteWeight {
                    triangle,
                    vertex: Some(i),
                },
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let nv = cage.mesh.vertex_count();
    let entries = DMatrix::from_fn(rows.len(), nv, |i, j| rows[i][j]);
    Ok(CoordinateMatrix {
        entries,
        method: CoordinateMethod::Mvc,
        mesh_hash: mesh.digest(),
        cage_hash: cage.mesh.digest(),
    })
}
