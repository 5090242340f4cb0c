use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// Cotangents are clamped to this magnitude at degenerate corners.
pub const COT_CLAMP: f64 = 1e4;

/// Square matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Sums duplicate `(row, col, value)` triplets.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(i, j, v) in triplets {
            *rows[i].entry(j).or_insert(0.0) += v;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                cols.push(j);
                values.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Cotangent stiffness and barycentric lumped mass of a triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceOperator {
    /// Positive semidefinite: `L_ij = -(cot α_ij + cot β_ij) / 2` off the
    /// diagonal, rows summing to zero.
    pub stiffness: SparseMatrix,
    /// One third of the incident triangle area per vertex.
    pub mass: Vec<f64>,
}

/// Builds the cotangent Laplacian and lumped mass. Degenerate corners clamp
/// their cotangent to `±COT_CLAMP` and vertices with no area receive a small
/// positive mass, both with a logged warning.
pub fn cotan_laplacian_mass(mesh: &TriangleMesh) -> Result<LaplaceOperator> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let n = mesh.vertex_count();
    let mut triplets = Vec::with_capacity(mesh.face_count() * 12);
    let mut mass = vec![0.0; n];
    let mut degenerate = 0usize;
    for (f, tri) in mesh.faces.iter().enumerate() {
        let p = mesh.triangle(f);
        let double_area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
        if !(double_area > 0.0) {
            degenerate += 1;
        }
        for k in 0..3 {
            mass[tri[k]] += double_area / 6.0;
            let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let a = p[(k + 1) % 3] - p[k];
            let b = p[(k + 2) % 3] - p[k];
            let cross = a.cross(&b).norm();
            let cot = if cross > 0.0 {
                (a.dot(&b) / cross).clamp(-COT_CLAMP, COT_CLAMP)
            } else if a.dot(&b) >= 0.0 {
                COT_CLAMP
            } else {
                -COT_CLAMP
            };
            let w = 0.5 * cot;
            triplets.push((i, j, -w));
            triplets.push((j, i, -w));
            triplets.push((i, i, w));
            triplets.push((j, j, w));
        }
    }
    if degenerate > 0 {
        log::warn!("{degenerate} zero-area faces; their cotangents were clamped");
    }
    let total: f64 = mass.iter().sum();
    let floor = 1e-12 * (total / n as f64).max(f64::MIN_POSITIVE);
    let mut starved = 0usize;
    for m in mass.iter_mut() {
        if !(*m > floor) {
            *m = floor;
            starved += 1;
        }
    }
    if starved > 0 {
        log::warn!("{starved} vertices have no incident area; mass floored");
    }
    Ok(LaplaceOperator {
        stiffness: SparseMatrix::from_triplets(n, &triplets),
        mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::shapes;
    use crate::Vec3;
    use std::f64::consts::PI;

    #[test]
    fn rows_sum_to_zero_and_symmetric() {
        let op = cotan_laplacian_mass(&shapes::torus(1.0, 0.3, 24, 12)).unwrap();
        let l = &op.stiffness;
        for i in 0..l.dim() {
            assert!(l.row(i).map(|(_, v)| v).sum::<f64>().abs() < 1e-10);
            for (j, v) in l.row(i) {
                assert!((l.get(j, i) - v).abs() < 1e-14);
            }
        }
        assert!(op.mass.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn sphere_mass_is_surface_area() {
        let op = cotan_laplacian_mass(&shapes::icosphere(4, 1.0)).unwrap();
        let total: f64 = op.mass.iter().sum();
        assert!((total - 4.0 * PI).abs() < 0.02 * 4.0 * PI);
    }

    #[test]
    fn regular_grid_gives_five_point_stencil() {
        let h = 0.25;
        let n = 5;
        let idx = |i: usize, j: usize| i * n + j;
        let positions = (0..n * n)
            .map(|v| Vec3::new((v / n) as f64 * h, (v % n) as f64 * h, 0.0))
            .collect();
        let mut faces = Vec::new();
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let mesh = TriangleMesh::new(positions, faces).unwrap();
        let op = cotan_laplacian_mass(&mesh).unwrap();
        let c = idx(2, 2);
        assert!((op.stiffness.get(c, c) - 4.0).abs() < 1e-12);
        for nb in [idx(1, 2), idx(3, 2), idx(2, 1), idx(2, 3)] {
            assert!((op.stiffness.get(c, nb) + 1.0).abs() < 1e-12);
        }
        for diag in [idx(1, 1), idx(3, 3)] {
            assert!(op.stiffness.get(c, diag).abs() < 1e-12);
        }
        assert!((op.mass[c] - h * h).abs() < 1e-14);
    }

    #[test]
    fn degenerate_faces_stay_finite() {
        let mesh = TriangleMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let op = cotan_laplacian_mass(&mesh).unwrap();
        assert!(op.stiffness.values.iter().all(|v| v.is_finite()));
        assert!(op.mass.iter().all(|&m| m > 0.0));
    }
}
