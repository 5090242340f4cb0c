use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

const MAGIC: &[u8; 4] = b"GBC1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateMethod {
    Mvc,
    Harmonic,
}

impl CoordinateMethod {
    fn to_byte(self) -> u8 {
        match self {
            CoordinateMethod::Mvc => 0,
            CoordinateMethod::Harmonic => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(CoordinateMethod::Mvc),
            1 => Ok(CoordinateMethod::Harmonic),
            other => Err(Error::Format(format!("unknown coordinate method byte {other}"))),
        }
    }
}

impl std::str::FromStr for CoordinateMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mvc" => Ok(CoordinateMethod::Mvc),
            "harmonic" => Ok(CoordinateMethod::Harmonic),
            other => Err(Error::InvalidArgument(format!(
                "unknown coordinate method {other:?} (expected mvc or harmonic)"
            ))),
        }
    }
}

/// Dense `n x ñ_V` matrix of generalized barycentric coordinates: row `i`
/// holds the weights of mesh vertex `i` over the cage vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMatrix {
    pub entries: DMatrix<f64>,
    pub method: CoordinateMethod,
    pub mesh_hash: u64,
    pub cage_hash: u64,
}

impl CoordinateMatrix {
    pub fn mesh_vertex_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cage_vertex_count(&self) -> usize {
        self.entries.ncols()
    }

    /// Largest deviation of a row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        self.entries
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Checks that the matrix was computed for this mesh and cage.
    pub fn check_digests(&self, mesh: &TriangleMesh, cage: &TriangleMesh) -> Result<()> {
        if self.mesh_hash != mesh.digest() {
            return Err(Error::DigestMismatch(format!(
                "coordinates were computed for mesh {:016x}, got {:016x}",
                self.mesh_hash,
                mesh.digest()
            )));
        }
        if self.cage_hash != cage.digest() {
            return Err(Error::DigestMismatch(format!(
                "coordinates were computed for cage {:016x}, got {:016x}",
                self.cage_hash,
                cage.digest()
            )));
        }
        Ok(())
    }

    /// `GBC1` layout: magic, method byte, `n` and `ñ_V` as u32, mesh and cage
    /// digests as u64, then the entries row by row as f64, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, m) = self.entries.shape();
        let mut w = Writer::new(MAGIC);
        w.u8(self.method.to_byte())
            .u32(n as u32)
            .u32(m as u32)
            .u64(self.mesh_hash)
            .u64(self.cage_hash);
        for i in 0..n {
            for j in 0..m {
                w.f64(self.entries[(i, j)]);
            }
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data, MAGIC)?;
        let method = CoordinateMethod::from_byte(r.u8()?)?;
        let n = r.u32()? as usize;
        let m = r.u32()? as usize;
        let mesh_hash = r.u64()?;
        let cage_hash = r.u64()?;
        let mut values = Vec::with_capacity(n * m);
        for _ in 0..n * m {
            values.push(r.f64()?);
        }
        r.finish()?;
        Ok(Self {
            entries: DMatrix::from_row_slice(n, m, &values),
            method,
            mesh_hash,
            cage_hash,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

/// The mapping operator: `C · ỹ`, carrying per-cage-vertex values onto the
/// mesh vertices.
pub fn map_signal(coords: &CoordinateMatrix, cage_values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if cage_values.nrows() != coords.cage_vertex_count() || cage_values.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cage values are {}x{}, coordinates expect {} rows and at least one column",
            cage_values.nrows(),
            cage_values.ncols(),
            coords.cage_vertex_count()
        )));
    }
    Ok(&coords.entries * cage_values)
}

/// Unweighted mean of the three vertex rows of every face.
pub fn average_to_faces(mesh: &TriangleMesh, vertex_values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if vertex_values.nrows() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} vertex rows for a mesh with {} vertices",
            vertex_values.nrows(),
            mesh.vertex_count()
        )));
    }
    let d = vertex_values.ncols();
    Ok(DMatrix::from_fn(mesh.face_count(), d, |f, c| {
        let [a, b, e] = mesh.faces[f];
        (vertex_values[(a, c)] + vertex_values[(b, c)] + vertex_values[(e, c)]) / 3.0
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;

    fn sample() -> CoordinateMatrix {
        CoordinateMatrix {
            entries: DMatrix::from_row_slice(2, 3, &[0.2, 0.3, 0.5, 1.0, 0.0, 0.0]),
            method: CoordinateMethod::Harmonic,
            mesh_hash: 0x0102030405060708,
            cage_hash: 42,
        }
    }

    #[test]
    fn gbc1_round_trip_and_layout() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(bytes.len(), 4 + 1 + 8 + 16 + 6 * 8);
        assert_eq!(&bytes[..4], b"GBC1");
        assert_eq!(bytes[4], 1);
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[29..37].try_into().unwrap()), 0.2);
        assert_eq!(f64::from_le_bytes(bytes[37..45].try_into().unwrap()), 0.3);
        assert_eq!(CoordinateMatrix::from_bytes(&bytes).unwrap(), c);
        assert!(CoordinateMatrix::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(CoordinateMatrix::from_bytes(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn map_signal_examples() {
        let c = sample();
        let constant = DMatrix::from_element(3, 1, 7.0);
        let out = map_signal(&c, &constant).unwrap();
        assert!(out.iter().all(|&v| (v - 7.0).abs() < 1e-15));
        let onehot = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.0]);
        assert_eq!(map_signal(&c, &onehot).unwrap().column(0), c.entries.column(1));
        assert!(matches!(
            map_signal(&c, &DMatrix::zeros(2, 1)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(map_signal(&c, &DMatrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn face_averages() {
        let mesh = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let v = DMatrix::from_row_slice(3, 2, &[0.0, 5.0, 0.0, 5.0, 3.0, 5.0]);
        let f = average_to_faces(&mesh, &v).unwrap();
        assert_eq!(f[(0, 0)], 1.0);
        assert_eq!(f[(0, 1)], 5.0);
        let x = DMatrix::from_fn(3, 1, |i, _| mesh.positions[i].x);
        let centroid = (mesh.positions[0] + mesh.positions[1] + mesh.positions[2]) / 3.0;
        assert!((average_to_faces(&mesh, &x).unwrap()[(0, 0)] - centroid.x).abs() < 1e-15);
        assert!(average_to_faces(&mesh, &DMatrix::zeros(2, 1)).is_err());
    }
}
