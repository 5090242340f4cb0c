use rayon::prelude::*;

use super::bvh::TriangleIndex;
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::Vec3;

/// Scalar samples on a regular grid with cubic cells. Values are stored
/// row-major with `z` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub origin: Vec3,
    pub spacing: f64,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(origin: Vec3, spacing: f64, dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidArgument(format!(
                "grid dims {dims:?} must be at least 2 per axis"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid spacing {spacing}")));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::DimensionMismatch(format!(
                "{} values for dims {dims:?}",
                values.len()
            )));
        }
        Ok(Self {
            origin,
            spacing,
            dims,
            values,
        })
    }

    pub fn from_fn(
        origin: Vec3,
        spacing: f64,
        dims: [usize; 3],
        f: impl Fn(&Vec3) -> f64 + Sync,
    ) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        let mut g = Self::new(origin, spacing, dims, vec![0.0; n])?;
        let values: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| f(&g.position(g.unindex(i))))
            .collect();
        g.values = values;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let r = idx / self.dims[2];
        [r / self.dims[1], r % self.dims[1], k]
    }

    #[inline]
    pub fn position(&self, [i, j, k]: [usize; 3]) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Cell containing `p` and the local coordinates in `[0,1]^3`; `None`
    /// outside the grid.
    pub fn locate(&self, p: &Vec3) -> Option<([usize; 3], [f64; 3])> {
        let mut cell = [0; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let g = (p[a] - self.origin[a]) / self.spacing;
            if !(g >= 0.0 && g <= (self.dims[a] - 1) as f64) {
                return None;
            }
            let c = (g.floor() as usize).min(self.dims[a] - 2);
            cell[a] = c;
            t[a] = g - c as f64;
        }
        Some((cell, t))
    }

    /// Corner node indices and trilinear weights of the cell containing `p`.
    pub fn trilinear_stencil(&self, p: &Vec3) -> Option<[(usize, f64); 8]> {
        let ([i, j, k], [u, v, w]) = self.locate(p)?;
        let mut out = [(0, 0.0); 8];
        for (n, slot) in out.iter_mut().enumerate() {
            let (di, dj, dk) = (n >> 2 & 1, n >> 1 & 1, n & 1);
            let wt = (if di == 1 { u } else { 1.0 - u })
                * (if dj == 1 { v } else { 1.0 - v })
                * (if dk == 1 { w } else { 1.0 - w });
            *slot = (self.index(i + di, j + dj, k + dk), wt);
        }
        Some(out)
    }

    pub fn sample_trilinear(&self, p: &Vec3) -> Option<f64> {
        self.trilinear_stencil(p)
            .map(|s| s.iter().map(|&(n, w)| w * self.values[n]).sum())
    }

    /// `SGF1` serialization: dims (3 x u32), origin and spacing (4 x f64),
    /// then the values, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"SGF1");
        for &d in &self.dims {
            w.u32(d as u32);
        }
        w.f64(self.origin.x).f64(self.origin.y).f64(self.origin.z).f64(self.spacing);
        for &v in &self.values {
            w.f64(v);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data, b"SGF1")?;
        let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let origin = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let spacing = r.f64()?;
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|x| x.checked_mul(dims[2]))
            .ok_or_else(|| Error::Format("grid dims overflow".into()))?;
        let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Self::new(origin, spacing, dims, values)
    }
}

/// Grid frame covering the mesh bounds grown by `padding`, centered on the
/// bounding box, with the smallest cubic spacing that fits every axis.
pub(crate) fn grid_frame(mesh: &TriangleMesh, dims: [usize; 3], padding: f64) -> Result<(Vec3, f64)> {
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidArgument(format!(
            "grid dims {dims:?} must be at least 2 per axis"
        )));
    }
    let (lo, hi) = mesh.bounds().ok_or(Error::EmptyMesh)?;
    let ext = hi - lo + Vec3::repeat(2.0 * padding);
    let spacing = (0..3)
        .map(|a| ext[a] / (dims[a] - 1) as f64)
        .fold(0.0, f64::max);
    let spacing = if spacing > 0.0 { spacing } else { 1.0 };
    let center = (lo + hi) * 0.5;
    let half = Vec3::new(
        (dims[0] - 1) as f64,
        (dims[1] - 1) as f64,
        (dims[2] - 1) as f64,
    ) * (0.5 * spacing);
    Ok((center - half, spacing))
}

/// Unsigned distance to the nearest face at every grid node.
pub fn sample_udf_grid(mesh: &TriangleMesh, dims: [usize; 3], padding: f64) -> Result<ScalarGrid> {
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (origin, spacing) = grid_frame(mesh, dims, padding)?;
    let index = TriangleIndex::new(mesh);
    ScalarGrid::from_fn(origin, spacing, dims, |p| index.distance(p))
}

/// Stride of the coarse pass of [`sample_udf_band`].
const BAND_STRIDE: usize = 4;

/// Unsigned distance grid that is exact only near the surface: every node
/// whose distance is at most `band` holds the same value as
/// [`sample_udf_grid`]; every other node holds a lower bound that exceeds
/// `band`.
///
/// Nodes on a coarse sub-lattice are evaluated first; since the distance is
/// 1-Lipschitz, a fine node whose nearest coarse value minus the distance to
/// it exceeds `band` needs no query.
pub fn sample_udf_band(mesh: &TriangleMesh, dims: [usize; 3], padding: f64, band: f64) -> Result<ScalarGrid> {
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (origin, spacing) = grid_frame(mesh, dims, padding)?;
    let index = TriangleIndex::new(mesh);
    let cdims = dims.map(|d| (d - 1) / BAND_STRIDE + 1);
    let coarse = ScalarGrid::from_fn(origin, spacing * BAND_STRIDE as f64, cdims, |p| index.distance(p))?;
    let mut grid = ScalarGrid::new(origin, spacing, dims, vec![0.0; dims.iter().product()])?;
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let ijk = grid.unindex(idx);
            let p = grid.position(ijk);
            let c = [0, 1, 2].map(|a| ((ijk[a] + BAND_STRIDE / 2) / BAND_STRIDE).min(cdims[a] - 1));
            let lower = coarse.get(c[0], c[1], c[2]) - (coarse.position(c) - p).norm();
            if lower > band {
                lower
            } else {
                index.distance(&p)
            }
        })
        .collect();
    grid.values = values;
    Ok(grid)
}

/// Brute-force variant of [`sample_udf_grid`] (no acceleration structure).
pub fn sample_udf_grid_brute(
    mesh: &TriangleMesh,
    dims: [usize; 3],
    padding: f64,
) -> Result<ScalarGrid> {
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (origin, spacing) = grid_frame(mesh, dims, padding)?;
    let index = TriangleIndex::new(mesh);
    ScalarGrid::from_fn(origin, spacing, dims, |p| {
        index.closest_brute(p).map_or(f64::INFINITY, |c| c.distance)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::shapes;
    use crate::mesh::make_soup;

    #[test]
    fn single_triangle_nodes_on_plane_are_zero() {
        let t = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let g = sample_udf_grid(&t, [5, 5, 3], 0.0).unwrap();
        // z axis spans 2 spacings centred on z = 0
        assert_eq!(g.position([0, 0, 1]).z, 0.0);
        assert_eq!(g.get(0, 0, 1), 0.0);
        assert!(g.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn never_exceeds_any_single_face() {
        let m = shapes::icosphere(2, 1.0);
        let g = sample_udf_grid(&m, [9, 9, 9], 0.3).unwrap();
        for idx in (0..g.len()).step_by(7) {
            let p = g.position(g.unindex(idx));
            for f in (0..m.face_count()).step_by(13) {
                let (d, _) = super::super::point_triangle_distance(&p, &m.triangle(f));
                assert!(g.values[idx] <= d);
            }
        }
    }

    #[test]
    fn sphere_node_at_one_and_a_half_radius() {
        let m = shapes::icosphere(3, 1.0);
        assert_eq!(m.face_count(), 1280);
        let g = sample_udf_grid(&m, [13, 13, 13], 0.6).unwrap();
        let mut checked = 0;
        for idx in 0..g.len() {
            let p = g.position(g.unindex(idx));
            let r = p.norm();
            if (r - 1.5).abs() > 0.1 {
                continue;
            }
            let brute = (0..m.face_count())
                .map(|f| super::super::point_triangle_distance(&p, &m.triangle(f)).0)
                .fold(f64::INFINITY, f64::min);
            assert_eq!(g.values[idx], brute);
            // analytic distance r - 1, up to the chord deviation of the tessellation
            assert!((g.values[idx] - (r - 1.0)).abs() < 0.01);
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn soup_invariant_exactly() {
        let m = shapes::icosphere(2, 0.8).merged(&shapes::box_mesh(
            Vec3::new(0.9, -0.2, -0.2),
            Vec3::new(1.3, 0.2, 0.2),
            2,
        ));
        let a = sample_udf_grid(&m, [12, 10, 11], 0.1).unwrap();
        let s = make_soup(&m, 0.0, 0.5, 42).unwrap();
        let b = sample_udf_grid(&s, [12, 10, 11], 0.1).unwrap();
        assert_eq!(a, b);
        let flipped = sample_udf_grid(&m.flipped(), [12, 10, 11], 0.1).unwrap();
        assert_eq!(a, flipped);
    }

    #[test]
    fn matches_brute_grid() {
        let m = shapes::icosphere(2, 0.5);
        let a = sample_udf_grid(&m, [8, 8, 8], 0.2).unwrap();
        let b = sample_udf_grid_brute(&m, [8, 8, 8], 0.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn band_is_exact_near_the_surface() {
        let m = shapes::torus(0.3, 0.1, 24, 12);
        let full = sample_udf_grid(&m, [23, 21, 14], 0.1).unwrap();
        let band = sample_udf_band(&m, [23, 21, 14], 0.1, 0.05).unwrap();
        assert_eq!(full.origin, band.origin);
        let mut skipped = 0;
        for (a, b) in full.values.iter().zip(&band.values) {
            if *a <= 0.05 {
                assert_eq!(a, b);
            } else {
                assert!(*b > 0.05 && b <= a);
                skipped += usize::from(a != b);
            }
        }
        assert!(skipped > 0);
    }

    #[test]
    fn bad_dims() {
        let m = shapes::icosphere(0, 1.0);
        assert!(matches!(
            sample_udf_grid(&m, [1, 4, 4], 0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn sgf1_round_trip_and_layout() {
        let g = ScalarGrid::from_fn(Vec3::new(0.5, -1.0, 2.0), 0.25, [2, 3, 4], |p| p.x + 10.0 * p.z)
            .unwrap();
        let bytes = g.to_bytes();
        assert_eq!(&bytes[..4], b"SGF1");
        assert_eq!(bytes.len(), 4 + 12 + 32 + 8 * 24);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        // z fastest: second value is node (0,0,1)
        let v1 = f64::from_le_bytes(bytes[48 + 8..48 + 16].try_into().unwrap());
        assert_eq!(v1, g.get(0, 0, 1));
        assert_eq!(ScalarGrid::from_bytes(&bytes).unwrap(), g);
        assert!(ScalarGrid::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn trilinear_reproduces_linear_fields() {
        let g = ScalarGrid::from_fn(Vec3::zeros(), 0.1, [5, 5, 5], |p| 2.0 * p.x - p.y + 0.5 * p.z)
            .unwrap();
        let p = Vec3::new(0.123, 0.311, 0.077);
        let v = g.sample_trilinear(&p).unwrap();
        assert!((v - (2.0 * p.x - p.y + 0.5 * p.z)).abs() < 1e-12);
        assert!(g.sample_trilinear(&Vec3::new(-0.1, 0.0, 0.0)).is_none());
    }
}
