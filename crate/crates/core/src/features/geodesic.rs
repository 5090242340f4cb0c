use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::set::FeatureSet;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::skin::Skeleton;
use crate::spatial::{grid_frame, point_segment_distance, winding_numbers, ScalarGrid};
use crate::Vec3;

/// Default voxel resolution for volumetric geodesics.
pub const DEFAULT_GEODESIC_DIMS: [usize; 3] = [48, 48, 48];

#[derive(Clone, Copy, PartialEq)]
struct State {
    dist: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Interior voxels of a closed surface: grid nodes with winding number at
/// least one half, each standing for the cube of side `spacing` around it.
struct Voxels {
    grid: ScalarGrid,
    inside: Vec<bool>,
}

impl Voxels {
    fn new(cage: &TriangleMesh, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d < 4) {
            return Err(Error::InvalidArgument(format!(
                "geodesic grid dims {dims:?} must be at least 4 per axis"
            )));
        }
        let (lo, hi) = cage.bounds().ok_or(Error::EmptyMesh)?;
        let n = dims.iter().copied().min().unwrap_or(0) as f64;
        let padding = (hi - lo).max() / (n - 3.0);
        let (origin, spacing) = grid_frame(cage, dims, padding)?;
        let grid = ScalarGrid::new(origin, spacing, dims, vec![0.0; dims[0] * dims[1] * dims[2]])?;
        let points: Vec<Vec3> = (0..grid.len()).map(|i| grid.position(grid.unindex(i))).collect();
        let inside = winding_numbers(&points, cage).into_iter().map(|w| w >= 0.5).collect();
        Ok(Self { grid, inside })
    }

    fn node(&self, i: usize) -> Vec3 {
        self.grid.position(self.grid.unindex(i))
    }

    fn neighbors(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let [i, j, k] = self.grid.unindex(idx);
        let d = self.grid.dims;
        let h = self.grid.spacing;
        (0..27).filter_map(move |c| {
            let off = [c % 3, (c / 3) % 3, c / 9].map(|o| o as isize - 1);
            if off == [0, 0, 0] {
                return None;
            }
            let ni = i as isize + off[0];
            let nj = j as isize + off[1];
            let nk = k as isize + off[2];
            if ni < 0 || nj < 0 || nk < 0 || ni >= d[0] as isize || nj >= d[1] as isize || nk >= d[2] as isize {
                return None;
            }
            let len = h * ((off[0] * off[0] + off[1] * off[1] + off[2] * off[2]) as f64).sqrt();
            Some((self.grid.index(ni as usize, nj as usize, nk as usize), len))
        })
    }

    /// Nearest interior node to `p`, ties broken by node index.
    fn nearest_interior(&self, p: &Vec3) -> Option<(usize, f64)> {
        let d = self.grid.dims;
        let h = self.grid.spacing;
        let rel = (p - self.grid.origin) / h;
        let center = [rel.x, rel.y, rel.z]
            .map(|x| x.round())
            .iter()
            .zip(d)
            .map(|(&x, n)| x.clamp(0.0, n as f64 - 1.0) as isize)
            .collect::<Vec<_>>();
        let outside = (0..3)
            .map(|a| (rel[a] - center[a] as f64).abs() * h)
            .fold(0.0, f64::max);
        let max_r = d.iter().copied().max().unwrap_or(1) as isize;
        let mut best: Option<(f64, usize)> = None;
        for r in 0..=max_r {
            for a in -r..=r {
                for b in -r..=r {
                    for c in -r..=r {
                        if a.abs().max(b.abs()).max(c.abs()) != r {
                            continue;
                        }
                        let (i, j, k) = (center[0] + a, center[1] + b, center[2] + c);
                        if i < 0 || j < 0 || k < 0 || i >= d[0] as isize || j >= d[1] as isize || k >= d[2] as isize {
                            continue;
                        }
                        let idx = self.grid.index(i as usize, j as usize, k as usize);
                        if !self.inside[idx] {
                            continue;
                        }
                        let dist = (self.node(idx) - p).norm();
                        if best.is_none_or(|(bd, bi)| dist < bd || (dist == bd && idx < bi)) {
                            best = Some((dist, idx));
                        }
                    }
                }
            }
            if let Some((bd, _)) = best {
                if bd <= (r as f64 + 0.5) * h - outside {
                    break;
                }
            }
        }
        best.map(|(d, i)| (i, d))
    }
}

/// True when the segment `[a, b]` meets the closed axis-aligned box.
fn segment_hits_box(a: &Vec3, b: &Vec3, lo: &Vec3, hi: &Vec3) -> bool {
    let dir = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for ax in 0..3 {
        if dir[ax].abs() < 1e-300 {
            if a[ax] < lo[ax] || a[ax] > hi[ax] {
                return false;
            }
        } else {
            let inv = 1.0 / dir[ax];
            let (mut ta, mut tb) = ((lo[ax] - a[ax]) * inv, (hi[ax] - a[ax]) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

fn bone_distances(vox: &Voxels, a: &Vec3, b: &Vec3, bone: usize) -> Result<Vec<f64>> {
    let half = Vec3::repeat((0.5 + 1e-9) * vox.grid.spacing);
    let mut dist = vec![f64::INFINITY; vox.grid.len()];
    let mut heap = BinaryHeap::new();
    for idx in 0..vox.grid.len() {
        if !vox.inside[idx] {
            continue;
        }
        let c = vox.node(idx);
        if segment_hits_box(a, b, &(c - half), &(c + half)) {
            let d = point_segment_distance(&c, a, b).0;
            dist[idx] = d;
            heap.push(State { dist: d, node: idx });
        }
    }
    if heap.is_empty() {
        return Err(Error::BoneOutsideCage { bone });
    }
    while let Some(State { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for (nb, len) in vox.neighbors(node) {
            if !vox.inside[nb] {
                continue;
            }
            let nd = d + len;
            if nd < dist[nb] {
                dist[nb] = nd;
                heap.push(State { dist: nd, node: nb });
            }
        }
    }
    Ok(dist)
}

/// Shortest-path distance through the cage interior from every cage vertex
/// to every bone segment, one channel per bone.
///
/// The interior is voxelized at `dims`. Sources are interior voxels meeting
/// the bone, seeded with their exact distance to it, and paths run over the
/// 26-connected voxel graph with Euclidean edge lengths. A cage vertex takes
/// the value of its nearest interior voxel plus the distance to it.
pub fn volumetric_geodesic_to_bones(
    cage: &TriangleMesh,
    skeleton: &Skeleton,
    dims: [usize; 3],
) -> Result<FeatureSet> {
    skeleton.validate()?;
    let vox = Voxels::new(cage, dims)?;
    if !vox.inside.iter().any(|&x| x) {
        return Err(Error::EmptyInterior);
    }
    let snaps: Vec<(usize, f64)> = cage
        .positions
        .iter()
        .map(|p| vox.nearest_interior(p).ok_or(Error::EmptyInterior))
        .collect::<Result<_>>()?;
    let columns: Vec<Vec<f64>> = (0..skeleton.bone_count())
        .into_par_iter()
        .map(|bone| {
            let (a, b) = skeleton.bone_segment(bone);
            let dist = bone_distances(&vox, &a, &b, bone)?;
            Ok(snaps.iter().map(|&(node, snap)| dist[node] + snap).collect())
        })
        .collect::<Result<_>>()?;
    if let Some(bone) = columns.iter().position(|c| c.iter().any(|d| !d.is_finite())) {
        return Err(Error::BoneOutsideCage { bone });
    }
    let values = DMatrix::from_fn(cage.vertex_count(), columns.len(), |v, b| columns[b][v]);
    let labels = (0..columns.len()).map(|b| format!("geodesic_bone_{b}")).collect();
    FeatureSet::new(values, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::shapes;
    use crate::skin::Joint;

    fn skeleton(points: &[Vec3]) -> Skeleton {
        let joints = points
            .iter()
            .enumerate()
            .map(|(i, p)| Joint {
                name: format!("j{i}"),
                position: [p.x, p.y, p.z],
                parent: i.checked_sub(1),
            })
            .collect();
        let bones = (1..points.len()).map(|i| [i - 1, i]).collect();
        Skeleton::new(joints, bones).unwrap()
    }

    #[test]
    fn cylinder_distance_is_radial() {
        let radius = 0.5;
        let cyl = shapes::cylinder(radius, 4.0, 32, 16);
        let skel = skeleton(&[Vec3::new(-1.8, 0.0, 0.0), Vec3::new(1.8, 0.0, 0.0)]);
        let dims = [64, 24, 24];
        let f = volumetric_geodesic_to_bones(&cyl, &skel, dims).unwrap();
        let (lo, hi) = cyl.bounds().unwrap();
        let spacing = grid_frame(&cyl, dims, (hi - lo).max() / 21.0).unwrap().1;
        for (v, p) in cyl.positions.iter().enumerate() {
            if p.x.abs() > 1.8 || (p.y * p.y + p.z * p.z).sqrt() < radius - 1e-9 {
                continue;
            }
            let radial = (p.y * p.y + p.z * p.z).sqrt();
            assert!((f.values[(v, 0)] - radial).abs() <= 2.0 * spacing, "{}", f.values[(v, 0)]);
        }
    }

    #[test]
    fn geodesic_bounds_euclidean_and_bends_around() {
        let path = [
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, -0.5, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(2.0, 2.0, 0.0),
        ];
        let u = shapes::tube(&path, &[0.3; 5], 16);
        let skel = skeleton(&[Vec3::new(0.0, 1.9, 0.0), Vec3::new(0.0, 0.5, 0.0)]);
        let f = volumetric_geodesic_to_bones(&u, &skel, [48, 48, 24]).unwrap();
        let (a, b) = skel.bone_segment(0);
        let mut tip_checked = false;
        for (v, p) in u.positions.iter().enumerate() {
            let euclid = point_segment_distance(p, &a, &b).0;
            assert!(f.values[(v, 0)] >= euclid - 1e-12);
            if p.x > 1.6 && p.y > 1.8 {
                assert!(f.values[(v, 0)] > euclid + 1.0, "{} vs {euclid}", f.values[(v, 0)]);
                tip_checked = true;
            }
        }
        assert!(tip_checked);
    }

    #[test]
    fn vertex_next_to_bone_is_close() {
        let cube = shapes::box_mesh(Vec3::repeat(-1.0), Vec3::repeat(1.0), 4);
        let skel = skeleton(&[Vec3::new(-0.9, 0.0, 0.95), Vec3::new(0.9, 0.0, 0.95)]);
        let dims = [32, 32, 32];
        let f = volumetric_geodesic_to_bones(&cube, &skel, dims).unwrap();
        let spacing = grid_frame(&cube, dims, 2.0 / 29.0).unwrap().1;
        let v = cube
            .positions
            .iter()
            .position(|p| (p - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12)
            .unwrap();
        assert!(f.values[(v, 0)] <= 2.0 * spacing);
    }

    #[test]
    fn bone_outside_is_rejected() {
        let cube = shapes::box_mesh(Vec3::repeat(-1.0), Vec3::repeat(1.0), 2);
        let skel = skeleton(&[Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.0), Vec3::new(0.5, 5.0, 5.0)]);
        let mut far = skel.clone();
        far.joints[1].position = [3.0, 3.0, 3.0];
        assert!(matches!(
            volumetric_geodesic_to_bones(&cube, &far, [16, 16, 16]),
            Err(Error::BoneOutsideCage { bone: 1 })
        ));
    }
}
