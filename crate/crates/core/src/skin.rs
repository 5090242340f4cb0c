//! Skeletons, linear blend skinning, weight post-processing and the skinning
//! evaluation metrics.

use std::path::Path;

use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::Vec3;

/// Default threshold above which a bone counts as influential at a vertex.
pub const INFLUENCE_THRESHOLD: f64 = 1e-4;
/// Row-sum tolerance of [`SkinWeights`].
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Orthonormality tolerance of rotation blocks in an [`AnimationClip`].
pub const ROTATION_TOL: f64 = 1e-8;

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub position: [f64; 3],
    pub parent: Option<usize>,
}

/// Joints with rest positions and a parent hierarchy, plus the ordered bone
/// list whose order indexes the columns of [`SkinWeights`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joints: Vec<Joint>,
    pub bones: Vec<[usize; 2]>,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>, bones: Vec<[usize; 2]>) -> Result<Self> {
        let s = Self { joints, bones };
        s.validate()?;
        Ok(s)
    }

    pub fn bone_count(&self) -> usize {
        self.bones.len()
    }

    /// Rest-pose endpoints of bone `b`.
    pub fn bone_segment(&self, b: usize) -> (Vec3, Vec3) {
        let [a, c] = self.bones[b];
        (
            Vec3::from(self.joints[a].position),
            Vec3::from(self.joints[c].position),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints.len();
        if n == 0 || self.bones.is_empty() {
            return Err(Error::InvalidArgument(
                "a skeleton needs at least one joint and one bone".into(),
            ));
        }
        for (j, joint) in self.joints.iter().enumerate() {
            if joint.position.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("joint {j} has a non-finite position")));
            }
            if let Some(p) = joint.parent {
                if p >= n || p == j {
                    return Err(Error::InvalidArgument(format!("joint {j} has invalid parent {p}")));
                }
            }
        }
        let roots = self.joints.iter().filter(|j| j.parent.is_none()).count();
        if roots != 1 {
            return Err(Error::InvalidArgument(format!(
                "skeleton hierarchy has {roots} roots, expected exactly one"
            )));
        }
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(p) = self.joints[cur].parent {
                cur = p;
                steps += 1;
                if steps > n {
                    return Err(Error::InvalidArgument(format!(
                        "skeleton hierarchy has a cycle through joint {start}"
                    )));
                }
            }
        }
        for (b, &[a, c]) in self.bones.iter().enumerate() {
            if a >= n || c >= n || a == c {
                return Err(Error::InvalidArgument(format!(
                    "bone {b} references joints ({a}, {c}) of {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s: Self = read_json(path.as_ref())?;
        s.validate()?;
        Ok(s)
    }
}

/// Row-stochastic `n x k` matrix of per-vertex, per-bone weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinWeights {
    weights: DMatrix<f64>,
}

impl SkinWeights {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.ncols() == 0 {
            return Err(Error::InvalidArgument("skin weights need at least one bone".into()));
        }
        for (i, row) in weights.row_iter().enumerate() {
            if row.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "skin weight row {i} has a negative or non-finite entry"
                )));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "skin weight row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { weights })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("skin weight rows have different lengths".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.weights
    }

    pub fn vertex_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn bone_count(&self) -> usize {
        self.weights.ncols()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.rows()).expect("finite weights serialize")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
        Self::from_rows(&rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = read_json(path.as_ref())?;
        Self::from_rows(&rows)
    }

    fn check_same_shape(&self, other: &SkinWeights) -> Result<()> {
        if self.weights.shape() != other.weights.shape() {
            return Err(Error::DimensionMismatch(format!(
                "weights are {:?} and {:?}",
                self.weights.shape(),
                other.weights.shape()
            )));
        }
        Ok(())
    }
}

/// World-space rigid transform of one bone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoneTransform {
    /// Row-major 3x3 rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl BoneTransform {
    pub fn identity() -> Self {
        Self::from_parts(&Matrix3::identity(), &Vec3::zeros())
    }

    pub fn from_parts(rotation: &Matrix3<f64>, translation: &Vec3) -> Self {
        let mut r = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                r[3 * i + j] = rotation[(i, j)];
            }
        }
        Self {
            rotation: r,
            translation: [translation.x, translation.y, translation.z],
        }
    }

    /// Rotation by `angle` about the axis through `pivot` along `axis`.
    pub fn about_pivot(axis: &Vec3, angle: f64, pivot: &Vec3) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        let r = *rot.matrix();
        Self::from_parts(&r, &(pivot - r * pivot))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.rotation)
    }

    pub fn translation_vector(&self) -> Vec3 {
        Vec3::from(self.translation)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation_matrix() * p + self.translation_vector()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &BoneTransform) -> BoneTransform {
        let r = self.rotation_matrix() * other.rotation_matrix();
        let t = self.rotation_matrix() * other.translation_vector() + self.translation_vector();
        Self::from_parts(&r, &t)
    }

    fn orthonormality_error(&self) -> f64 {
        let r = self.rotation_matrix();
        (r.transpose() * r - Matrix3::identity()).abs().max()
    }
}

/// Sequence of frames, each holding one transform per bone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationClip {
    pub frames: Vec<Vec<BoneTransform>>,
}

impl AnimationClip {
    pub fn new(frames: Vec<Vec<BoneTransform>>) -> Result<Self> {
        let c = Self { frames };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.frames.first().map_or(0, Vec::len);
        for (f, frame) in self.frames.iter().enumerate() {
            if frame.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "frame {f} has {} transforms, frame 0 has {k}",
                    frame.len()
                )));
            }
            for (b, t) in frame.iter().enumerate() {
                let err = t.orthonormality_error();
                if !(err <= ROTATION_TOL) || t.translation.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "frame {f}, bone {b}: rotation is not orthonormal (error {err:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Self = read_json(path.as_ref())?;
        c.validate()?;
        Ok(c)
    }
}

/// `v'_i = Σ_b w_ib (R_b v_i + t_b)`, evaluated as `v_i` plus the blended
/// bone displacements so that identity bones return `v_i` exactly.
pub fn lbs_deform(
    mesh: &TriangleMesh,
    weights: &SkinWeights,
    frame: &[BoneTransform],
) -> Result<TriangleMesh> {
    if weights.vertex_count() != mesh.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} weight rows for {} vertices",
            weights.vertex_count(),
            mesh.vertex_count()
        )));
    }
    if frame.len() != weights.bone_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} transforms for {} bones",
            frame.len(),
            weights.bone_count()
        )));
    }
    let parts: Vec<(Matrix3<f64>, Vec3)> = frame
        .iter()
        .map(|t| (t.rotation_matrix(), t.translation_vector()))
        .collect();
    let w = weights.matrix();
    let positions = mesh
        .positions
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut shift = Vec3::zeros();
            for (b, (r, t)) in parts.iter().enumerate() {
                let wb = w[(i, b)];
                if wb != 0.0 {
                    shift += wb * (r * v + t - v);
                }
            }
            v + shift
        })
        .collect();
    Ok(TriangleMesh {
        positions,
        faces: mesh.faces.clone(),
    })
}

/// Zeroes entries below `threshold` and renormalizes each row. A row that
/// would vanish keeps its largest entry (lowest index on ties) set to 1.
pub fn sparsify_weights(weights: &SkinWeights, threshold: f64) -> Result<SkinWeights> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "sparsify threshold {threshold} outside [0, 1)"
        )));
    }
    let mut out = weights.matrix().clone();
    for mut row in out.row_iter_mut() {
        let mut argmax = 0;
        for j in 1..row.len() {
            if row[j] > row[argmax] {
                argmax = j;
            }
        }
        for x in row.iter_mut() {
            if *x < threshold {
                *x = 0.0;
            }
        }
        let sum = row.sum();
        if sum > 0.0 {
            row /= sum;
        } else {
            row.fill(0.0);
            row[argmax] = 1.0;
        }
    }
    Ok(SkinWeights { weights: out })
}

/// Mean over vertices of the L1 distance between weight rows.
pub fn metric_avg_l1(pred: &SkinWeights, gt: &SkinWeights) -> Result<f64> {
    pred.check_same_shape(gt)?;
    let n = pred.vertex_count();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = (pred.matrix() - gt.matrix())
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .sum();
    Ok(total / n as f64)
}

/// Precision, recall and F1 of influential bone sets, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Influential-bone precision, recall and F1, computed per vertex and then
/// averaged over vertices.
pub fn metric_prf1(pred: &SkinWeights, gt: &SkinWeights, influence_threshold: f64) -> Result<Prf1> {
    pred.check_same_shape(gt)?;
    let n = pred.vertex_count();
    if n == 0 {
        return Ok(Prf1 {
            precision: 100.0,
            recall: 100.0,
            f1: 100.0,
        });
    }
    let (p, g) = (pred.matrix(), gt.matrix());
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (mut np, mut ng, mut both) = (0usize, 0usize, 0usize);
        for b in 0..pred.bone_count() {
            let a = p[(i, b)] > influence_threshold;
            let c = g[(i, b)] > influence_threshold;
            np += a as usize;
            ng += c as usize;
            both += (a && c) as usize;
        }
        let ratio = |num: usize, den: usize, other: usize| {
            if den > 0 {
                num as f64 / den as f64
            } else if other == 0 {
                1.0
            } else {
                0.0
            }
        };
        let precision = ratio(both, np, ng);
        let recall = ratio(both, ng, np);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        sp += precision;
        sr += recall;
        sf += f1;
    }
    let scale = 100.0 / n as f64;
    Ok(Prf1 {
        precision: sp * scale,
        recall: sr * scale,
        f1: sf * scale,
    })
}

/// Mean and max of per-vertex displacement between predicted and ground
/// truth deformations over every frame, relative to the rest bbox diagonal.
pub fn metric_vertex_distance(
    mesh: &TriangleMesh,
    pred: &SkinWeights,
    gt: &SkinWeights,
    clip: &AnimationClip,
) -> Result<(f64, f64)> {
    pred.check_same_shape(gt)?;
    if clip.frames.is_empty() {
        return Err(Error::InvalidArgument("animation clip has no frames".into()));
    }
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let diag = mesh.bbox_diagonal();
    if !(diag > 0.0) {
        return Err(Error::InvalidArgument("rest pose has a zero bounding box".into()));
    }
    let per_frame: Vec<(f64, f64)> = clip
        .frames
        .par_iter()
        .map(|frame| {
            let a = lbs_deform(mesh, pred, frame)?;
            let b = lbs_deform(mesh, gt, frame)?;
            let mut sum = 0.0;
            let mut max = 0.0f64;
            for (p, q) in a.positions.iter().zip(&b.positions) {
                let d = (p - q).norm() / diag;
                sum += d;
                max = max.max(d);
            }
            Ok((sum, max))
        })
        .collect::<Result<_>>()?;
    let count = (clip.frames.len() * mesh.vertex_count()) as f64;
    let sum: f64 = per_frame.iter().map(|x| x.0).sum();
    let max = per_frame.iter().map(|x| x.1).fold(0.0, f64::max);
    Ok((sum / count, max))
}

/// Vertices with a mirror partner across the `x = 0` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryMap {
    /// `matches[i]` is the nearest vertex to the mirror image of `i`, when one
    /// lies within tolerance. Vertex `i` is in the symmetric set iff it is
    /// `Some`.
    pub matches: Vec<Option<usize>>,
}

impl SymmetryMap {
    pub fn contains(&self, i: usize) -> bool {
        self.matches[i].is_some()
    }

    pub fn symmetric_count(&self) -> usize {
        self.matches.iter().filter(|m| m.is_some()).count()
    }
}

/// Finds, for every vertex, the nearest vertex within `tolerance` of its
/// reflection `(-x, y, z)`. Ties go to the lowest index.
pub fn detect_symmetric_vertices(mesh: &TriangleMesh, tolerance: f64) -> SymmetryMap {
    let matches = mesh
        .positions
        .par_iter()
        .map(|p| {
            let mirror = Vec3::new(-p.x, p.y, p.z);
            let mut best: Option<(f64, usize)> = None;
            for (j, q) in mesh.positions.iter().enumerate() {
                let d = (q - mirror).norm();
                if d <= tolerance && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            best.map(|(_, j)| j)
        })
        .collect();
    SymmetryMap { matches }
}
