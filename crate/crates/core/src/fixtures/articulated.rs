//! Three-bone articulated tubes, mirror-symmetric across `x = 0`, with
//! analytic skinning weights, a skeleton and a short animation clip.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::skin::{AnimationClip, BoneTransform, Joint, Skeleton, SkinWeights};
use crate::Vec3;

/// Shape of one articulated tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeParams {
    /// Arc length of each outer bone.
    pub outer_length: f64,
    /// Arc length of the middle bone.
    pub middle_length: f64,
    /// Heading change at each joint, in radians; positive bends the ends
    /// towards `-y`.
    pub bend: f64,
    pub radius: f64,
    /// Half-width, in arc length, of the weight transition at each joint.
    pub blend: f64,
    /// Rings per half of the tube, excluding the shared middle ring.
    pub half_rings: usize,
    pub around: usize,
}

impl Default for TubeParams {
    fn default() -> Self {
        Self {
            outer_length: 0.28,
            middle_length: 0.3,
            bend: 0.4,
            radius: 0.07,
            blend: 0.06,
            half_rings: 24,
            around: 16,
        }
    }
}

impl TubeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.outer_length, self.middle_length, self.radius, self.blend];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) || !self.bend.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid tube parameters {self:?}")));
        }
        if self.blend >= 0.5 * self.middle_length.min(self.outer_length) {
            return Err(Error::InvalidArgument(format!(
                "blend {} must stay below half of the shortest bone",
                self.blend
            )));
        }
        if self.half_rings < 4 || self.around < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 4 half rings and 3 samples around, got {} and {}",
                self.half_rings, self.around
            )));
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        2.0 * self.outer_length + self.middle_length
    }

    /// Arc-length positions of the two inner joints.
    pub fn joint_arcs(&self) -> [f64; 2] {
        [self.outer_length, self.outer_length + self.middle_length]
    }

    /// Draws parameters from fixed ranges.
    pub fn random(rng: &mut impl Rng) -> Self {
        let radius = rng.random_range(0.05..0.075);
        Self {
            outer_length: rng.random_range(0.24..0.32),
            middle_length: rng.random_range(0.24..0.34),
            bend: rng.random_range(-0.2..0.9),
            radius,
            blend: rng.random_range(0.8..1.2) * radius,
            ..Self::default()
        }
    }
}

/// One articulated tube with its rig.
#[derive(Debug, Clone)]
pub struct ArticulatedTube {
    pub params: TubeParams,
    pub mesh: TriangleMesh,
    /// Bones ordered left, middle, right.
    pub skeleton: Skeleton,
    pub weights: SkinWeights,
    pub clip: AnimationClip,
}

fn smoothstep(u: f64) -> f64 {
    let t = ((u + 1.0) * 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Analytic weights at arc length `s`: left, middle and right bone blended by
/// smoothsteps of half-width `blend` centred on the joints.
pub fn tube_weights_at(params: &TubeParams, s: f64) -> [f64; 3] {
    let [s1, s2] = params.joint_arcs();
    let a1 = smoothstep((s - s1) / params.blend);
    let a2 = smoothstep((s - s2) / params.blend);
    [1.0 - a1, a1 - a2, a2]
}

/// Centre line of the right half: arc lengths, points and unit tangents,
/// starting at the middle of the tube (`x = 0`).
fn right_half(params: &TubeParams) -> (Vec<f64>, Vec<Vec3>, Vec<Vec3>) {
    let half = 0.5 * params.total_length();
    let s2 = params.joint_arcs()[1];
    let heading = |s: f64| -params.bend * smoothstep((s - s2) / params.blend);
    const SUBSTEPS: usize = 16;
    let n = params.half_rings;
    let ds = half / n as f64;
    let mut arcs = vec![half];
    let mut points = vec![Vec3::zeros()];
    let mut tangents = vec![Vec3::x()];
    let mut p = Vec3::zeros();
    for k in 0..n {
        let s0 = half + k as f64 * ds;
        for j in 0..SUBSTEPS {
            let h = heading(s0 + (j as f64 + 0.5) * ds / SUBSTEPS as f64);
            p += Vec3::new(h.cos(), h.sin(), 0.0) * (ds / SUBSTEPS as f64);
        }
        let s = half + (k + 1) as f64 * ds;
        let h = heading(s);
        arcs.push(s);
        points.push(p);
        tangents.push(Vec3::new(h.cos(), h.sin(), 0.0));
    }
    (arcs, points, tangents)
}

/// Centre-line point at arc distance `d` to the right of the middle.
fn centre_from_middle(params: &TubeParams, d: f64) -> Vec3 {
    const STEPS: usize = 4096;
    let half = 0.5 * params.total_length();
    let s2 = params.joint_arcs()[1];
    let h = d / STEPS as f64;
    (0..STEPS).fold(Vec3::zeros(), |p, j| {
        let a = -params.bend * smoothstep((half + (j as f64 + 0.5) * h - s2) / params.blend);
        p + Vec3::new(a.cos(), a.sin(), 0.0) * h
    })
}

fn mirror(p: &Vec3) -> Vec3 {
    Vec3::new(-p.x, p.y, p.z)
}

/// Builds the tube, its skeleton, analytic weights and a four-frame clip
/// that swings both outer bones symmetrically about their joints.
pub fn articulated_tube(params: &TubeParams) -> Result<ArticulatedTube> {
    params.validate()?;
    let (arcs_r, points_r, tangents_r) = right_half(params);
    let n = params.half_rings;
    let total = params.total_length();
    // Full centre line from the left end to the right end; the left half is
    // the exact mirror image of the right half.
    let mut arcs = Vec::with_capacity(2 * n + 1);
    let mut centers = Vec::with_capacity(2 * n + 1);
    for k in (1..=n).rev() {
        arcs.push(total - arcs_r[k]);
        centers.push(mirror(&points_r[k]));
    }
    arcs.extend_from_slice(&arcs_r);
    centers.extend_from_slice(&points_r);

    let lift = {
        let (lo, hi) = centers
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.y), hi.max(c.y)));
        -0.5 * (lo + hi)
    };
    let around = params.around;
    let rings = centers.len();
    let mut positions = vec![Vec3::zeros(); rings * around];
    let mut arc_of_vertex = vec![0.0; rings * around];
    let ring_vertex = |c: &Vec3, t: &Vec3, k: usize| {
        let b = t.cross(&Vec3::z());
        let ang = 2.0 * std::f64::consts::PI * k as f64 / around as f64;
        c + (Vec3::z() * ang.cos() + b * ang.sin()) * params.radius + Vec3::new(0.0, lift, 0.0)
    };
    for r in n..rings {
        for k in 0..around {
            let p = ring_vertex(&centers[r], &tangents_r[r - n], k);
            positions[r * around + k] = p;
            arc_of_vertex[r * around + k] = arcs[r];
            if r > n {
                let m = 2 * n - r;
                positions[m * around + k] = mirror(&p);
                arc_of_vertex[m * around + k] = arcs[m];
            }
        }
    }
    let start = positions.len();
    positions.push(centers[0] + Vec3::new(0.0, lift, 0.0));
    arc_of_vertex.push(0.0);
    positions.push(mirror(&positions[start]));
    arc_of_vertex.push(total);
    let end = start + 1;

    let ring = |i: usize, k: usize| i * around + (k % around);
    let mut faces = Vec::with_capacity(2 * rings * around);
    debug_assert_eq!(arcs.len(), rings);
    for i in 0..rings - 1 {
        for k in 0..around {
            let (a, b, c, d) = (ring(i, k), ring(i, k + 1), ring(i + 1, k + 1), ring(i + 1, k));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for k in 0..around {
        faces.push([start, ring(0, k + 1), ring(0, k)]);
        faces.push([end, ring(rings - 1, k), ring(rings - 1, k + 1)]);
    }
    let mut mesh = TriangleMesh::new(positions, faces)?;
    if mesh.signed_volume() < 0.0 {
        mesh = mesh.flipped();
    }

    let w = DMatrix::from_fn(arc_of_vertex.len(), 3, |i, b| tube_weights_at(params, arc_of_vertex[i])[b]);
    let weights = SkinWeights::new(w)?;

    let at_arc = |s: f64| -> Vec3 {
        let half = 0.5 * total;
        let p = centre_from_middle(params, (s - half).abs());
        let p = if s < half { mirror(&p) } else { p };
        p + Vec3::new(0.0, lift, 0.0)
    };
    let [s1, s2] = params.joint_arcs();
    let joint = |name: &str, p: Vec3, parent: Option<usize>| Joint {
        name: name.into(),
        position: [p.x, p.y, p.z],
        parent,
    };
    let j1 = at_arc(s1);
    let j2 = at_arc(s2);
    let skeleton = Skeleton::new(
        vec![
            joint("left_end", at_arc(0.0), Some(1)),
            joint("left_joint", j1, None),
            joint("right_joint", j2, Some(1)),
            joint("right_end", at_arc(total), Some(2)),
        ],
        vec![[1, 0], [1, 2], [2, 3]],
    )?;

    let frames = [0.0, 0.35, 0.7, -0.4]
        .iter()
        .map(|&a| {
            vec![
                BoneTransform::about_pivot(&Vec3::z(), -a, &j1),
                BoneTransform::identity(),
                BoneTransform::about_pivot(&Vec3::z(), a, &j2),
            ]
        })
        .collect();
    let clip = AnimationClip::new(frames)?;
    Ok(ArticulatedTube {
        params: *params,
        mesh,
        skeleton,
        weights,
        clip,
    })
}

/// `count` tubes with parameters drawn from a generator seeded by `seed`.
pub fn articulated_corpus(count: usize, seed: u64) -> Result<Vec<ArticulatedTube>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| articulated_tube(&TubeParams::random(&mut rng)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::topology_report;
    use crate::skin::detect_symmetric_vertices;

    #[test]
    fn tube_is_closed_symmetric_and_in_the_unit_box() {
        let t = articulated_tube(&TubeParams::default()).unwrap();
        assert!(topology_report(&t.mesh).is_valid_cage());
        assert!(t.mesh.signed_volume() > 0.0);
        let (lo, hi) = t.mesh.bounds().unwrap();
        assert!(lo.iter().all(|&x| x > -0.5) && hi.iter().all(|&x| x < 0.5), "{lo} {hi}");
        let sym = detect_symmetric_vertices(&t.mesh, 1e-9);
        assert_eq!(sym.symmetric_count(), t.mesh.vertex_count());
    }

    #[test]
    fn weights_are_row_stochastic_and_mirrored() {
        let t = articulated_tube(&TubeParams::default()).unwrap();
        let w = t.weights.matrix();
        let sym = detect_symmetric_vertices(&t.mesh, 1e-9);
        for i in 0..w.nrows() {
            assert!((w.row(i).sum() - 1.0).abs() < 1e-12);
            assert!(w.row(i).iter().all(|&x| x >= 0.0));
            let j = sym.matches[i].unwrap();
            assert!((w[(i, 0)] - w[(j, 2)]).abs() < 1e-12);
            assert!((w[(i, 1)] - w[(j, 1)]).abs() < 1e-12);
        }
        let one_hot = (0..w.nrows()).filter(|&i| w.row(i).max() == 1.0).count();
        assert!(one_hot > w.nrows() / 2);
        assert!(one_hot < w.nrows());
    }

    #[test]
    fn skeleton_follows_the_centre_line() {
        let p = TubeParams::default();
        let t = articulated_tube(&p).unwrap();
        let (a, b) = t.skeleton.bone_segment(1);
        assert!((a.x + b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
        assert!(((b - a).norm() - p.middle_length).abs() < 0.05);
        assert_eq!(t.clip.frames.len(), 4);
        assert_eq!(t.skeleton.bone_count(), 3);
    }

    #[test]
    fn corpus_is_seeded() {
        let a = articulated_corpus(3, 5).unwrap();
        let b = articulated_corpus(3, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mesh.digest(), y.mesh.digest());
            assert_eq!(x.params, y.params);
        }
        assert_ne!(a[0].params, a[1].params);
    }
}
