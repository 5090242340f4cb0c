//! Deterministic corpus of wild meshes in the unit box, one or more per
//! wildness class, each with per-vertex part labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::articulated::{articulated_tube, TubeParams};
use crate::fixtures::shapes::{box_mesh, icosphere, torus, translated, tube};
use crate::mesh::{make_soup, topology_report, TriangleMesh};
use crate::spatial::interior_components;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WildClass {
    CleanManifold,
    MultiComponent,
    NonManifoldEdge,
    Soup,
    InteriorStructure,
}

impl WildClass {
    pub const ALL: [WildClass; 5] = [
        WildClass::CleanManifold,
        WildClass::MultiComponent,
        WildClass::NonManifoldEdge,
        WildClass::Soup,
        WildClass::InteriorStructure,
    ];
}

/// One corpus mesh with per-vertex part labels in `0..classes`.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: String,
    pub class: WildClass,
    pub mesh: TriangleMesh,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl CorpusEntry {
    fn new(name: &str, class: WildClass, mesh: TriangleMesh, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != mesh.vertex_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} vertices in {name}",
                labels.len(),
                mesh.vertex_count()
            )));
        }
        let classes = labels.iter().copied().max().map_or(1, |m| m + 1);
        Ok(Self {
            name: name.into(),
            class,
            mesh,
            labels,
            classes,
        })
    }

    /// Per-face labels by majority vote of the corner labels (lowest label on
    /// a three-way tie).
    pub fn face_labels(&self) -> Vec<usize> {
        face_labels_from_vertices(&self.mesh, &self.labels)
    }
}

pub fn face_labels_from_vertices(mesh: &TriangleMesh, labels: &[usize]) -> Vec<usize> {
    mesh.faces
        .iter()
        .map(|&[a, b, c]| {
            let (la, lb, lc) = (labels[a], labels[b], labels[c]);
            if lb == lc {
                lb
            } else if la == lb || la == lc {
                la
            } else {
                la.min(lb).min(lc)
            }
        })
        .collect()
}

fn argmax(row: &[f64]) -> usize {
    (1..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
}

/// Labels every vertex with the index of the part it came from.
fn merge_parts(parts: &[(&TriangleMesh, usize)]) -> (TriangleMesh, Vec<usize>) {
    let mut mesh = TriangleMesh {
        positions: Vec::new(),
        faces: Vec::new(),
    };
    let mut labels = Vec::new();
    for (part, label) in parts {
        mesh = mesh.merged(part);
        labels.extend(std::iter::repeat_n(*label, part.vertex_count()));
    }
    (mesh, labels)
}

/// Two spheres of radius 0.225 on the `x` axis whose surfaces are `gap`
/// apart.
pub fn two_spheres(gap: f64) -> (TriangleMesh, Vec<usize>) {
    let r = 0.225;
    let c = r + 0.5 * gap;
    let left = translated(&icosphere(3, r), Vec3::new(-c, 0.0, 0.0));
    let right = translated(&icosphere(3, r), Vec3::new(c, 0.0, 0.0));
    merge_parts(&[(&left, 0), (&right, 1)])
}

/// Centre line of the U-shaped body of [`interior_organ`].
fn u_path() -> Vec<Vec3> {
    let mut path = Vec::new();
    for i in 0..=20 {
        path.push(Vec3::new(-0.3, 0.4 - 0.6 * i as f64 / 20.0, 0.0));
    }
    for i in 1..=12 {
        let a = std::f64::consts::PI * i as f64 / 12.0;
        path.push(Vec3::new(-0.3 * a.cos(), -0.2 - 0.3 * a.sin(), 0.0));
    }
    for i in 1..=20 {
        path.push(Vec3::new(0.3, -0.2 + 0.6 * i as f64 / 20.0, 0.0));
    }
    path
}

/// A U-shaped tube body (label 0) with a small closed organ (label 1)
/// floating inside one arm, scaled into the unit box.
pub fn interior_organ() -> (TriangleMesh, Vec<usize>) {
    let path = u_path();
    let body = tube(&path, &vec![0.15; path.len()], 32);
    let organ = translated(&icosphere(2, 0.06), Vec3::new(-0.3, 0.25, 0.0));
    let (mesh, labels) = merge_parts(&[(&body, 0), (&organ, 1)]);
    (fit_unit_box(&mesh), labels)
}

/// Uniform scale about the bounding-box centre so that the largest extent
/// is 0.96, leaving a margin inside the unit box.
fn fit_unit_box(mesh: &TriangleMesh) -> TriangleMesh {
    let (lo, hi) = mesh.bounds().expect("fixture meshes are not empty");
    let c = (lo + hi) * 0.5;
    let s = 0.96 / (hi - lo).max();
    mesh.mapped(|p| (p - c) * s)
}

/// Torso, head, two arms and two eyes as separate intersecting closed parts.
pub fn character() -> (TriangleMesh, Vec<usize>) {
    let torso = box_mesh(Vec3::new(-0.15, -0.35, -0.1), Vec3::new(0.15, 0.1, 0.1), 4);
    let head = translated(&icosphere(3, 0.13), Vec3::new(0.0, 0.2, 0.0));
    let arm = |side: f64| {
        tube(
            &[
                Vec3::new(0.1 * side, 0.02, 0.0),
                Vec3::new(0.28 * side, -0.05, 0.0),
                Vec3::new(0.42 * side, -0.2, 0.0),
            ],
            &[0.05, 0.045, 0.04],
            12,
        )
    };
    let eye = |side: f64| translated(&icosphere(1, 0.03), Vec3::new(0.05 * side, 0.24, 0.11));
    let (l_arm, r_arm, l_eye, r_eye) = (arm(-1.0), arm(1.0), eye(-1.0), eye(1.0));
    merge_parts(&[
        (&torso, 0),
        (&head, 1),
        (&l_arm, 2),
        (&r_arm, 2),
        (&l_eye, 3),
        (&r_eye, 3),
    ])
}

/// A closed box with a flat fin glued along one of its edges, so that every
/// edge segment along the seam is shared by three faces.
pub fn finned_box() -> (TriangleMesh, Vec<usize>) {
    let n = 4;
    let (lo, hi) = (Vec3::new(-0.3, -0.2, -0.2), Vec3::new(0.3, 0.2, 0.2));
    let bx = box_mesh(lo, hi, n);
    let mut seam: Vec<usize> = (0..bx.vertex_count())
        .filter(|&i| {
            let p = bx.positions[i];
            p.y == hi.y && p.z == hi.z
        })
        .collect();
    seam.sort_by(|&a, &b| bx.positions[a].x.total_cmp(&bx.positions[b].x));
    let mut positions = bx.positions.clone();
    let mut faces = bx.faces.clone();
    let mut labels = vec![0; positions.len()];
    let tip: Vec<usize> = seam
        .iter()
        .map(|&i| {
            positions.push(bx.positions[i] + Vec3::new(0.0, 0.2, 0.2));
            labels.push(1);
            positions.len() - 1
        })
        .collect();
    for k in 0..seam.len() - 1 {
        faces.push([seam[k], seam[k + 1], tip[k + 1]]);
        faces.push([seam[k], tip[k + 1], tip[k]]);
    }
    (TriangleMesh { positions, faces }, labels)
}

/// Three open rectangular sheets sharing a spine along the `y` axis.
pub fn book() -> (TriangleMesh, Vec<usize>) {
    let rows = 8;
    let cols = 6;
    let mut positions: Vec<Vec3> = (0..=rows)
        .map(|i| Vec3::new(0.0, -0.35 + 0.7 * i as f64 / rows as f64, 0.0))
        .collect();
    let mut labels = vec![0; positions.len()];
    let mut faces = Vec::new();
    for (page, angle) in [0.0f64, 2.0, 4.0].iter().enumerate() {
        let dir = Vec3::new(angle.cos(), 0.0, angle.sin());
        let base = positions.len();
        for j in 1..=cols {
            for i in 0..=rows {
                positions.push(positions[i] + dir * (0.4 * j as f64 / cols as f64));
                labels.push(page);
            }
        }
        let id = |i: usize, j: usize| if j == 0 { i } else { base + (j - 1) * (rows + 1) + i };
        for j in 0..cols {
            for i in 0..rows {
                faces.push([id(i, j), id(i, j + 1), id(i + 1, j + 1)]);
                faces.push([id(i, j), id(i + 1, j + 1), id(i + 1, j)]);
            }
        }
    }
    (TriangleMesh { positions, faces }, labels)
}

/// A shell sphere containing a torus and a small sphere.
pub fn nested_shells() -> (TriangleMesh, Vec<usize>) {
    let shell = icosphere(3, 0.45);
    let ring = torus(0.2, 0.05, 32, 12);
    let core = icosphere(2, 0.08);
    merge_parts(&[(&shell, 0), (&ring, 1), (&core, 2)])
}

/// The wild corpus: eleven meshes covering every [`WildClass`]. The soups
/// are drawn from `seed`.
pub fn wild_corpus(seed: u64) -> Result<Vec<CorpusEntry>> {
    use WildClass::*;
    let mut out = Vec::new();
    let sphere = icosphere(3, 0.4);
    let sphere_labels: Vec<usize> = sphere.positions.iter().map(|p| usize::from(p.z > 0.0)).collect();
    out.push(CorpusEntry::new("sphere", CleanManifold, sphere.clone(), sphere_labels.clone())?);
    let ring = torus(0.3, 0.12, 48, 24);
    let ring_labels = ring.positions.iter().map(|p| usize::from(p.x > 0.0)).collect();
    out.push(CorpusEntry::new("torus", CleanManifold, ring, ring_labels)?);
    let limb = articulated_tube(&TubeParams::default())?;
    let limb_labels = limb.weights.rows().iter().map(|r| argmax(r)).collect();
    out.push(CorpusEntry::new("limb", CleanManifold, limb.mesh, limb_labels)?);
    let (m, l) = two_spheres(0.1);
    out.push(CorpusEntry::new("two_spheres", MultiComponent, m, l)?);
    let (figure, figure_labels) = character();
    out.push(CorpusEntry::new("character", MultiComponent, figure.clone(), figure_labels.clone())?);
    let (m, l) = finned_box();
    out.push(CorpusEntry::new("finned_box", NonManifoldEdge, m, l)?);
    let (m, l) = book();
    out.push(CorpusEntry::new("book", NonManifoldEdge, m, l)?);
    let (m, l) = interior_organ();
    out.push(CorpusEntry::new("organ", InteriorStructure, m, l)?);
    let (m, l) = nested_shells();
    out.push(CorpusEntry::new("nested_shells", InteriorStructure, m, l)?);
    for (name, mesh, labels, s) in [
        ("sphere_soup", &sphere, &sphere_labels, seed),
        ("character_soup", &figure, &figure_labels, seed.wrapping_add(1)),
    ] {
        let soup = make_soup(mesh, 0.0, 0.5, s)?;
        let soup_labels = mesh.faces.iter().flat_map(|f| f.map(|v| labels[v])).collect();
        out.push(CorpusEntry::new(name, Soup, soup, soup_labels)?);
    }
    Ok(out)
}

/// Whether some connected component lies inside another closed one.
pub fn has_interior_component(mesh: &TriangleMesh) -> bool {
    interior_components(mesh).into_iter().any(|x| x)
}

/// The wildness classes a mesh exhibits according to its topology.
pub fn observed_classes(mesh: &TriangleMesh) -> Vec<WildClass> {
    let r = topology_report(mesh);
    let mut out = Vec::new();
    if r.is_valid_cage() {
        out.push(WildClass::CleanManifold);
    }
    if r.component_count > 1 {
        out.push(WildClass::MultiComponent);
    }
    if r.nonmanifold_edge_count > 0 {
        out.push(WildClass::NonManifoldEdge);
    }
    if r.duplicate_vertex_count > 0 {
        out.push(WildClass::Soup);
    }
    if r.component_count > 1 && r.duplicate_vertex_count == 0 && has_interior_component(mesh) {
        out.push(WildClass::InteriorStructure);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_shows_its_class() {
        let corpus = wild_corpus(3).unwrap();
        assert!(corpus.len() >= 10);
        for e in &corpus {
            let seen = observed_classes(&e.mesh);
            assert!(seen.contains(&e.class), "{}: {seen:?}", e.name);
            let (lo, hi) = e.mesh.bounds().unwrap();
            assert!(lo.min() >= -0.5 && hi.max() <= 0.5, "{} leaves the unit box", e.name);
            assert!(e.labels.iter().all(|&l| l < e.classes));
        }
        for class in WildClass::ALL {
            assert!(corpus.iter().any(|e| e.class == class));
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = wild_corpus(9).unwrap();
        let b = wild_corpus(9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mesh.digest(), y.mesh.digest());
            assert_eq!(x.labels, y.labels);
        }
        let c = wild_corpus(10).unwrap();
        let soup = |v: &[CorpusEntry]| v.iter().find(|e| e.name == "sphere_soup").unwrap().mesh.digest();
        assert_ne!(soup(&a), soup(&c));
    }

    #[test]
    fn fixture_geometry() {
        let (m, _) = two_spheres(0.1);
        let gap = m.positions.iter().filter(|p| p.x < 0.0).map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        assert!((gap + 0.05).abs() < 1e-12);
        let (m, l) = interior_organ();
        assert!(has_interior_component(&m));
        assert_eq!(l.iter().filter(|&&x| x == 1).count(), 162);
        let (m, _) = finned_box();
        assert_eq!(topology_report(&m).nonmanifold_edge_count, 4);
        let (m, l) = book();
        assert_eq!(topology_report(&m).nonmanifold_edge_count, 8);
        assert_eq!(face_labels_from_vertices(&m, &l).iter().filter(|&&x| x == 2).count(), 88);
    }
}
