//! Indexed triangle meshes: OBJ I/O, normalization, topology analysis and
//! soup generation.
//!
//! Nothing here assumes the mesh is manifold, closed or even connected. Wild
//! inputs (soups, non-manifold fans, interior parts) are first-class.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub positions: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, checking face indices and coordinate finiteness.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = positions.len();
        for (f, face) in faces.iter().enumerate() {
            for &i in face {
                if i >= n {
                    return Err(Error::IndexOutOfRange {
                        face: f,
                        index: i as i64,
                        count: n,
                    });
                }
            }
        }
        if let Some(i) = positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { positions, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.positions[a], self.positions[b], self.positions[c]]
    }

    /// Axis-aligned bounds `(min, max)`, `None` for an empty mesh.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.bounds().map(|(lo, hi)| (hi - lo).norm()).unwrap_or(0.0)
    }

    /// Sum of triangle areas.
    pub fn area(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// 64-bit content digest: the first eight bytes (LE) of a SHA-256 over
    /// the coordinate bits and face indices.
    pub fn digest(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.positions.len() as u64).to_le_bytes());
        for p in &self.positions {
            for c in p.iter() {
                h.update(c.to_le_bytes());
            }
        }
        h.update((self.faces.len() as u64).to_le_bytes());
        for f in &self.faces {
            for &i in f {
                h.update((i as u64).to_le_bytes());
            }
        }
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().unwrap())
    }

    /// Applies `x -> scale * x + translation` to every position.
    pub fn transformed(&self, t: &Similarity) -> TriangleMesh {
        TriangleMesh {
            positions: self.positions.iter().map(|p| t.apply(p)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Applies `f` to every position, keeping the connectivity.
    pub fn mapped(&self, f: impl Fn(&Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh {
            positions: self.positions.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Copy with every face's winding reversed.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            positions: self.positions.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [c, b, a]).collect(),
        }
    }

    /// Disjoint union; indices of `other` are shifted past `self`.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let off = self.positions.len();
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|&[a, b, c]| [a + off, b + off, c + off]));
        TriangleMesh { positions, faces }
    }

    /// Sub-mesh made of the given faces, with vertices compacted in order of
    /// first use. Returns the mesh and the old index of every new vertex.
    pub fn submesh(&self, faces: &[usize]) -> (TriangleMesh, Vec<usize>) {
        let mut remap = vec![usize::MAX; self.positions.len()];
        let mut old = Vec::new();
        let mut out_faces = Vec::with_capacity(faces.len());
        for &f in faces {
            let mut tri = [0; 3];
            for (k, &v) in self.faces[f].iter().enumerate() {
                if remap[v] == usize::MAX {
                    remap[v] = old.len();
                    old.push(v);
                }
                tri[k] = remap[v];
            }
            out_faces.push(tri);
        }
        let positions = old.iter().map(|&v| self.positions[v]).collect();
        (
            TriangleMesh {
                positions,
                faces: out_faces,
            },
            old,
        )
    }

    /// Drops vertices not referenced by any face, keeping relative order.
    pub fn without_unreferenced(&self) -> TriangleMesh {
        let all: Vec<usize> = (0..self.faces.len()).collect();
        let mut used = vec![false; self.positions.len()];
        for f in &self.faces {
            for &v in f {
                used[v] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.positions.len()];
        let mut positions = Vec::new();
        for (v, &u) in used.iter().enumerate() {
            if u {
                remap[v] = positions.len();
                positions.push(self.positions[v]);
            }
        }
        let faces = all
            .iter()
            .map(|&f| {
                let [a, b, c] = self.faces[f];
                [remap[a], remap[b], remap[c]]
            })
            .collect();
        TriangleMesh { positions, faces }
    }
}

/// Uniform scale plus translation: `x -> scale * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub translation: [f64; 3],
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            translation: [0.0; 3],
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p * self.scale + Vec3::from(self.translation)
    }

    pub fn inverse(&self) -> Self {
        let t = Vec3::from(self.translation);
        let inv = -t / self.scale;
        Self {
            scale: 1.0 / self.scale,
            translation: [inv.x, inv.y, inv.z],
        }
    }
}

// ---------------------------------------------------------------------------
// OBJ

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_obj(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses ASCII OBJ from a reader. Only `v` and `f` records are consumed;
/// polygons are fan-triangulated and negative (relative) indices resolved.
pub fn parse_obj(reader: impl BufRead) -> Result<TriangleMesh> {
    let mut positions = Vec::new();
    // (line, raw indices) kept until all vertices are known
    let mut polys: Vec<(usize, Vec<i64>, usize)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io("<obj>", e))?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in c.iter_mut() {
                    let tok = it.next().ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    *slot = tok.parse::<f64>().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad coordinate {tok:?}"),
                    })?;
                }
                if !c.iter().all(|x| x.is_finite()) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "non-finite coordinate".into(),
                    });
                }
                positions.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad face index {tok:?}"),
                    })?;
                    if i == 0 {
                        return Err(Error::Parse {
                            line: lineno,
                            message: "face index 0 is invalid in OBJ".into(),
                        });
                    }
                    idx.push(i);
                }
                if idx.len() < 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "face needs at least three vertices".into(),
                    });
                }
                polys.push((lineno, idx, positions.len()));
            }
            _ => {}
        }
    }

    let n = positions.len();
    let mut faces = Vec::new();
    for (_line, idx, seen) in polys {
        let resolved: Vec<usize> = idx
            .iter()
            .map(|&i| {
                let r = if i > 0 { i - 1 } else { seen as i64 + i };
                if r < 0 || r as usize >= n {
                    Err(Error::IndexOutOfRange {
                        face: faces.len(),
                        index: i,
                        count: n,
                    })
                } else {
                    Ok(r as usize)
                }
            })
            .collect::<Result<_>>()?;
        for k in 1..resolved.len() - 1 {
            faces.push([resolved[0], resolved[k], resolved[k + 1]]);
        }
    }
    Ok(TriangleMesh { positions, faces })
}

/// Formats like C's `%.9g`.
pub(crate) fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.8e}", x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

pub fn obj_string(mesh: &TriangleMesh) -> String {
    let mut s = String::with_capacity(mesh.positions.len() * 40 + mesh.faces.len() * 24);
    for p in &mesh.positions {
        let _ = writeln!(s, "v {} {} {}", fmt_g9(p.x), fmt_g9(p.y), fmt_g9(p.z));
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn save_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, obj_string(mesh)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Normalization

/// Centers the bounding box at the origin and scales uniformly so that the
/// largest extent is 1. The returned similarity maps normalized coordinates
/// back to the original ones.
pub fn normalize_unit_box(mesh: &TriangleMesh) -> Result<(TriangleMesh, Similarity)> {
    let (lo, hi) = mesh.bounds().ok_or(Error::EmptyMesh)?;
    let center = (lo + hi) * 0.5;
    let extent = (hi - lo).max();
    let scale = if extent > 0.0 { extent } else { 1.0 };
    let back = Similarity {
        scale,
        translation: [center.x, center.y, center.z],
    };
    Ok((mesh.transformed(&back.inverse()), back))
}

// ---------------------------------------------------------------------------
// Topology

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub is_edge_manifold: bool,
    pub is_vertex_manifold: bool,
    pub is_closed: bool,
    pub component_count: usize,
    pub nonmanifold_edge_count: usize,
    pub duplicate_vertex_count: usize,
    pub degenerate_face_count: usize,
    pub boundary_edge_count: usize,
}

impl TopologyReport {
    /// Closed, edge- and vertex-manifold, single component.
    pub fn is_valid_cage(&self) -> bool {
        self.is_closed
            && self.is_edge_manifold
            && self.is_vertex_manifold
            && self.component_count == 1
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn is_degenerate(mesh: &TriangleMesh, f: &[usize; 3]) -> bool {
    let [a, b, c] = *f;
    if a == b || b == c || a == c {
        return true;
    }
    let (pa, pb, pc) = (mesh.positions[a], mesh.positions[b], mesh.positions[c]);
    (pb - pa).cross(&(pc - pa)).norm_squared() == 0.0
}

pub fn topology_report(mesh: &TriangleMesh) -> TopologyReport {
    let n = mesh.positions.len();
    let mut edge_faces: HashMap<(usize, usize), usize> = HashMap::new();
    let mut degenerate = 0;
    for f in &mesh.faces {
        if is_degenerate(mesh, f) {
            degenerate += 1;
        }
        let [a, b, c] = *f;
        for (u, v) in [(a, b), (b, c), (c, a)] {
            if u != v {
                *edge_faces.entry(edge_key(u, v)).or_default() += 1;
            }
        }
    }
    let nonmanifold = edge_faces.values().filter(|&&c| c > 2).count();
    let boundary = edge_faces.values().filter(|&&c| c == 1).count();
    let is_closed = !edge_faces.is_empty() && edge_faces.values().all(|&c| c == 2);

    // Vertex link: for every face (v, a, b) add link edge a-b. A manifold
    // vertex has a link that is a single path or a single cycle.
    let mut link: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for f in &mesh.faces {
        let [a, b, c] = *f;
        if a == b || b == c || a == c {
            continue;
        }
        link[a].push((b, c));
        link[b].push((c, a));
        link[c].push((a, b));
    }
    let is_vertex_manifold = link.iter().all(|edges| link_is_disk(edges));

    let mut seen = HashMap::new();
    let mut dup = 0;
    for p in &mesh.positions {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        if seen.insert(key, ()).is_some() {
            dup += 1;
        }
    }

    TopologyReport {
        is_edge_manifold: nonmanifold == 0,
        is_vertex_manifold,
        is_closed,
        component_count: connected_components(mesh).len(),
        nonmanifold_edge_count: nonmanifold,
        duplicate_vertex_count: dup,
        degenerate_face_count: degenerate,
        boundary_edge_count: boundary,
    }
}

fn link_is_disk(edges: &[(usize, usize)]) -> bool {
    if edges.len() <= 1 {
        return true;
    }
    let mut degree: HashMap<usize, usize> = HashMap::new();
    for &(a, b) in edges {
        *degree.entry(a).or_default() += 1;
        *degree.entry(b).or_default() += 1;
    }
    if degree.values().any(|&d| d > 2) {
        return false;
    }
    // connectivity of the link graph
    let verts: Vec<usize> = degree.keys().copied().collect();
    let index: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut uf = UnionFind::new(verts.len());
    for &(a, b) in edges {
        uf.union(index[&a], index[&b]);
    }
    let root = uf.find(0);
    (1..verts.len()).all(|i| uf.find(i) == root)
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so labels are order-independent
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Partition of the vertices by shared-index face connectivity. Components
/// are ordered by their smallest vertex; each component's vertices ascend.
pub fn connected_components(mesh: &TriangleMesh) -> Vec<Vec<usize>> {
    let n = mesh.positions.len();
    let mut uf = UnionFind::new(n);
    for &[a, b, c] in &mesh.faces {
        uf.union(a, b);
        uf.union(b, c);
    }
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        let r = uf.find(v);
        let k = *slot.entry(r).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[k].push(v);
    }
    out
}

/// Per-vertex component id consistent with [`connected_components`].
pub fn component_labels(mesh: &TriangleMesh) -> (Vec<usize>, usize) {
    let comps = connected_components(mesh);
    let mut labels = vec![0; mesh.positions.len()];
    for (k, c) in comps.iter().enumerate() {
        for &v in c {
            labels[v] = k;
        }
    }
    (labels, comps.len())
}

// ---------------------------------------------------------------------------
// Soups

/// Splits every face into three private vertices, perturbs each copy with
/// isotropic Gaussian noise and reverses the winding of
/// `floor(flip_fraction * |F|)` randomly chosen faces.
///
/// Vertex `3f + k` of the soup is a copy of `mesh.faces[f][k]`; see
/// [`soup_correspondence`].
pub fn make_soup(
    mesh: &TriangleMesh,
    vertex_noise_sigma: f64,
    flip_fraction: f64,
    rng_seed: u64,
) -> Result<TriangleMesh> {
    if !(0.0..=1.0).contains(&flip_fraction) {
        return Err(Error::InvalidArgument(format!(
            "flip fraction {flip_fraction} outside [0, 1]"
        )));
    }
    if !(vertex_noise_sigma >= 0.0 && vertex_noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma {vertex_noise_sigma} must be finite and non-negative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let nf = mesh.faces.len();
    let mut order: Vec<usize> = (0..nf).collect();
    order.shuffle(&mut rng);
    let flips = (flip_fraction * nf as f64).floor() as usize;
    let mut flip = vec![false; nf];
    for &f in &order[..flips] {
        flip[f] = true;
    }

    let noise = Normal::new(0.0, vertex_noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut positions = Vec::with_capacity(3 * nf);
    let mut faces = Vec::with_capacity(nf);
    for (f, tri) in mesh.faces.iter().enumerate() {
        for &v in tri {
            let mut p = mesh.positions[v];
            if vertex_noise_sigma > 0.0 {
                p += Vec3::new(
                    noise.sample(&mut rng),
                    noise.sample(&mut rng),
                    noise.sample(&mut rng),
                );
            }
            positions.push(p);
        }
        let base = 3 * f;
        faces.push(if flip[f] {
            [base + 2, base + 1, base]
        } else {
            [base, base + 1, base + 2]
        });
    }
    Ok(TriangleMesh { positions, faces })
}

/// Source vertex of every soup vertex produced by [`make_soup`].
/// Maps soup vertex `3f + k` back to vertex `faces[f][k]` of the mesh the
/// soup was made from.
pub fn soup_correspondence(original: &TriangleMesh) -> Vec<usize> {
    original.faces.iter().flat_map(|f| f.iter().copied()).collect()
}
