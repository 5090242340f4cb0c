use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use nalgebra::{Matrix3, Matrix4, Vector4};

use crate::mesh::TriangleMesh;
use crate::Vec3;

/// Result of [`simplify_qem`].
#[derive(Debug, Clone)]
pub struct Simplified {
    pub mesh: TriangleMesh,
    /// False when no further collapse was possible without breaking
    /// manifoldness or flipping a face before `target_faces` was reached.
    pub reached_target: bool,
    /// Quadric cost of every applied collapse, in order.
    pub collapse_costs: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    u: usize,
    v: usize,
    stamp_u: u32,
    stamp_v: u32,
    target: Vec3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // min-heap on (cost, u, v)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.u.cmp(&self.u))
            .then(other.v.cmp(&self.v))
    }
}

struct State {
    positions: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    incident: Vec<Vec<usize>>,
    quadric: Vec<Matrix4<f64>>,
    stamp: Vec<u32>,
    vertex_alive: Vec<bool>,
    live_faces: usize,
    live_vertices: usize,
}

fn face_quadric(p: [Vec3; 3]) -> Matrix4<f64> {
    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let len = n.norm();
    if len == 0.0 {
        return Matrix4::zeros();
    }
    let area = 0.5 * len;
    let n = n / len;
    let plane = Vector4::new(n.x, n.y, n.z, -n.dot(&p[0]));
    plane * plane.transpose() * area
}

fn quadric_cost(q: &Matrix4<f64>, p: &Vec3) -> f64 {
    let h = Vector4::new(p.x, p.y, p.z, 1.0);
    (h.transpose() * q * h)[(0, 0)].max(0.0)
}

impl State {
    fn new(mesh: &TriangleMesh) -> Self {
        let n = mesh.positions.len();
        let mut incident = vec![Vec::new(); n];
        let mut quadric = vec![Matrix4::zeros(); n];
        for (f, tri) in mesh.faces.iter().enumerate() {
            let q = face_quadric(mesh.triangle(f));
            for &v in tri {
                incident[v].push(f);
                quadric[v] += q;
            }
        }
        let vertex_alive: Vec<bool> = incident.iter().map(|i| !i.is_empty()).collect();
        let live_vertices = vertex_alive.iter().filter(|&&a| a).count();
        State {
            positions: mesh.positions.clone(),
            faces: mesh.faces.clone(),
            face_alive: vec![true; mesh.faces.len()],
            incident,
            quadric,
            stamp: vec![0; n],
            vertex_alive,
            live_faces: mesh.faces.len(),
            live_vertices,
        }
    }

    fn neighbors(&self, v: usize) -> HashSet<usize> {
        let mut out = HashSet::new();
        for &f in &self.incident[v] {
            for &w in &self.faces[f] {
                if w != v {
                    out.insert(w);
                }
            }
        }
        out
    }

    fn candidate(&self, a: usize, b: usize) -> Candidate {
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        let q = self.quadric[u] + self.quadric[v];
        let (pu, pv) = (self.positions[u], self.positions[v]);
        let mid = (pu + pv) * 0.5;
        let edge_len = (pv - pu).norm();
        let target = optimal_point(&q)
            .filter(|p| (p - mid).norm() <= 2.0 * edge_len)
            .unwrap_or(mid);
        Candidate {
            cost: quadric_cost(&q, &target),
            u,
            v,
            stamp_u: self.stamp[u],
            stamp_v: self.stamp[v],
            target,
        }
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (f, tri) in self.faces.iter().enumerate() {
            if !self.face_alive[f] {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    fn is_current(&self, c: &Candidate) -> bool {
        self.vertex_alive[c.u]
            && self.vertex_alive[c.v]
            && self.stamp[c.u] == c.stamp_u
            && self.stamp[c.v] == c.stamp_v
    }

    /// Link condition plus a check that no surviving face flips or
    /// degenerates when `u` and `v` move to `target`.
    fn can_collapse(&self, c: &Candidate) -> bool {
        if self.live_vertices <= 4 {
            return false;
        }
        let shared: Vec<usize> = self.incident[c.u]
            .iter()
            .copied()
            .filter(|&f| self.faces[f].contains(&c.v))
            .collect();
        if shared.len() != 2 {
            return false;
        }
        let nu = self.neighbors(c.u);
        let nv = self.neighbors(c.v);
        let common = nu.intersection(&nv).count();
        if common != 2 {
            return false;
        }
        for &w in &[c.u, c.v] {
            for &f in &self.incident[w] {
                if shared.contains(&f) {
                    continue;
                }
                let tri = self.faces[f];
                let before = tri.map(|x| self.positions[x]);
                let after = tri.map(|x| {
                    if x == c.u || x == c.v {
                        c.target
                    } else {
                        self.positions[x]
                    }
                });
                let n0 = (before[1] - before[0]).cross(&(before[2] - before[0]));
                let n1 = (after[1] - after[0]).cross(&(after[2] - after[0]));
                let l1 = n1.norm();
                if l1 <= 1e-14 * (after[1] - after[0]).norm_squared().max(1e-300) {
                    return false;
                }
                if n0.dot(&n1) <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    fn collapse(&mut self, c: &Candidate) {
        let (u, v) = (c.u, c.v);
        let moved = std::mem::take(&mut self.incident[v]);
        let mine = std::mem::take(&mut self.incident[u]);
        let mut merged: Vec<usize> = Vec::new();
        for &f in mine.iter().chain(moved.iter()) {
            if !self.face_alive[f] {
                continue;
            }
            if self.faces[f].contains(&u) && self.faces[f].contains(&v) {
                self.face_alive[f] = false;
                self.live_faces -= 1;
                let tri = self.faces[f];
                for &w in &tri {
                    if w != u && w != v {
                        self.incident[w].retain(|&g| g != f);
                    }
                }
                continue;
            }
            for x in self.faces[f].iter_mut() {
                if *x == v {
                    *x = u;
                }
            }
            if !merged.contains(&f) {
                merged.push(f);
            }
        }
        merged.sort_unstable();
        self.incident[u] = merged;
        self.positions[u] = c.target;
        self.quadric[u] = self.quadric[u] + self.quadric[v];
        self.vertex_alive[v] = false;
        self.live_vertices -= 1;
        self.stamp[u] += 1;
        self.stamp[v] += 1;
    }

    fn finish(&self) -> TriangleMesh {
        let faces: Vec<usize> = (0..self.faces.len())
            .filter(|&f| self.face_alive[f])
            .collect();
        let staged = TriangleMesh {
            positions: self.positions.clone(),
            faces: self.faces.clone(),
        };
        let (sub, _) = staged.submesh(&faces);
        sub
    }
}

fn optimal_point(q: &Matrix4<f64>) -> Option<Vec3> {
    let a = Matrix3::new(
        q[(0, 0)],
        q[(0, 1)],
        q[(0, 2)],
        q[(1, 0)],
        q[(1, 1)],
        q[(1, 2)],
        q[(2, 0)],
        q[(2, 1)],
        q[(2, 2)],
    );
    let b = Vec3::new(q[(0, 3)], q[(1, 3)], q[(2, 3)]);
    let eig = a.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
    if max == 0.0 || min < 1e-8 * max {
        return None;
    }
    let p = a.try_inverse()? * (-b);
    p.iter().all(|x| x.is_finite()).then_some(p)
}

/// Garland–Heckbert edge-collapse simplification of a closed manifold mesh
/// down to at most `target_faces` faces. Collapses are taken in order of
/// increasing quadric cost; any collapse that would break the link condition
/// or flip a face is skipped and retried after the neighbourhood changes.
pub fn simplify_qem(mesh: &TriangleMesh, target_faces: usize) -> Simplified {
    let mut state = State::new(mesh);
    let mut costs = Vec::new();
    if state.live_faces <= target_faces {
        return Simplified {
            mesh: mesh.clone(),
            reached_target: true,
            collapse_costs: costs,
        };
    }
    loop {
        let mut heap: BinaryHeap<Candidate> = state
            .edges()
            .into_iter()
            .map(|(a, b)| state.candidate(a, b))
            .collect();
        let mut progressed = false;
        while state.live_faces > target_faces {
            let Some(c) = heap.pop() else { break };
            if !state.is_current(&c) || !state.can_collapse(&c) {
                continue;
            }
            state.collapse(&c);
            costs.push(c.cost);
            progressed = true;
            let u = c.u;
            let around: Vec<usize> = {
                let mut n: Vec<usize> = state.neighbors(u).into_iter().collect();
                n.sort_unstable();
                n
            };
            for &w in &around {
                heap.push(state.candidate(u, w));
            }
        }
        if state.live_faces <= target_faces || !progressed {
            break;
        }
    }
    Simplified {
        mesh: state.finish(),
        reached_target: state.live_faces <= target_faces,
        collapse_costs: costs,
    }
}
