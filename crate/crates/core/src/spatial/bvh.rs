use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::distance::{canonical_triangle, closest_on_sorted};
use crate::mesh::TriangleMesh;
use crate::Vec3;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn union(&mut self, o: &Aabb) {
        self.lo = self.lo.inf(&o.lo);
        self.hi = self.hi.sup(&o.hi);
    }

    fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|k| self.lo[k] <= o.lo[k] && o.hi[k] <= self.hi[k])
    }

    fn dist2(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let e = if p[k] < self.lo[k] {
                self.lo[k] - p[k]
            } else if p[k] > self.hi[k] {
                p[k] - self.hi[k]
            } else {
                0.0
            };
            d += e * e;
        }
        d
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    // leaf: faces order[start..start+count]; inner: children left, right
    start: usize,
    count: usize,
    left: usize,
    right: usize,
}

/// Bounding-volume hierarchy over the faces of a mesh for exact closest
/// point queries. Triangles are stored in canonical corner order, so results
/// do not depend on face winding.
#[derive(Debug, Clone)]
pub struct TriangleIndex {
    nodes: Vec<Node>,
    order: Vec<usize>,
    tris: Vec<[Vec3; 3]>,
    leaf_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closest {
    pub distance: f64,
    pub face: usize,
    pub point: Vec3,
}

#[derive(PartialEq)]
struct Pending(f64, usize);

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // min-heap on distance, then node id
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl TriangleIndex {
    pub fn new(mesh: &TriangleMesh) -> Self {
        Self::with_leaf_size(mesh, 4)
    }

    pub fn with_leaf_size(mesh: &TriangleMesh, leaf_size: usize) -> Self {
        let leaf_size = leaf_size.max(1);
        let tris: Vec<[Vec3; 3]> = (0..mesh.face_count())
            .map(|f| canonical_triangle(&mesh.triangle(f)))
            .collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut index = TriangleIndex {
            nodes: Vec::new(),
            order: (0..tris.len()).collect(),
            tris,
            leaf_size,
        };
        if !index.tris.is_empty() {
            index.build(0, index.order.len(), &centroids);
        }
        index
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn face_count(&self) -> usize {
        self.tris.len()
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Vec3]) -> usize {
        let mut bounds = Aabb::empty();
        let mut cb = Aabb::empty();
        for &f in &self.order[start..end] {
            for p in &self.tris[f] {
                bounds.grow(p);
            }
            cb.grow(&centroids[f]);
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            start,
            count: end - start,
            left: usize::MAX,
            right: usize::MAX,
        });
        if end - start <= self.leaf_size {
            return id;
        }
        let ext = cb.hi - cb.lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        self.order[start..end].sort_by(|&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let left = self.build(start, mid, centroids);
        let right = self.build(mid, end, centroids);
        let node = &mut self.nodes[id];
        node.left = left;
        node.right = right;
        node.count = 0;
        id
    }

    /// Exact closest face to `p`. Ties on distance go to the lower face id.
    pub fn closest(&self, p: &Vec3) -> Option<Closest> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = Closest {
            distance: f64::INFINITY,
            face: usize::MAX,
            point: Vec3::zeros(),
        };
        let mut best2 = f64::INFINITY;
        let mut heap = BinaryHeap::new();
        heap.push(Pending(self.nodes[0].bounds.dist2(p), 0));
        while let Some(Pending(d2, id)) = heap.pop() {
            if d2 > best2 {
                break;
            }
            let node = &self.nodes[id];
            if node.left == usize::MAX {
                for &f in &self.order[node.start..node.start + node.count] {
                    let (d, q) = closest_on_sorted(p, &self.tris[f]);
                    if d < best.distance || (d == best.distance && f < best.face) {
                        best = Closest {
                            distance: d,
                            face: f,
                            point: q,
                        };
                        best2 = d * d;
                    }
                }
            } else {
                for child in [node.left, node.right] {
                    let cd = self.nodes[child].bounds.dist2(p);
                    if cd <= best2 {
                        heap.push(Pending(cd, child));
                    }
                }
            }
        }
        Some(best)
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        self.closest(p).map_or(f64::INFINITY, |c| c.distance)
    }

    /// Linear scan over all faces; the oracle for [`Self::closest`].
    pub fn closest_brute(&self, p: &Vec3) -> Option<Closest> {
        let mut best: Option<Closest> = None;
        for (f, t) in self.tris.iter().enumerate() {
            let (d, q) = closest_on_sorted(p, t);
            if best.is_none_or(|b| d < b.distance) {
                best = Some(Closest {
                    distance: d,
                    face: f,
                    point: q,
                });
            }
        }
        best
    }

    /// Checks that each face sits in exactly one leaf and that every node's
    /// box contains its children.
    pub fn check_structure(&self) -> bool {
        let mut seen = vec![0usize; self.tris.len()];
        for node in &self.nodes {
            if node.left == usize::MAX {
                for &f in &self.order[node.start..node.start + node.count] {
                    seen[f] += 1;
                    let mut b = Aabb::empty();
                    for p in &self.tris[f] {
                        b.grow(p);
                    }
                    if !node.bounds.contains(&b) {
                        return false;
                    }
                }
            } else {
                let mut u = self.nodes[node.left].bounds;
                u.union(&self.nodes[node.right].bounds);
                if !node.bounds.contains(&u) {
                    return false;
                }
            }
        }
        seen.iter().all(|&c| c == 1)
    }
}
