use crate::Vec3;

/// Sorts the corners lexicographically so that every permutation of the same
/// three points (in particular a reversed winding) yields bit-identical
/// distance results.
pub fn canonical_triangle(tri: &[Vec3; 3]) -> [Vec3; 3] {
    let mut t = *tri;
    t.sort_by(|a, b| {
        a.x.total_cmp(&b.x)
            .then(a.y.total_cmp(&b.y))
            .then(a.z.total_cmp(&b.z))
    });
    t
}

pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> (f64, Vec3) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let q = if len2 == 0.0 {
        *a
    } else {
        let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
        a + ab * t
    };
    ((p - q).norm(), q)
}

/// Exact Euclidean distance from `p` to the closed triangle and the closest
/// point on it. Degenerate (zero-area) triangles are measured as the union
/// of their edges.
pub fn point_triangle_distance(p: &Vec3, tri: &[Vec3; 3]) -> (f64, Vec3) {
    closest_on_sorted(p, &canonical_triangle(tri))
}

/// Same as [`point_triangle_distance`] for an already canonical triangle.
pub(crate) fn closest_on_sorted(p: &Vec3, tri: &[Vec3; 3]) -> (f64, Vec3) {
    let [a, b, c] = tri;
    let ab = b - a;
    let ac = c - a;
    let n2 = ab.cross(&ac).norm_squared();
    if n2 <= f64::EPSILON * f64::EPSILON * ab.norm_squared() * ac.norm_squared() || n2 == 0.0 {
        let mut best = point_segment_distance(p, a, b);
        for (u, v) in [(b, c), (c, a)] {
            let d = point_segment_distance(p, u, v);
            if d.0 < best.0 {
                best = d;
            }
        }
        return best;
    }
    let q = closest_point(p, a, b, c, &ab, &ac);
    ((p - q).norm(), q)
}

// Region classification on the triangle's Voronoi regions.
fn closest_point(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3, ab: &Vec3, ac: &Vec3) -> Vec3 {
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> [Vec3; 3] {
        [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)]
    }

    /// Dense barycentric sampling of the triangle; an independent minimizer.
    fn sampled_min(p: &Vec3, t: &[Vec3; 3], steps: usize) -> (f64, Vec3) {
        let mut best = (f64::INFINITY, Vec3::zeros());
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let u = i as f64 / steps as f64;
                let v = j as f64 / steps as f64;
                let q = t[0] + (t[1] - t[0]) * u + (t[2] - t[0]) * v;
                let d = (p - q).norm();
                if d < best.0 {
                    best = (d, q);
                }
            }
        }
        best
    }

    #[test]
    fn above_vertex() {
        let (d, q) = point_triangle_distance(&Vec3::new(0.0, 0.0, 1.0), &tri());
        assert_eq!(d, 1.0);
        assert_eq!(q, Vec3::zeros());
    }

    #[test]
    fn on_vertex() {
        let (d, _) = point_triangle_distance(&Vec3::new(1.0, 0.0, 0.0), &tri());
        assert_eq!(d, 0.0);
    }

    #[test]
    fn nearest_on_hypotenuse() {
        let p = Vec3::new(2.0, 2.0, 0.0);
        let (d, q) = point_triangle_distance(&p, &tri());
        // frozen from sampled_min at 400 steps: (0.5, 0.5, 0), sqrt(4.5)
        let (ds, qs) = sampled_min(&p, &tri(), 400);
        assert!((qs - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
        assert!((d - 4.5f64.sqrt()).abs() < 1e-14);
        assert!((d - ds).abs() < 1e-12);
        assert!((q - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn degenerate_triangles() {
        let line = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        let (d, q) = point_triangle_distance(&Vec3::new(1.5, 1.0, 0.0), &line);
        assert!((d - 1.0).abs() < 1e-15);
        assert!((q - Vec3::new(1.5, 0.0, 0.0)).norm() < 1e-15);
        let point = [Vec3::repeat(1.0); 3];
        let (d, _) = point_triangle_distance(&Vec3::zeros(), &point);
        assert!((d - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn permutation_invariant_bitwise() {
        let t = [
            Vec3::new(0.1, 0.7, -0.3),
            Vec3::new(0.9, -0.2, 0.4),
            Vec3::new(-0.5, 0.3, 0.8),
        ];
        let p = Vec3::new(0.33, 0.21, 0.95);
        let base = point_triangle_distance(&p, &t);
        for perm in [[0, 2, 1], [1, 0, 2], [2, 1, 0], [1, 2, 0], [2, 0, 1]] {
            let q = [t[perm[0]], t[perm[1]], t[perm[2]]];
            let r = point_triangle_distance(&p, &q);
            assert_eq!(r.0.to_bits(), base.0.to_bits());
            assert_eq!(r.1, base.1);
        }
    }

    proptest::proptest! {
        #[test]
        fn matches_sampling(px in -2.0f64..2.0, py in -2.0f64..2.0, pz in -2.0f64..2.0,
                            cx in -1.0f64..1.0, cy in 0.2f64..1.5) {
            let t = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(cx, cy, 0.3)];
            let p = Vec3::new(px, py, pz);
            let (d, q) = point_triangle_distance(&p, &t);
            let (ds, _) = sampled_min(&p, &t, 200);
            // the exact minimum never exceeds a sample and sits within the sampling resolution
            proptest::prop_assert!(d <= ds + 1e-12);
            proptest::prop_assert!(ds - d < 0.02);
            proptest::prop_assert!(((p - q).norm() - d).abs() < 1e-12);
        }
    }
}
