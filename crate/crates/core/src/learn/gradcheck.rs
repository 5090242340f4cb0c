use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::PredictorHead;
use super::losses::{
    build_symmetry_pairs, cross_entropy_with_grad, kl_with_grad, lp_with_grad, softmax_backward,
    softmax_rows, symmetry_with_grad, SkinLossWeights,
};
use super::train::{loss_and_gradient, CageSample, Target};
use crate::cage::Cage;
use crate::coords::compute_mvc_matrix;
use crate::error::Result;
use crate::features::{position_features, Standardizer};
use crate::fixtures::shapes;
use crate::skin::{detect_symmetric_vertices, SkinWeights};

/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Gradient magnitude below which errors are measured absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Largest relative error between the analytic gradient of `f` at `x` and
/// central finite differences, over `samples` coordinates drawn with `seed`
/// (all coordinates when `samples >= x.len()`).
///
/// Coordinate `i` uses the step `1e-6 · max(|x_i|, 1)`; the error is
/// `|g − fd| / max(|g|, |fd|, 1e-6)`.
pub fn grad_check<F>(f: F, x: &[f64], samples: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (_, grad) = f(x)?;
    let idx: Vec<usize> = if samples >= x.len() {
        (0..x.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, x.len(), samples).into_vec();
        v.sort_unstable();
        v
    };
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in idx {
        let h = FD_STEP * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe)?.0;
        probe[i] = x[i] - h;
        let fm = f(&probe)?.0;
        probe[i] = x[i];
        let fd = (fp - fm) / (2.0 * h);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(GRAD_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Outcome of one entry of [`gradient_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckResult {
    pub name: String,
    pub max_relative_error: f64,
}

fn as_matrix(x: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, x)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| lo + rng.random::<f64>());
    for mut r in m.row_iter_mut() {
        let s = r.sum();
        r /= s;
    }
    m
}

/// Finite-difference checks of every loss gradient: face cross-entropy
/// through softmax, KL, L_p at `p = 0.3` (including an exact zero entry),
/// the symmetry term, and the full skinning objective through the head, the
/// mapping operator and softmax with respect to the head parameters.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name: &str, err: f64| {
        out.push(GradCheckResult {
            name: name.into(),
            max_relative_error: err,
        })
    };

    let (faces, classes) = (12, 4);
    let logits = DMatrix::from_fn(faces, classes, |_, _| rng.random_range(-2.0..2.0));
    let labels: Vec<usize> = (0..faces).map(|_| rng.random_range(0..classes)).collect();
    let err = grad_check(
        |x| {
            let probs = softmax_rows(&as_matrix(x, faces, classes));
            let (v, g) = cross_entropy_with_grad(&probs, &labels)?;
            Ok((v, row_major(&softmax_backward(&probs, &g))))
        },
        &row_major(&logits),
        usize::MAX,
        seed,
    )?;
    push("cross_entropy", err);

    let (n, k) = (10, 3);
    let gt = SkinWeights::new(random_rows(&mut rng, n, k, 0.0))?;
    let pred = random_rows(&mut rng, n, k, 0.2);
    let err = grad_check(
        |x| {
            let (v, g) = kl_with_grad(&as_matrix(x, n, k), &gt)?;
            Ok((v, row_major(&g)))
        },
        &row_major(&pred),
        usize::MAX,
        seed,
    )?;
    push("kl", err);

    let mut sparse = pred.clone();
    sparse[(0, 1)] = 0.0;
    let err = grad_check(
        |x| {
            let (v, g) = lp_with_grad(&as_matrix(x, n, k), 0.3)?;
            Ok((v, row_major(&g)))
        },
        &row_major(&sparse),
        usize::MAX,
        seed,
    )?;
    push("lp", err);

    let mesh = shapes::icosphere(2, 0.7);
    let symmetry = detect_symmetric_vertices(&mesh, 1e-9);
    let nv = mesh.vertex_count();
    let gt_logits = DMatrix::from_fn(nv, 3, |i, b| {
        let c = [-0.5, 0.0, 0.5][b];
        -8.0 * (mesh.positions[i].x - c).powi(2)
    });
    let gt = SkinWeights::new(softmax_rows(&gt_logits))?;
    let pairs = build_symmetry_pairs(&gt, &symmetry, 1.0, 1e-5)?;
    let pred = random_rows(&mut rng, nv, 3, 0.2);
    let err = grad_check(
        |x| {
            let (v, g) = symmetry_with_grad(&as_matrix(x, nv, 3), &pairs, &symmetry)?;
            Ok((v, row_major(&g)))
        },
        &row_major(&pred),
        usize::MAX,
        seed,
    )?;
    push("symmetry", err);

    let cage = Cage::from_mesh(shapes::icosphere(1, 1.0))?;
    let coords = compute_mvc_matrix(&mesh, &cage)?;
    let feats = position_features(&cage.mesh)?;
    let feats = Standardizer::fit(&[&feats])?.apply(&feats)?;
    let cage_sample = CageSample::new(&mesh, &cage.mesh, coords, &feats)?;
    let head = PredictorHead::new(3, 6, 3, 2, 0.25, seed)?;
    let target = Target::Skinning {
        gt,
        symmetry,
        pairs,
    };
    let weights = SkinLossWeights::default();
    let err = grad_check(
        |x| {
            let mut h = head.clone();
            h.set_params(x)?;
            let (loss, grad) = loss_and_gradient(&h, &cage_sample, &target, &weights)?;
            Ok((loss.total, grad))
        },
        head.params(),
        usize::MAX,
        seed,
    )?;
    push("total_skin", err);

    let seg_labels: Vec<usize> = (0..mesh.face_count()).map(|f| usize::from(mesh.triangle(f)[0].z > 0.0)).collect();
    let seg_head = PredictorHead::new(3, 6, 2, 2, 0.25, seed + 1)?;
    let seg_target = Target::Segmentation {
        faces: mesh.faces.clone(),
        labels: seg_labels,
        classes: 2,
    };
    let err = grad_check(
        |x| {
            let mut h = seg_head.clone();
            h.set_params(x)?;
            let (loss, grad) = loss_and_gradient(&h, &cage_sample, &seg_target, &weights)?;
            Ok((loss.total, grad))
        },
        seg_head.params(),
        usize::MAX,
        seed,
    )?;
    push("segmentation", err);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_wrong_gradients() {
        let good = grad_check(|x| Ok((x[0] * x[0] + 3.0 * x[1], vec![2.0 * x[0], 3.0])), &[0.7, -2.0], 5, 0).unwrap();
        assert!(good < 1e-8);
        let bad = grad_check(|x| Ok((x[0] * x[0], vec![3.0 * x[0]])), &[0.7], 1, 0).unwrap();
        assert!(bad > 0.1);
    }

    #[test]
    fn every_loss_passes() {
        let results = gradient_suite(11).unwrap();
        assert_eq!(results.len(), 6);
        for r in results {
            assert!(r.max_relative_error <= 1e-4, "{}: {}", r.name, r.max_relative_error);
        }
    }
}
