use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skin::{SkinWeights, SymmetryMap};

/// Probability floor inside the cross-entropy logarithm.
pub const PROB_FLOOR: f64 = 1e-12;
/// Smoothing inside the L_p sparsity term: `(ŝ² + LP_EPS)^{p/2}`.
pub const LP_EPS: f64 = 1e-12;
/// Smoothing inside the per-vertex square root of the symmetry term.
pub const SYM_EPS: f64 = 1e-12;

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let m = row.max();
        row.apply(|x| *x = (*x - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Gradient with respect to the logits of a loss whose gradient with respect
/// to the softmax probabilities is `grad_probs`.
pub fn softmax_backward(probs: &DMatrix<f64>, grad_probs: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(probs.nrows(), probs.ncols());
    for i in 0..probs.nrows() {
        let dot: f64 = (0..probs.ncols()).map(|j| probs[(i, j)] * grad_probs[(i, j)]).sum();
        for j in 0..probs.ncols() {
            out[(i, j)] = probs[(i, j)] * (grad_probs[(i, j)] - dot);
        }
    }
    out
}

fn check_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {:?} and target {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean over rows of `−ln max(p[label], 1e-12)`, with its gradient with
/// respect to `probs`.
pub fn cross_entropy_with_grad(probs: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, DMatrix<f64>)> {
    let (n, c) = probs.shape();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} labels for {n} rows", labels.len())));
    }
    if n == 0 {
        return Ok((0.0, DMatrix::zeros(0, c)));
    }
    let mut grad = DMatrix::zeros(n, c);
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l >= c {
            return Err(Error::LabelOutOfRange { label: l, classes: c });
        }
        let p = probs[(i, l)];
        if p > PROB_FLOOR {
            total -= p.ln();
            grad[(i, l)] = -1.0 / (p * n as f64);
        } else {
            total -= PROB_FLOOR.ln();
        }
    }
    Ok((total / n as f64, grad))
}

/// Face-level cross-entropy: mean over faces of `−ln p_f[label_f]`.
pub fn loss_cross_entropy_faces(probs: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    cross_entropy_with_grad(probs, labels).map(|x| x.0)
}

/// Per-vertex `KL(gt ‖ pred) = Σ_b s_b ln(s_b / ŝ_b)` with `0 ln 0 = 0`,
/// averaged over vertices, with its gradient with respect to `pred`.
pub fn kl_with_grad(pred: &DMatrix<f64>, gt: &SkinWeights) -> Result<(f64, DMatrix<f64>)> {
    let s = gt.matrix();
    check_shape(pred, s)?;
    let (n, k) = pred.shape();
    let mut grad = DMatrix::zeros(n, k);
    let mut total = 0.0;
    for i in 0..n {
        for b in 0..k {
            let q = pred[(i, b)];
            if !(q > 0.0) {
                return Err(Error::NonPositivePrediction { vertex: i, bone: b });
            }
            let t = s[(i, b)];
            if t > 0.0 {
                total += t * (t.ln() - q.ln());
                grad[(i, b)] = -t / (q * n as f64);
            }
        }
    }
    Ok((if n > 0 { total / n as f64 } else { 0.0 }, grad))
}

pub fn loss_kl(pred: &DMatrix<f64>, gt: &SkinWeights) -> Result<f64> {
    kl_with_grad(pred, gt).map(|x| x.0)
}

/// Mean over vertices of `Σ_b (ŝ_b² + ε)^{p/2}`, with its gradient.
pub fn lp_with_grad(pred: &DMatrix<f64>, p: f64) -> Result<(f64, DMatrix<f64>)> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("L_p exponent {p} outside (0, 1]")));
    }
    let n = pred.nrows();
    if n == 0 {
        return Ok((0.0, DMatrix::zeros(0, pred.ncols())));
    }
    let mut total = 0.0;
    let grad = pred.map(|x| {
        let base = x * x + LP_EPS;
        total += base.powf(0.5 * p);
        p * x * base.powf(0.5 * p - 1.0) / n as f64
    });
    Ok((total / n as f64, grad))
}

pub fn loss_lp(pred: &DMatrix<f64>, p: f64) -> Result<f64> {
    lp_with_grad(pred, p).map(|x| x.0)
}

/// Bone pairs `(p, q)` whose ground-truth weights are mirror images of each
/// other over the symmetric vertex set.
///
/// A bone `p` qualifies when its total weight on symmetric vertices exceeds
/// `delta`. Its partner is the `q` (lowest index on ties) minimizing
/// `‖A s_p − B s_q‖₂ / (n ‖s_p‖₂)`, kept when that is below `epsilon`.
pub fn build_symmetry_pairs(
    gt: &SkinWeights,
    symmetry: &SymmetryMap,
    delta: f64,
    epsilon: f64,
) -> Result<Vec<(usize, usize)>> {
    let s = gt.matrix();
    let (n, k) = s.shape();
    if symmetry.matches.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "symmetry map covers {} vertices, weights {n}",
            symmetry.matches.len()
        )));
    }
    let mut pairs = Vec::new();
    for p in 0..k {
        let support: f64 = (0..n).filter(|&i| symmetry.contains(i)).map(|i| s[(i, p)]).sum();
        if !(support > delta) {
            continue;
        }
        let norm_p = s.column(p).norm();
        let mut best: Option<(f64, usize)> = None;
        for q in 0..k {
            let mismatch: f64 = (0..n)
                .map(|i| {
                    let a = if symmetry.contains(i) { s[(i, p)] } else { 0.0 };
                    let b = symmetry.matches[i].map_or(0.0, |j| s[(j, q)]);
                    (a - b) * (a - b)
                })
                .sum::<f64>()
                .sqrt()
                / (n as f64 * norm_p);
            if best.is_none_or(|(m, _)| mismatch < m) {
                best = Some((mismatch, q));
            }
        }
        if let Some((m, q)) = best {
            if m < epsilon {
                pairs.push((p, q));
            }
        }
    }
    Ok(pairs)
}

/// `(1/n) Σ_i sqrt(Σ_l ((A ŝ_p)(i) − (B ŝ_q)(i))² + ε)` over the pairs
/// `l = (p, q)`, with its gradient; zero when there are no pairs.
pub fn symmetry_with_grad(
    pred: &DMatrix<f64>,
    pairs: &[(usize, usize)],
    symmetry: &SymmetryMap,
) -> Result<(f64, DMatrix<f64>)> {
    let (n, k) = pred.shape();
    let mut grad = DMatrix::zeros(n, k);
    if pairs.is_empty() || n == 0 {
        return Ok((0.0, grad));
    }
    if symmetry.matches.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "symmetry map covers {} vertices, prediction {n}",
            symmetry.matches.len()
        )));
    }
    if let Some(&(p, q)) = pairs.iter().find(|&&(p, q)| p >= k || q >= k) {
        return Err(Error::DimensionMismatch(format!("pair ({p}, {q}) exceeds {k} bones")));
    }
    let mut total = 0.0;
    let mut diffs = vec![0.0; pairs.len()];
    for i in 0..n {
        let Some(j) = symmetry.matches[i] else {
            total += SYM_EPS.sqrt();
            continue;
        };
        let mut sum = SYM_EPS;
        for (l, &(p, q)) in pairs.iter().enumerate() {
            diffs[l] = pred[(i, p)] - pred[(j, q)];
            sum += diffs[l] * diffs[l];
        }
        let root = sum.sqrt();
        total += root;
        for (l, &(p, q)) in pairs.iter().enumerate() {
            let g = diffs[l] / (root * n as f64);
            grad[(i, p)] += g;
            grad[(j, q)] -= g;
        }
    }
    Ok((total / n as f64, grad))
}

pub fn loss_symmetry(pred: &DMatrix<f64>, pairs: &[(usize, usize)], symmetry: &SymmetryMap) -> Result<f64> {
    symmetry_with_grad(pred, pairs, symmetry).map(|x| x.0)
}

/// Coefficients of the skinning objective `KL + λ_p L_p + λ_sym Sym`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkinLossWeights {
    pub lambda_p: f64,
    pub lambda_sym: f64,
    pub p: f64,
}

impl Default for SkinLossWeights {
    fn default() -> Self {
        Self {
            lambda_p: 0.1,
            lambda_sym: 0.05,
            p: 0.3,
        }
    }
}

/// Value of each term of a loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub kl: f64,
    pub lp: f64,
    pub sym: f64,
}

/// Full skinning objective with its gradient with respect to `pred`.
pub fn total_skin_loss_with_grad(
    pred: &DMatrix<f64>,
    gt: &SkinWeights,
    pairs: &[(usize, usize)],
    symmetry: &SymmetryMap,
    weights: &SkinLossWeights,
) -> Result<(LossBreakdown, DMatrix<f64>)> {
    if weights.lambda_p < 0.0 || weights.lambda_sym < 0.0 {
        return Err(Error::InvalidArgument("loss weights must be nonnegative".into()));
    }
    let (kl, g_kl) = kl_with_grad(pred, gt)?;
    let (lp, g_lp) = lp_with_grad(pred, weights.p)?;
    let (sym, g_sym) = symmetry_with_grad(pred, pairs, symmetry)?;
    let total = kl + weights.lambda_p * lp + weights.lambda_sym * sym;
    let grad = g_kl + g_lp * weights.lambda_p + g_sym * weights.lambda_sym;
    Ok((LossBreakdown { total, kl, lp, sym }, grad))
}

pub fn total_skin_loss(
    pred: &DMatrix<f64>,
    gt: &SkinWeights,
    pairs: &[(usize, usize)],
    symmetry: &SymmetryMap,
    weights: &SkinLossWeights,
) -> Result<LossBreakdown> {
    total_skin_loss_with_grad(pred, gt, pairs, symmetry, weights).map(|x| x.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    fn sw(rows: &[&[f64]]) -> SkinWeights {
        SkinWeights::new(m(rows)).unwrap()
    }

    #[test]
    fn softmax_rows_are_stochastic() {
        let p = softmax_rows(&m(&[&[1000.0, 1000.0, 1000.0], &[0.0, 1.0, -3.0]]));
        for r in p.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        assert!((p[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_examples() {
        let one_hot = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(loss_cross_entropy_faces(&one_hot, &[0, 1]).unwrap() <= 1e-11);
        let c: f64 = 4.0;
        let uniform = DMatrix::from_element(3, 4, 0.25);
        assert!((loss_cross_entropy_faces(&uniform, &[0, 1, 3]).unwrap() - c.ln()).abs() < 1e-15);
        let probs = m(&[&[0.5, 0.5], &[1.0, 0.0]]);
        let v = loss_cross_entropy_faces(&probs, &[0, 0]).unwrap();
        assert!((v - 2f64.ln() / 2.0).abs() < 1e-15);
        assert!(matches!(
            loss_cross_entropy_faces(&probs, &[0, 2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn kl_examples() {
        let soft = sw(&[&[0.7, 0.3], &[0.25, 0.75]]);
        assert!(loss_kl(soft.matrix(), &soft).unwrap().abs() < 1e-15);
        let gt = sw(&[&[1.0, 0.0]]);
        let v = loss_kl(&m(&[&[0.5, 0.5]]), &gt).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            loss_kl(&m(&[&[1.0, 0.0]]), &gt),
            Err(Error::NonPositivePrediction { vertex: 0, bone: 1 })
        ));
    }

    #[test]
    fn lp_examples() {
        let one_hot = loss_lp(&m(&[&[1.0, 0.0, 0.0]]), 0.3).unwrap();
        let expected = (1.0 + LP_EPS).powf(0.15) + 2.0 * LP_EPS.powf(0.15);
        assert!((one_hot - expected).abs() < 1e-12);
        assert!((one_hot - 1.0).abs() < 0.04);
        let half = loss_lp(&m(&[&[0.5, 0.5]]), 0.3).unwrap();
        assert!((half - 2f64.powf(0.7)).abs() < 1e-9);
        assert!(loss_lp(&m(&[&[1.0]]), 0.0).is_err());
        let (v, g) = lp_with_grad(&m(&[&[0.0, 1.0]]), 0.3).unwrap();
        assert!(v.is_finite() && g.iter().all(|x| x.is_finite()));
    }

    fn mirrored() -> (SkinWeights, SymmetryMap) {
        let gt = sw(&[&[0.9, 0.1, 0.0], &[0.0, 0.1, 0.9], &[0.5, 0.0, 0.5], &[0.2, 0.6, 0.2]]);
        let map = SymmetryMap {
            matches: vec![Some(1), Some(0), Some(2), Some(3)],
        };
        (gt, map)
    }

    #[test]
    fn symmetry_pairs_examples() {
        let (gt, map) = mirrored();
        let pairs = build_symmetry_pairs(&gt, &map, 0.5, 1e-5).unwrap();
        assert_eq!(pairs, vec![(0, 2), (1, 1), (2, 0)]);
        let asym = sw(&[&[0.9, 0.1, 0.0], &[0.3, 0.1, 0.6], &[0.5, 0.0, 0.5], &[0.2, 0.6, 0.2]]);
        assert_eq!(build_symmetry_pairs(&asym, &map, 0.5, 1e-5).unwrap(), vec![(1, 1)]);
        let low = build_symmetry_pairs(&gt, &map, 1.0, 1e-5).unwrap();
        assert_eq!(low, vec![(0, 2), (2, 0)]);
        let rows: Vec<Vec<f64>> = (0..60).map(|i| if i < 25 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
        let big = SkinWeights::from_rows(&rows).unwrap();
        let all = SymmetryMap {
            matches: (0..60).map(Some).collect(),
        };
        let pairs = build_symmetry_pairs(&big, &all, 30.0, 1e-5).unwrap();
        assert_eq!(pairs, vec![(1, 1)]);
    }

    #[test]
    fn symmetry_loss_examples() {
        let (gt, map) = mirrored();
        let pairs = build_symmetry_pairs(&gt, &map, 0.5, 1e-5).unwrap();
        assert!(loss_symmetry(gt.matrix(), &pairs, &map).unwrap() <= 1e-5);
        assert_eq!(loss_symmetry(gt.matrix(), &[], &map).unwrap(), 0.0);
        let pred = m(&[&[0.4, 0.6], &[0.9, 0.1]]);
        let single = SymmetryMap {
            matches: vec![Some(1), None],
        };
        let v = loss_symmetry(&pred, &[(0, 1)], &single).unwrap();
        let expected = ((0.3f64 * 0.3 + SYM_EPS).sqrt() + SYM_EPS.sqrt()) / 2.0;
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.3 / 2.0).abs() < 1e-6);
    }

    #[test]
    fn total_loss_examples() {
        let (gt, map) = mirrored();
        let pairs = build_symmetry_pairs(&gt, &map, 0.5, 1e-5).unwrap();
        let pred = softmax_rows(&m(&[&[0.1, 0.2, 0.3], &[1.0, 0.0, -1.0], &[0.0, 0.0, 0.0], &[2.0, 1.0, 0.5]]));
        let pure = SkinLossWeights {
            lambda_p: 0.0,
            lambda_sym: 0.0,
            p: 0.3,
        };
        let t = total_skin_loss(&pred, &gt, &pairs, &map, &pure).unwrap();
        assert_eq!(t.total, loss_kl(&pred, &gt).unwrap());
        let w = SkinLossWeights::default();
        let wrong_shape = total_skin_loss(&pred, &sw(&[&[1.0]]), &[], &map, &w);
        assert!(matches!(wrong_shape, Err(Error::DimensionMismatch(_))));
        let gt_pos = sw(&[&[0.7, 0.3], &[0.3, 0.7]]);
        let map2 = SymmetryMap {
            matches: vec![Some(1), Some(0)],
        };
        let pairs2 = build_symmetry_pairs(&gt_pos, &map2, 0.5, 1e-5).unwrap();
        let t = total_skin_loss(gt_pos.matrix(), &gt_pos, &pairs2, &map2, &w).unwrap();
        let lp = loss_lp(gt_pos.matrix(), 0.3).unwrap();
        assert!((t.total - 0.1 * lp).abs() <= 0.05 * 1e-5 + 1e-15);
        let pred = m(&[&[0.6, 0.4], &[0.2, 0.8]]);
        let t = total_skin_loss(&pred, &gt_pos, &pairs2, &map2, &w).unwrap();
        let kl = (0.7 * (0.7f64 / 0.6).ln() + 0.3 * (0.3f64 / 0.4).ln() + 0.3 * (0.3f64 / 0.2).ln() + 0.7 * (0.7f64 / 0.8).ln()) / 2.0;
        let lp = (0.6f64.powf(0.3) + 0.4f64.powf(0.3) + 0.2f64.powf(0.3) + 0.8f64.powf(0.3)) / 2.0;
        let sym = (0.2f64 * 0.2 + 0.2 * 0.2).sqrt();
        assert!((t.kl - kl).abs() < 1e-12);
        assert!((t.lp - lp).abs() < 1e-9);
        assert!((t.sym - sym).abs() < 1e-9, "{} {sym}", t.sym);
        assert!((t.total - (kl + 0.1 * lp + 0.05 * sym)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(raw in proptest::collection::vec(0.01f64..1.0, 8), raw2 in proptest::collection::vec(0.0f64..1.0, 8)) {
            let norm = |v: &[f64]| -> Vec<f64> { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect() };
            let pred = DMatrix::from_row_slice(2, 4, &[norm(&raw[..4]), norm(&raw[4..])].concat());
            let g2 = [norm(&raw2[..4].iter().map(|x| x + 1e-3).collect::<Vec<_>>()), norm(&raw2[4..].iter().map(|x| x + 1e-3).collect::<Vec<_>>())].concat();
            let gt = SkinWeights::new(DMatrix::from_row_slice(2, 4, &g2)).unwrap();
            prop_assert!(loss_kl(&pred, &gt).unwrap() >= -1e-15);
        }

        #[test]
        fn uniform_row_maximizes_lp(raw in proptest::collection::vec(0.0f64..1.0, 5), p in 0.05f64..1.0) {
            let s: f64 = raw.iter().sum::<f64>() + 1e-9;
            let row = DMatrix::from_row_slice(1, 5, &raw.iter().map(|x| (x + 1e-9 / 5.0) / s).collect::<Vec<_>>());
            let uniform = DMatrix::from_element(1, 5, 0.2);
            prop_assert!(loss_lp(&row, p).unwrap() <= loss_lp(&uniform, p).unwrap() + 1e-9);
        }
    }
}
