use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::laplacian::{LaplaceOperator, SparseMatrix};
use super::set::FeatureSet;
use crate::error::{Error, Result};

/// Default number of eigenpairs.
pub const DEFAULT_EIGEN_COUNT: usize = 128;
/// Vertex count from which the shift-invert solver replaces the dense one.
pub const DENSE_LIMIT: usize = 3000;
/// Largest accepted relative eigen-residual.
pub const EIGEN_TOLERANCE: f64 = 1e-6;

/// Which generalized eigensolver to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSolver {
    /// Dense below [`DENSE_LIMIT`] vertices, shift-invert above.
    Auto,
    Dense,
    ShiftInvert,
}

/// The `k` lowest eigenpairs of `L φ = μ M φ`, ascending, with
/// `φᵀ M φ = I`. Each eigenvector is signed so its largest-magnitude entry
/// (lowest index on ties) is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    pub eigenvalues: Vec<f64>,
    /// `ñ_V x k`, one eigenvector per column.
    pub eigenvectors: DMatrix<f64>,
    pub mass: Vec<f64>,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Largest deviation of `φᵀ M φ` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let phi = &self.eigenvectors;
        let m = DVector::from_column_slice(&self.mass);
        let mphi = DMatrix::from_fn(phi.nrows(), phi.ncols(), |i, j| m[i] * phi[(i, j)]);
        let gram = phi.transpose() * mphi;
        (gram - DMatrix::identity(self.len(), self.len())).abs().max()
    }

    /// Largest relative residual `‖Lφ − μMφ‖ / (scale · ‖φ‖)`, with `scale`
    /// the largest stiffness diagonal entry plus `|μ|` times the largest mass.
    pub fn max_residual(&self, stiffness: &SparseMatrix) -> f64 {
        residuals(stiffness, &self.mass, &self.eigenvalues, &self.eigenvectors)
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn residuals(l: &SparseMatrix, mass: &[f64], mu: &[f64], phi: &DMatrix<f64>) -> Vec<f64> {
    let n = l.dim();
    let lmax = l.diagonal().into_iter().fold(0.0, f64::max);
    let mmax = mass.iter().copied().fold(0.0, f64::max);
    (0..mu.len())
        .into_par_iter()
        .map(|c| {
            let x: Vec<f64> = phi.column(c).iter().copied().collect();
            let mut lx = vec![0.0; n];
            l.mul_vec(&x, &mut lx);
            let r: f64 = (0..n)
                .map(|i| (lx[i] - mu[c] * mass[i] * x[i]).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            r / ((lmax + mu[c].abs() * mmax) * norm).max(f64::MIN_POSITIVE)
        })
        .collect()
}

fn fix_signs(phi: &mut DMatrix<f64>) {
    for mut col in phi.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn dense_pairs(op: &LaplaceOperator, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = op.mass.len();
    let inv_sqrt: Vec<f64> = op.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut a = faer::Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in op.stiffness.row(i) {
            a[(i, j)] = v * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let evd = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::EigenConvergence { residual: f64::NAN })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values = (0..k).map(|c| s[c]).collect();
    let vectors = DMatrix::from_fn(n, k, |i, c| u[(i, c)] * inv_sqrt[i]);
    Ok((values, vectors))
}

/// Jacobi-preconditioned conjugate gradients on `(L + σM) x = b`.
fn shifted_cg(l: &SparseMatrix, mass: &[f64], sigma: f64, b: &[f64], tol: f64) -> Vec<f64> {
    let n = b.len();
    let diag: Vec<f64> = l
        .diagonal()
        .iter()
        .zip(mass)
        .map(|(d, m)| d + sigma * m)
        .collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        l.mul_vec(x, out);
        for i in 0..n {
            out[i] += sigma * mass[i] * x[i];
        }
    };
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return x;
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..10 * n.max(100) {
        apply(&p, &mut ap);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= tol * bnorm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Rayleigh-Ritz on the span of `y`: returns ascending Ritz values and the
/// M-orthonormal Ritz vectors.
fn rayleigh_ritz(op: &LaplaceOperator, y: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (n, b) = y.shape();
    let sqrt_m: Vec<f64> = op.mass.iter().map(|m| m.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, b, |i, c| sqrt_m[i] * y[(i, c)]);
    let mut q = scaled.qr().q();
    q = q.clone().qr().q();
    let basis = DMatrix::from_fn(n, b, |i, c| q[(i, c)] / sqrt_m[i]);
    let cols: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|c| {
            let x: Vec<f64> = basis.column(c).iter().copied().collect();
            let mut out = vec![0.0; n];
            op.stiffness.mul_vec(&x, &mut out);
            out
        })
        .collect();
    let lb = DMatrix::from_fn(n, b, |i, c| cols[c][i]);
    let a = basis.transpose() * lb;
    let a = (&a + a.transpose()) * 0.5;
    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let z = DMatrix::from_fn(b, b, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, basis * z))
}

fn shift_invert_pairs(op: &LaplaceOperator, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = op.mass.len();
    let block = (k + (k / 2).max(8)).min(n);
    let total_mass: f64 = op.mass.iter().sum();
    let lmean = op.stiffness.diagonal().iter().sum::<f64>() / n as f64;
    let sigma = 1e-3 * lmean * n as f64 / total_mass;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut x = DMatrix::from_fn(n, block, |_, _| rng.random::<f64>() - 0.5);
    let mut best = f64::INFINITY;
    for _ in 0..300 {
        let cols: Vec<Vec<f64>> = (0..block)
            .into_par_iter()
            .map(|c| {
                let rhs: Vec<f64> = (0..n).map(|i| op.mass[i] * x[(i, c)]).collect();
                shifted_cg(&op.stiffness, &op.mass, sigma, &rhs, 1e-12)
            })
            .collect();
        let y = DMatrix::from_fn(n, block, |i, c| cols[c][i]);
        let (values, vectors) = rayleigh_ritz(op, &y)?;
        x = vectors;
        let res = residuals(&op.stiffness, &op.mass, &values[..k], &x.columns(0, k).into_owned());
        let worst = res.into_iter().fold(0.0, f64::max);
        best = best.min(worst);
        if worst <= 0.1 * EIGEN_TOLERANCE {
            return Ok((values[..k].to_vec(), x.columns(0, k).into_owned()));
        }
    }
    Err(Error::EigenConvergence { residual: best })
}

/// The `k` lowest generalized eigenpairs of the cotangent operator. `k` is
/// clamped to `ñ_V − 1`.
pub fn eigenbasis(op: &LaplaceOperator, k: usize, solver: EigenSolver) -> Result<SpectralBasis> {
    let n = op.mass.len();
    if n < 2 {
        return Err(Error::InvalidArgument("eigenbasis needs at least two vertices".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("eigenbasis needs k >= 1".into()));
    }
    let k = k.min(n - 1);
    let dense = match solver {
        EigenSolver::Auto => n < DENSE_LIMIT,
        EigenSolver::Dense => true,
        EigenSolver::ShiftInvert => false,
    };
    let (mut values, mut vectors) = if dense {
        dense_pairs(op, k)?
    } else {
        shift_invert_pairs(op, k)?
    };
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    fix_signs(&mut vectors);
    let basis = SpectralBasis {
        eigenvalues: values,
        eigenvectors: vectors,
        mass: op.mass.clone(),
    };
    let residual = basis.max_residual(&op.stiffness);
    if !(residual <= EIGEN_TOLERANCE) || basis.orthonormality_error() > EIGEN_TOLERANCE {
        return Err(Error::EigenConvergence { residual });
    }
    Ok(basis)
}

/// `count` diffusion times logarithmically spaced on `[lo, hi]`.
pub fn log_spaced_times(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// The default 16 diffusion times on `[0.01, 1]`.
pub fn default_hks_times() -> Vec<f64> {
    log_spaced_times(0.01, 1.0, 16)
}

/// Heat kernel signature `Σ_i exp(−μ_i t) φ_i(v)²`, one channel per time.
pub fn hks_features(basis: &SpectralBasis, times: &[f64]) -> Result<FeatureSet> {
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument("diffusion times must be positive and finite".into()));
    }
    let phi = &basis.eigenvectors;
    let n = phi.nrows();
    let values = DMatrix::from_fn(n, times.len(), |v, c| {
        basis
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, mu)| (-mu * times[c]).exp() * phi[(v, i)] * phi[(v, i)])
            .sum()
    });
    let labels = times.iter().map(|t| format!("hks_{t:.6}")).collect();
    FeatureSet::new(values, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::cotan_laplacian_mass;
    use crate::fixtures::shapes;
    use crate::Vec3;

    #[test]
    fn sphere_spectrum_matches_spherical_harmonics() {
        let sphere = shapes::icosphere(4, 1.0);
        assert_eq!(sphere.vertex_count(), 2562);
        let op = cotan_laplacian_mass(&sphere).unwrap();
        let basis = eigenbasis(&op, 16, EigenSolver::Auto).unwrap();
        assert!(basis.eigenvalues[0].abs() <= 1e-8 * basis.eigenvalues[1]);
        let mut idx = 1;
        for l in 1..=3usize {
            let exact = (l * (l + 1)) as f64;
            for _ in 0..2 * l + 1 {
                let mu = basis.eigenvalues[idx];
                assert!((mu - exact).abs() <= 0.05 * exact, "l={l}: {mu}");
                idx += 1;
            }
        }
        let c = basis.eigenvectors.column(0);
        assert!(c.iter().all(|&x| (x - c[0]).abs() < 1e-8 && x > 0.0));
    }

    #[test]
    fn k_is_clamped_and_k1_is_constant() {
        let tet = shapes::tetrahedron(1.0);
        let op = cotan_laplacian_mass(&tet).unwrap();
        assert_eq!(eigenbasis(&op, 128, EigenSolver::Auto).unwrap().len(), 3);
        let one = eigenbasis(&op, 1, EigenSolver::Auto).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.eigenvalues[0] < 1e-12);
        assert!(eigenbasis(&op, 0, EigenSolver::Auto).is_err());
    }

    #[test]
    fn shift_invert_agrees_with_dense() {
        let mesh = shapes::torus(1.0, 0.4, 20, 10);
        let op = cotan_laplacian_mass(&mesh).unwrap();
        let a = eigenbasis(&op, 12, EigenSolver::Dense).unwrap();
        let b = eigenbasis(&op, 12, EigenSolver::ShiftInvert).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()), "{x} vs {y}");
        }
        assert!(b.orthonormality_error() < 1e-6);
    }

    #[test]
    fn hks_is_positive_decreasing_and_rigid_invariant() {
        let mesh = shapes::tube(
            &[Vec3::zeros(), Vec3::new(1.0, 0.2, 0.0), Vec3::new(1.6, 1.0, 0.3)],
            &[0.3, 0.2, 0.35],
            12,
        );
        let times = default_hks_times();
        assert_eq!(times.len(), 16);
        assert!((times[0] - 0.01).abs() < 1e-15 && (times[15] - 1.0).abs() < 1e-12);
        let op = cotan_laplacian_mass(&mesh).unwrap();
        let h = hks_features(&eigenbasis(&op, 128, EigenSolver::Auto).unwrap(), &times).unwrap();
        for row in h.values.row_iter() {
            assert!(row.iter().all(|&x| x > 0.0));
            for c in 1..row.len() {
                assert!(row[c] < row[c - 1]);
            }
        }
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let moved = mesh.mapped(|p| rot * p + Vec3::new(4.0, -2.0, 0.5));
        let op2 = cotan_laplacian_mass(&moved).unwrap();
        let h2 = hks_features(&eigenbasis(&op2, 128, EigenSolver::Auto).unwrap(), &times).unwrap();
        let diff = (&h.values - &h2.values).abs().max();
        assert!(diff <= 1e-6, "{diff}");
    }

    #[test]
    fn hks_on_sphere_is_nearly_constant() {
        let sphere = shapes::icosphere(4, 1.0);
        let op = cotan_laplacian_mass(&sphere).unwrap();
        let basis = eigenbasis(&op, 25, EigenSolver::Auto).unwrap();
        let h = hks_features(&basis, &default_hks_times()).unwrap();
        for col in h.values.column_iter() {
            let (lo, hi) = (col.min(), col.max());
            assert!(hi / lo - 1.0 <= 0.01, "{lo} {hi}");
        }
    }
}
