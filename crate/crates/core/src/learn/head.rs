use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::features::LaplaceOperator;

const MAGIC: &[u8; 4] = b"HED1";

/// Per-vertex two-layer predictor `d -> h -> out` with a `tanh` between,
/// followed by explicit diffusion steps `ỹ ← ỹ − τ M⁻¹ L ỹ` on the cage.
///
/// `τ` is `smoothing_rate / max_i(L_ii / M_ii)` for the cage at hand, which
/// keeps every step stable on any cage.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorHead {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub smoothing_steps: usize,
    pub smoothing_rate: f64,
    /// `W1` (h x d, row-major), `b1`, `W2` (out x h, row-major), `b2`.
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: DMatrix<f64>,
    pub hidden: DMatrix<f64>,
    pub output: DMatrix<f64>,
    tau: f64,
}

impl PredictorHead {
    /// Xavier-uniform weights from a seeded generator, zero biases.
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        smoothing_steps: usize,
        smoothing_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut head = Self::zeros(input_dim, hidden_dim, output_dim, smoothing_steps, smoothing_rate)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let a2 = (6.0 / (hidden_dim + output_dim) as f64).sqrt();
        let (w1, rest) = head.params.split_at_mut(hidden_dim * input_dim);
        for w in w1.iter_mut() {
            *w = rng.random_range(-a1..a1);
        }
        let w2 = &mut rest[hidden_dim..hidden_dim + output_dim * hidden_dim];
        for w in w2.iter_mut() {
            *w = rng.random_range(-a2..a2);
        }
        Ok(head)
    }

    pub fn zeros(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        smoothing_steps: usize,
        smoothing_rate: f64,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "head dims {input_dim}->{hidden_dim}->{output_dim} must be positive"
            )));
        }
        if !(0.0..=0.5).contains(&smoothing_rate) {
            return Err(Error::InvalidArgument(format!(
                "smoothing rate {smoothing_rate} outside [0, 0.5]"
            )));
        }
        let len = hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim;
        Ok(Self {
            input_dim,
            hidden_dim,
            output_dim,
            smoothing_steps,
            smoothing_rate,
            params: vec![0.0; len],
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for a head with {}",
                params.len(),
                self.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("head parameters must be finite".into()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn offsets(&self) -> [usize; 4] {
        let (d, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        [0, h * d, h * d + h, h * d + h + o * h]
    }

    pub fn w1(&self) -> DMatrix<f64> {
        let [a, b, _, _] = self.offsets();
        DMatrix::from_row_slice(self.hidden_dim, self.input_dim, &self.params[a..b])
    }

    pub fn b1(&self) -> DVector<f64> {
        let [_, b, c, _] = self.offsets();
        DVector::from_column_slice(&self.params[b..c])
    }

    pub fn w2(&self) -> DMatrix<f64> {
        let [_, _, c, d] = self.offsets();
        DMatrix::from_row_slice(self.output_dim, self.hidden_dim, &self.params[c..d])
    }

    pub fn b2(&self) -> DVector<f64> {
        let [_, _, _, d] = self.offsets();
        DVector::from_column_slice(&self.params[d..])
    }

    fn tau(&self, laplace: Option<&LaplaceOperator>) -> Result<f64> {
        if self.smoothing_steps == 0 || self.smoothing_rate == 0.0 {
            return Ok(0.0);
        }
        let op = laplace.ok_or_else(|| {
            Error::InvalidArgument("smoothing steps need the cage Laplacian".into())
        })?;
        let rate = op
            .stiffness
            .diagonal()
            .iter()
            .zip(&op.mass)
            .map(|(l, m)| l / m)
            .fold(0.0, f64::max);
        Ok(if rate > 0.0 { self.smoothing_rate / rate } else { 0.0 })
    }

    /// Runs the head on cage features (`ñ_V x d`) and returns the cage values
    /// (`ñ_V x out`) together with the cached activations.
    pub fn forward(
        &self,
        features: &DMatrix<f64>,
        laplace: Option<&LaplaceOperator>,
    ) -> Result<ForwardCache> {
        if features.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "features have {} channels, head expects {}",
                features.ncols(),
                self.input_dim
            )));
        }
        if let Some(op) = laplace {
            if op.mass.len() != features.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "Laplacian has {} vertices, features {}",
                    op.mass.len(),
                    features.nrows()
                )));
            }
        }
        let tau = self.tau(laplace)?;
        let n = features.nrows();
        let (b1, b2) = (self.b1(), self.b2());
        let mut hidden = features * self.w1().transpose();
        for i in 0..n {
            for j in 0..self.hidden_dim {
                hidden[(i, j)] = (hidden[(i, j)] + b1[j]).tanh();
            }
        }
        let mut output = &hidden * self.w2().transpose();
        for i in 0..n {
            for j in 0..self.output_dim {
                output[(i, j)] += b2[j];
            }
        }
        if tau > 0.0 {
            let op = laplace.expect("tau > 0 implies a Laplacian");
            for _ in 0..self.smoothing_steps {
                output = smooth_step(op, &output, tau, false);
            }
        }
        Ok(ForwardCache {
            input: features.clone(),
            hidden,
            output,
            tau,
        })
    }

    /// Gradient of a scalar loss with respect to the flat parameter vector,
    /// given its gradient with respect to the cage values.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &DMatrix<f64>,
        laplace: Option<&LaplaceOperator>,
    ) -> Result<Vec<f64>> {
        if grad_output.shape() != cache.output.shape() {
            return Err(Error::DimensionMismatch(format!(
                "output gradient {:?} for output {:?}",
                grad_output.shape(),
                cache.output.shape()
            )));
        }
        let mut g = grad_output.clone();
        if cache.tau > 0.0 {
            let op = laplace.ok_or_else(|| {
                Error::InvalidArgument("smoothing steps need the cage Laplacian".into())
            })?;
            for _ in 0..self.smoothing_steps {
                g = smooth_step(op, &g, cache.tau, true);
            }
        }
        let d_w2 = g.transpose() * &cache.hidden;
        let d_b2: Vec<f64> = g.column_iter().map(|c| c.sum()).collect();
        let mut d_hidden = &g * self.w2();
        for (dz, a) in d_hidden.iter_mut().zip(cache.hidden.iter()) {
            *dz *= 1.0 - a * a;
        }
        let d_w1 = d_hidden.transpose() * &cache.input;
        let d_b1: Vec<f64> = d_hidden.column_iter().map(|c| c.sum()).collect();
        let mut out = Vec::with_capacity(self.params.len());
        for i in 0..self.hidden_dim {
            out.extend(d_w1.row(i).iter());
        }
        out.extend(d_b1);
        for i in 0..self.output_dim {
            out.extend(d_w2.row(i).iter());
        }
        out.extend(d_b2);
        Ok(out)
    }

    /// `HED1` layout: magic, `d`, `h`, `out` and the smoothing step count as
    /// u32, the smoothing rate as f64, then every parameter as f64
    /// (`W1` row-major, `b1`, `W2` row-major, `b2`), little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC);
        w.u32(self.input_dim as u32)
            .u32(self.hidden_dim as u32)
            .u32(self.output_dim as u32)
            .u32(self.smoothing_steps as u32)
            .f64(self.smoothing_rate);
        for &p in &self.params {
            w.f64(p);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data, MAGIC)?;
        let d = r.u32()? as usize;
        let h = r.u32()? as usize;
        let o = r.u32()? as usize;
        let steps = r.u32()? as usize;
        let rate = r.f64()?;
        let mut head = Self::zeros(d, h, o, steps, rate)?;
        let mut params = Vec::with_capacity(head.param_count());
        for _ in 0..head.param_count() {
            params.push(r.f64()?);
        }
        r.finish()?;
        head.set_params(&params)?;
        Ok(head)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

/// One explicit diffusion step `Y − τ M⁻¹ L Y`, or its transpose
/// `Y − τ L M⁻¹ Y` for backpropagation.
fn smooth_step(op: &LaplaceOperator, y: &DMatrix<f64>, tau: f64, transpose: bool) -> DMatrix<f64> {
    let (n, c) = y.shape();
    let mut out = y.clone();
    for col in 0..c {
        let x: Vec<f64> = if transpose {
            (0..n).map(|i| y[(i, col)] / op.mass[i]).collect()
        } else {
            y.column(col).iter().copied().collect()
        };
        let mut lx = vec![0.0; n];
        op.stiffness.mul_vec(&x, &mut lx);
        for i in 0..n {
            let step = if transpose { lx[i] } else { lx[i] / op.mass[i] };
            out[(i, col)] -= tau * step;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::cotan_laplacian_mass;
    use crate::fixtures::shapes;

    fn setup() -> (LaplaceOperator, DMatrix<f64>) {
        let cage = shapes::icosphere(1, 1.0);
        let op = cotan_laplacian_mass(&cage).unwrap();
        let x = DMatrix::from_fn(cage.vertex_count(), 3, |i, j| cage.positions[i][j]);
        (op, x)
    }

    #[test]
    fn zero_head_outputs_zero() {
        let (op, x) = setup();
        let head = PredictorHead::zeros(3, 4, 2, 3, 0.25).unwrap();
        let out = head.forward(&x, Some(&op)).unwrap();
        assert!(out.output.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothing_keeps_constants_and_contracts_spikes() {
        let (op, _) = setup();
        let n = op.mass.len();
        let constant = DMatrix::from_element(n, 1, 3.0);
        let out = smooth_step(&op, &constant, 0.01, false);
        assert!((out - constant).abs().max() < 1e-12);
        let head = PredictorHead::zeros(1, 1, 1, 1, 0.25).unwrap();
        let tau = head.tau(Some(&op)).unwrap();
        let mut spike = DMatrix::zeros(n, 1);
        spike[(5, 0)] = 1.0;
        let out = smooth_step(&op, &spike, tau, false);
        assert!(out.abs().max() < 1.0);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let (op, x) = setup();
        let head = PredictorHead::zeros(4, 4, 2, 0, 0.0).unwrap();
        assert!(matches!(head.forward(&x, Some(&op)), Err(Error::DimensionMismatch(_))));
        assert!(PredictorHead::zeros(3, 0, 2, 0, 0.0).is_err());
        let smoothing = PredictorHead::zeros(3, 4, 2, 1, 0.25).unwrap();
        assert!(smoothing.forward(&x, None).is_err());
    }

    #[test]
    fn hed1_round_trip() {
        let head = PredictorHead::new(3, 5, 2, 2, 0.25, 7).unwrap();
        let bytes = head.to_bytes();
        assert_eq!(&bytes[..4], b"HED1");
        assert_eq!(bytes.len(), 4 + 16 + 8 + 8 * head.param_count());
        assert_eq!(PredictorHead::from_bytes(&bytes).unwrap(), head);
        assert_eq!(PredictorHead::new(3, 5, 2, 2, 0.25, 7).unwrap(), head);
        assert_ne!(PredictorHead::new(3, 5, 2, 2, 0.25, 8).unwrap(), head);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (op, x) = setup();
        let head = PredictorHead::new(3, 6, 2, 2, 0.3, 1).unwrap();
        let target = DMatrix::from_fn(x.nrows(), 2, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1);
        let loss = |h: &PredictorHead| {
            let y = h.forward(&x, Some(&op)).unwrap().output;
            0.5 * (y - &target).norm_squared()
        };
        let cache = head.forward(&x, Some(&op)).unwrap();
        let grad = head.backward(&cache, &(&cache.output - &target), Some(&op)).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..head.param_count() {
            let mut p = head.params().to_vec();
            let step = 1e-6 * p[i].abs().max(1.0);
            p[i] += step;
            let mut hp = head.clone();
            hp.set_params(&p).unwrap();
            p[i] -= 2.0 * step;
            let mut hm = head.clone();
            hm.set_params(&p).unwrap();
            let fd = (loss(&hp) - loss(&hm)) / (2.0 * step);
            worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6));
        }
        assert!(worst < 1e-5, "{worst}");
    }
}
