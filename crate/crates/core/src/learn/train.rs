use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{ForwardCache, PredictorHead};
use super::losses::{
    cross_entropy_with_grad, softmax_backward, softmax_rows, total_skin_loss_with_grad,
    LossBreakdown, SkinLossWeights,
};
use crate::coords::CoordinateMatrix;
use crate::error::{Error, Result};
use crate::features::{cotan_laplacian_mass, FeatureSet, LaplaceOperator};
use crate::mesh::TriangleMesh;
use crate::skin::{SkinWeights, SymmetryMap};

/// Optimization and loss settings, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// The learning rate is multiplied by `decay_factor` every `decay_every`
    /// epochs.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub seed: u64,
    pub loss: SkinLossWeights,
    pub symmetry_delta: f64,
    pub symmetry_epsilon: f64,
    /// Cage offsets generated per mesh; one is drawn per mesh and epoch.
    pub augmentation_offsets: Vec<f64>,
    pub hidden_dim: usize,
    pub smoothing_steps: usize,
    pub smoothing_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            decay_every: 50,
            decay_factor: 0.5,
            seed: 0,
            loss: SkinLossWeights::default(),
            symmetry_delta: 30.0,
            symmetry_epsilon: 1e-5,
            augmentation_offsets: vec![0.02],
            hidden_dim: 32,
            smoothing_steps: 2,
            smoothing_rate: 0.25,
        }
    }
}

impl TrainConfig {
    /// Defaults with the segmentation learning rate.
    pub fn segmentation() -> Self {
        Self {
            learning_rate: 5e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.loss;
        if !(l.p > 0.0 && l.p <= 1.0) {
            return Err(Error::InvalidArgument(format!("L_p exponent {} outside (0, 1]", l.p)));
        }
        if !(l.lambda_p >= 0.0 && l.lambda_sym >= 0.0) {
            return Err(Error::InvalidArgument("loss weights must be nonnegative".into()));
        }
        if !(self.learning_rate > 0.0) || self.decay_every == 0 || !(self.decay_factor > 0.0) {
            return Err(Error::InvalidArgument("invalid learning-rate schedule".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidArgument("hidden width must be at least 1".into()));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// What the mesh-level outputs represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Face class probabilities.
    Segmentation,
    /// Per-vertex skinning weights.
    Skinning,
}

/// Everything the learner needs about one cage of one mesh.
#[derive(Debug, Clone)]
pub struct CageSample {
    pub coords: CoordinateMatrix,
    /// Standardized cage features, `ñ_V x d`.
    pub features: DMatrix<f64>,
    pub laplace: LaplaceOperator,
}

impl CageSample {
    /// Checks that `coords` belong to this mesh/cage pair and that the
    /// features cover the cage vertices.
    pub fn new(
        mesh: &TriangleMesh,
        cage: &TriangleMesh,
        coords: CoordinateMatrix,
        features: &FeatureSet,
    ) -> Result<Self> {
        coords.check_digests(mesh, cage)?;
        if features.vertex_count() != cage.vertex_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for a cage with {} vertices",
                features.vertex_count(),
                cage.vertex_count()
            )));
        }
        Ok(Self {
            coords,
            features: features.values.clone(),
            laplace: cotan_laplacian_mass(cage)?,
        })
    }
}

/// Ground truth on the input mesh.
#[derive(Debug, Clone)]
pub enum Target {
    Segmentation {
        faces: Vec<[usize; 3]>,
        labels: Vec<usize>,
        classes: usize,
    },
    Skinning {
        gt: SkinWeights,
        symmetry: SymmetryMap,
        pairs: Vec<(usize, usize)>,
    },
}

impl Target {
    pub fn output_dim(&self) -> usize {
        match self {
            Target::Segmentation { classes, .. } => *classes,
            Target::Skinning { gt, .. } => gt.bone_count(),
        }
    }
}

/// One training mesh with its cage family.
#[derive(Debug, Clone)]
pub struct TrainingMesh {
    pub cages: Vec<CageSample>,
    pub target: Target,
}

fn face_average(faces: &[[usize; 3]], v: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(faces.len(), v.ncols(), |f, c| {
        let [a, b, e] = faces[f];
        (v[(a, c)] + v[(b, c)] + v[(e, c)]) / 3.0
    })
}

fn face_average_backward(faces: &[[usize; 3]], n: usize, g: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, g.ncols());
    for (f, tri) in faces.iter().enumerate() {
        for &v in tri {
            for c in 0..g.ncols() {
                out[(v, c)] += g[(f, c)] / 3.0;
            }
        }
    }
    out
}

fn forward_sample(head: &PredictorHead, sample: &CageSample) -> Result<(ForwardCache, DMatrix<f64>)> {
    if sample.coords.cage_vertex_count() != sample.features.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "coordinates span {} cage vertices, features {}",
            sample.coords.cage_vertex_count(),
            sample.features.nrows()
        )));
    }
    let cache = head.forward(&sample.features, Some(&sample.laplace))?;
    let mesh_values = &sample.coords.entries * &cache.output;
    Ok((cache, mesh_values))
}

/// Runs the head on the cage and carries the result to the input mesh:
/// face class probabilities for segmentation, skinning weights otherwise.
pub fn predict_mesh(
    head: &PredictorHead,
    mesh: &TriangleMesh,
    cage: &TriangleMesh,
    sample: &CageSample,
    task: Task,
) -> Result<DMatrix<f64>> {
    sample.coords.check_digests(mesh, cage)?;
    let (_, values) = forward_sample(head, sample)?;
    Ok(match task {
        Task::Segmentation => softmax_rows(&face_average(&mesh.faces, &values)),
        Task::Skinning => softmax_rows(&values),
    })
}

/// Loss on the input mesh and its gradient with respect to the head
/// parameters, backpropagated through softmax, the mapping operator, the
/// smoothing steps and the head.
pub fn loss_and_gradient(
    head: &PredictorHead,
    sample: &CageSample,
    target: &Target,
    weights: &SkinLossWeights,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let (cache, values) = forward_sample(head, sample)?;
    let n = values.nrows();
    let (breakdown, grad_values) = match target {
        Target::Segmentation { faces, labels, .. } => {
            let probs = softmax_rows(&face_average(faces, &values));
            let (ce, g) = cross_entropy_with_grad(&probs, labels)?;
            let g_logits = softmax_backward(&probs, &g);
            (
                LossBreakdown {
                    total: ce,
                    ..Default::default()
                },
                face_average_backward(faces, n, &g_logits),
            )
        }
        Target::Skinning { gt, symmetry, pairs } => {
            let probs = softmax_rows(&values);
            let (b, g) = total_skin_loss_with_grad(&probs, gt, pairs, symmetry, weights)?;
            (b, softmax_backward(&probs, &g))
        }
    };
    let grad_cage = sample.coords.entries.transpose() * grad_values;
    let grad = head.backward(&cache, &grad_cage, Some(&sample.laplace))?;
    Ok((breakdown, grad))
}

/// First/second-moment adaptive step.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mean loss terms of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

/// `epoch,total,kl,lp,sym` with one row per epoch.
pub fn loss_curve_csv(curve: &[LossRecord]) -> String {
    let mut out = String::from("epoch,total,kl,lp,sym\n");
    for r in curve {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.loss.total, r.loss.kl, r.loss.lp, r.loss.sym
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: PredictorHead,
    pub curve: Vec<LossRecord>,
    /// Cage index drawn for every epoch (outer) and mesh (inner).
    pub cage_choices: Vec<Vec<usize>>,
}

/// Optimizes `head` over the dataset, one adaptive step per mesh per epoch.
/// Each mesh draws one of its cages per epoch from a generator seeded by
/// `config.seed`.
pub fn train(head: PredictorHead, data: &[TrainingMesh], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    for (i, m) in data.iter().enumerate() {
        if m.cages.is_empty() {
            return Err(Error::InvalidArgument(format!("training mesh {i} has no cage")));
        }
        if m.target.output_dim() != head.output_dim {
            return Err(Error::DimensionMismatch(format!(
                "training mesh {i} needs {} outputs, head has {}",
                m.target.output_dim(),
                head.output_dim
            )));
        }
    }
    let mut head = head;
    let mut params = head.params().to_vec();
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut cage_choices = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        let mut sum = LossBreakdown::default();
        let mut choices = Vec::with_capacity(data.len());
        for (mesh_id, m) in data.iter().enumerate() {
            let c = rng.random_range(0..m.cages.len());
            choices.push(c);
            let (loss, grad) = loss_and_gradient(&head, &m.cages[c], &m.target, &config.loss)?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NanLoss { epoch, mesh: mesh_id });
            }
            sum.total += loss.total;
            sum.kl += loss.kl;
            sum.lp += loss.lp;
            sum.sym += loss.sym;
            adam.step(&mut params, &grad, lr);
            head.set_params(&params)?;
        }
        let k = data.len() as f64;
        curve.push(LossRecord {
            epoch,
            loss: LossBreakdown {
                total: sum.total / k,
                kl: sum.kl / k,
                lp: sum.lp / k,
                sym: sum.sym / k,
            },
        });
        cage_choices.push(choices);
        log::debug!("epoch {epoch}: loss {:.6}", sum.total / k);
    }
    Ok(TrainOutcome {
        head,
        curve,
        cage_choices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cage::Cage;
    use crate::coords::compute_mvc_matrix;
    use crate::features::{position_features, Standardizer};
    use crate::fixtures::shapes;
    use crate::mesh::make_soup;
    use crate::Vec3;

    fn segmentation_setup() -> (TriangleMesh, TriangleMesh, CageSample, Target) {
        let mesh = shapes::icosphere(2, 0.8);
        let cage = shapes::icosphere(1, 1.0);
        let coords = compute_mvc_matrix(&mesh, &Cage::from_mesh(cage.clone()).unwrap()).unwrap();
        let feats = position_features(&cage).unwrap();
        let std = Standardizer::fit(&[&feats]).unwrap().apply(&feats).unwrap();
        let sample = CageSample::new(&mesh, &cage, coords, &std).unwrap();
        let labels = (0..mesh.face_count())
            .map(|f| {
                let c: Vec3 = mesh.triangle(f).iter().sum::<Vec3>() / 3.0;
                usize::from(c.z > 0.0)
            })
            .collect();
        let target = Target::Segmentation {
            faces: mesh.faces.clone(),
            labels,
            classes: 2,
        };
        (mesh, cage, sample, target)
    }

    #[test]
    fn config_json_and_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 200);
        assert_eq!(c.learning_rate_at(49), 1e-3);
        assert_eq!(c.learning_rate_at(50), 5e-4);
        assert_eq!(c.learning_rate_at(120), 2.5e-4);
        assert_eq!(TrainConfig::segmentation().learning_rate, 5e-4);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), c);
        let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        let mut bad = c.clone();
        bad.loss.p = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn predictions_are_distributions_and_soup_invariant() {
        let (mesh, cage, sample, _) = segmentation_setup();
        let head = PredictorHead::new(3, 8, 3, 2, 0.25, 3).unwrap();
        let w = predict_mesh(&head, &mesh, &cage, &sample, Task::Skinning).unwrap();
        for r in w.row_iter() {
            assert!((r.sum() - 1.0).abs() <= 1e-12);
        }
        let zero = PredictorHead::zeros(3, 8, 3, 2, 0.25).unwrap();
        let u = predict_mesh(&zero, &mesh, &cage, &sample, Task::Segmentation).unwrap();
        assert!(u.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));

        let soup = make_soup(&mesh, 0.0, 0.5, 9).unwrap();
        let cage_obj = Cage::from_mesh(cage.clone()).unwrap();
        let feats = position_features(&cage).unwrap();
        let std = Standardizer::fit(&[&feats]).unwrap().apply(&feats).unwrap();
        let soup_sample = CageSample::new(&soup, &cage, compute_mvc_matrix(&soup, &cage_obj).unwrap(), &std).unwrap();
        let ws = predict_mesh(&head, &soup, &cage, &soup_sample, Task::Skinning).unwrap();
        let corr = crate::mesh::soup_correspondence(&mesh);
        for (i, &o) in corr.iter().enumerate() {
            assert!((ws.row(i) - w.row(o)).abs().max() <= 1e-9);
        }
        assert!(matches!(
            predict_mesh(&head, &soup, &cage, &sample, Task::Skinning),
            Err(Error::DigestMismatch(_))
        ));
    }

    #[test]
    fn segmentation_training_decreases_loss() {
        let (_, _, sample, target) = segmentation_setup();
        let config = TrainConfig {
            epochs: 120,
            learning_rate: 1e-2,
            ..TrainConfig::segmentation()
        };
        let head = PredictorHead::new(3, 16, 2, 1, 0.25, 0).unwrap();
        let data = [TrainingMesh {
            cages: vec![sample],
            target,
        }];
        let out = train(head, &data, &config).unwrap();
        let losses: Vec<f64> = out.curve.iter().map(|r| r.loss.total).collect();
        for e in 0..losses.len() - 20 {
            assert!(losses[e + 20] <= losses[e] + 1e-6, "epoch {e}: {} -> {}", losses[e], losses[e + 20]);
        }
        assert!(losses.last().unwrap() < &(0.5 * losses[0]));
        let csv = loss_curve_csv(&out.curve);
        assert!(csv.starts_with("epoch,total,kl,lp,sym\n0,"));
        assert_eq!(csv.lines().count(), 121);
    }

    #[test]
    fn seeded_cage_selection_is_reproducible() {
        let (_, _, sample, target) = segmentation_setup();
        let data = [TrainingMesh {
            cages: vec![sample.clone(), sample.clone(), sample],
            target,
        }];
        let run = |seed| {
            let config = TrainConfig {
                epochs: 12,
                seed,
                ..TrainConfig::segmentation()
            };
            train(PredictorHead::new(3, 4, 2, 0, 0.0, 0).unwrap(), &data, &config).unwrap()
        };
        let (a, b, c) = (run(1), run(1), run(2));
        assert_eq!(a.cage_choices, b.cage_choices);
        assert_eq!(a.head, b.head);
        assert_eq!(a.curve, b.curve);
        assert_ne!(a.cage_choices, c.cage_choices);

        let single = [TrainingMesh {
            cages: vec![data[0].cages[0].clone()],
            target: data[0].target.clone(),
        }];
        let config = TrainConfig {
            epochs: 5,
            ..TrainConfig::segmentation()
        };
        let x = train(PredictorHead::new(3, 4, 2, 0, 0.0, 0).unwrap(), &single, &config).unwrap();
        let y = train(PredictorHead::new(3, 4, 2, 0, 0.0, 0).unwrap(), &single, &TrainConfig { seed: 99, ..config }).unwrap();
        assert_eq!(x.head, y.head);
    }

    #[test]
    fn nan_features_abort_training() {
        let (_, _, mut sample, target) = segmentation_setup();
        sample.features[(0, 0)] = f64::NAN;
        let data = [TrainingMesh {
            cages: vec![sample],
            target,
        }];
        let config = TrainConfig {
            epochs: 2,
            ..TrainConfig::segmentation()
        };
        let r = train(PredictorHead::new(3, 4, 2, 0, 0.0, 0).unwrap(), &data, &config);
        assert!(matches!(r, Err(Error::NanLoss { epoch: 0, mesh: 0 })));
    }
}
