use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::losses::{cross_entropy_with_grad, softmax_backward, softmax_rows};
use super::train::Adam;
use crate::coords::CoordinateMatrix;
use crate::error::{Error, Result};

/// Settings of [`overfit_cage_signal`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverfitParams {
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for OverfitParams {
    fn default() -> Self {
        Self {
            iterations: 4000,
            learning_rate: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitReport {
    /// Fraction of vertices whose argmax class matches the label.
    pub accuracy: f64,
    /// Accuracy restricted to each component id, indexed by id.
    pub component_accuracy: Vec<f64>,
    pub final_loss: f64,
    #[serde(skip)]
    pub cage_values: DMatrix<f64>,
}

/// Fits free per-cage-vertex logits so that `softmax(C · logits)` matches
/// per-vertex labels under cross-entropy, then reports argmax accuracy overall
/// and per component.
pub fn overfit_cage_signal(
    coords: &CoordinateMatrix,
    labels: &[usize],
    classes: usize,
    components: &[usize],
    params: &OverfitParams,
) -> Result<OverfitReport> {
    let n = coords.mesh_vertex_count();
    if labels.len() != n || components.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels and {} component ids for {n} vertices",
            labels.len(),
            components.len()
        )));
    }
    if classes == 0 {
        return Err(Error::InvalidArgument("need at least one class".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label: l, classes });
    }
    let c = &coords.entries;
    let ct = c.transpose();
    let m = coords.cage_vertex_count();
    let mut logits = vec![0.0; m * classes];
    let mut adam = Adam::new(logits.len());
    let mut final_loss = f64::NAN;
    for _ in 0..params.iterations {
        let y = DMatrix::from_column_slice(m, classes, &logits);
        let probs = softmax_rows(&(c * &y));
        let (loss, g) = cross_entropy_with_grad(&probs, labels)?;
        final_loss = loss;
        let grad = &ct * softmax_backward(&probs, &g);
        adam.step(&mut logits, grad.as_slice(), params.learning_rate);
    }
    let cage_values = DMatrix::from_column_slice(m, classes, &logits);
    let mapped = c * &cage_values;
    if params.iterations == 0 || !final_loss.is_finite() {
        final_loss = cross_entropy_with_grad(&softmax_rows(&mapped), labels)?.0;
    }
    let correct: Vec<bool> = (0..n)
        .map(|i| {
            let row = mapped.row(i);
            let mut best = 0;
            for j in 1..classes {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best == labels[i]
        })
        .collect();
    let accuracy = if n > 0 {
        correct.iter().filter(|&&x| x).count() as f64 / n as f64
    } else {
        1.0
    };
    let ncomp = components.iter().copied().max().map_or(0, |x| x + 1);
    let mut hits = vec![0usize; ncomp];
    let mut totals = vec![0usize; ncomp];
    for (i, &comp) in components.iter().enumerate() {
        totals[comp] += 1;
        hits[comp] += correct[i] as usize;
    }
    let component_accuracy = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| if t > 0 { h as f64 / t as f64 } else { 1.0 })
        .collect();
    Ok(OverfitReport {
        accuracy,
        component_accuracy,
        final_loss,
        cage_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cage::Cage;
    use crate::coords::compute_mvc_matrix;
    use crate::fixtures::shapes;
    use crate::Vec3;

    #[test]
    fn mesh_equal_to_cage_fits_any_labels() {
        let cage = Cage::from_mesh(shapes::icosphere(1, 1.0)).unwrap();
        let coords = compute_mvc_matrix(&cage.mesh, &cage).unwrap();
        let n = cage.mesh.vertex_count();
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % 3).collect();
        let report = overfit_cage_signal(&coords, &labels, 3, &vec![0; n], &OverfitParams {
            iterations: 300,
            learning_rate: 0.1,
        })
        .unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.component_accuracy, vec![1.0]);
    }

    #[test]
    fn smooth_labels_inside_a_cage() {
        let cage = Cage::from_mesh(shapes::box_mesh(Vec3::repeat(-1.0), Vec3::repeat(1.0), 3)).unwrap();
        let mesh = shapes::icosphere(2, 0.7);
        let coords = compute_mvc_matrix(&mesh, &cage).unwrap();
        let labels: Vec<usize> = mesh.positions.iter().map(|p| usize::from(p.x > 0.1)).collect();
        let comps = vec![0; mesh.vertex_count()];
        let report = overfit_cage_signal(&coords, &labels, 2, &comps, &OverfitParams::default()).unwrap();
        assert!(report.accuracy >= 0.99, "{}", report.accuracy);
        assert!(overfit_cage_signal(&coords, &labels, 1, &comps, &OverfitParams::default()).is_err());
    }
}
