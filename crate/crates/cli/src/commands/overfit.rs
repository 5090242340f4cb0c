use cagekit::coords::{CoordinateMatrix, CoordinateMethod};
use cagekit::learn::{overfit_cage_signal, OverfitParams};
use cagekit::mesh::component_labels;
use cagekit::spatial::interior_components;
use serde::{Deserialize, Serialize};

use super::{digest_hex, load_mesh};
use crate::cli::OverfitArgs;
use crate::error::{CliError, Result};
use crate::io::{read_bytes, read_json, write_json};

/// Per-vertex class labels as stored next to fixture meshes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub classes: usize,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentAccuracy {
    pub id: usize,
    pub vertices: usize,
    pub accuracy: f64,
    /// Whether the component lies inside another closed component.
    pub interior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitSummary {
    pub method: CoordinateMethod,
    pub mesh_digest: String,
    pub cage_digest: String,
    pub classes: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub accuracy: f64,
    pub final_loss: f64,
    /// Accuracy over the vertices of interior components, when there are any.
    pub interior_accuracy: Option<f64>,
    pub components: Vec<ComponentAccuracy>,
}

pub fn run(args: &OverfitArgs) -> Result<()> {
    let mesh = load_mesh(&args.mesh)?;
    let labels: LabelsFile = read_json(&args.labels)?;
    let cage = load_mesh(&args.cage)?;
    let coords = CoordinateMatrix::from_bytes(&read_bytes(&args.coords)?)?;
    coords.check_digests(&mesh, &cage)?;
    if labels.labels.len() != mesh.vertex_count() {
        return Err(CliError::Usage(format!(
            "{} labels for {} mesh vertices",
            labels.labels.len(),
            mesh.vertex_count()
        )));
    }
    let defaults = OverfitParams::default();
    let params = OverfitParams {
        iterations: args.iterations.unwrap_or(defaults.iterations),
        learning_rate: args.learning_rate.unwrap_or(defaults.learning_rate),
    };
    let (component_of, count) = component_labels(&mesh);
    let interior = interior_components(&mesh);
    let report = overfit_cage_signal(&coords, &labels.labels, labels.classes, &component_of, &params)?;
    let mut sizes = vec![0usize; count];
    for &c in &component_of {
        sizes[c] += 1;
    }
    let components: Vec<ComponentAccuracy> = (0..count)
        .map(|id| ComponentAccuracy {
            id,
            vertices: sizes[id],
            accuracy: report.component_accuracy.get(id).copied().unwrap_or(1.0),
            interior: interior.get(id).copied().unwrap_or(false),
        })
        .collect();
    let (hits, total) = components
        .iter()
        .filter(|c| c.interior)
        .fold((0.0, 0usize), |(h, t), c| (h + c.accuracy * c.vertices as f64, t + c.vertices));
    let summary = OverfitSummary {
        method: coords.method,
        mesh_digest: digest_hex(mesh.digest()),
        cage_digest: digest_hex(cage.digest()),
        classes: labels.classes,
        iterations: params.iterations,
        learning_rate: params.learning_rate,
        accuracy: report.accuracy,
        final_loss: report.final_loss,
        interior_accuracy: (total > 0).then(|| hits / total as f64),
        components,
    };
    write_json(&args.out, &summary)?;
    log::info!("overfit accuracy {:.4}", summary.accuracy);
    Ok(())
}
