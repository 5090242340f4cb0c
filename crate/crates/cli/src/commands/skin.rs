use std::path::{Path, PathBuf};

use cagekit::coords::CoordinateMatrix;
use cagekit::features::{FeatureSet, Standardizer};
use cagekit::learn::{
    build_symmetry_pairs, loss_curve_csv, predict_mesh, train as train_head, CageSample,
    LossBreakdown, PredictorHead, Target, Task, TrainConfig, TrainingMesh,
};
use cagekit::skin::{
    detect_symmetric_vertices, lbs_deform, metric_avg_l1, metric_prf1, metric_vertex_distance,
    sparsify_weights, AnimationClip, SkinWeights, INFLUENCE_THRESHOLD,
};
use cagekit::TriangleMesh;
use serde::{Deserialize, Serialize};

use super::{load_mesh, par_map, required, write_mesh};
use crate::cli::{EvalSkinArgs, LbsArgs, TrainSkinArgs};
use crate::error::{CliError, Result};
use crate::io::{read_bytes, read_json, write_atomic, write_json};
use crate::manifest::{LoadedManifest, MeshRecord, Stage};

/// Mirror-match tolerance of the symmetry term, relative to the mesh bounding
/// box diagonal.
pub const SYMMETRY_TOLERANCE: f64 = 1e-6;

struct LoadedCage {
    cage: TriangleMesh,
    coords: CoordinateMatrix,
    features: FeatureSet,
}

struct LoadedRecord {
    name: String,
    mesh: TriangleMesh,
    gt: SkinWeights,
    clip: Option<AnimationClip>,
    cages: Vec<LoadedCage>,
}

fn load_record(loaded: &LoadedManifest, r: &MeshRecord, cages: usize) -> Result<LoadedRecord> {
    let weights = r
        .weights
        .as_ref()
        .ok_or_else(|| CliError::Manifest(format!("record {} has no ground-truth weights", r.name)))?;
    let clip = r
        .clip
        .as_ref()
        .map(|c| AnimationClip::load(loaded.resolve(c)))
        .transpose()?;
    let cages = r
        .cages
        .iter()
        .take(cages)
        .map(|c| {
            Ok(LoadedCage {
                cage: load_mesh(&loaded.resolve(&c.cage))?,
                coords: CoordinateMatrix::from_bytes(&read_bytes(&loaded.resolve(&c.coords))?)?,
                features: FeatureSet::load(loaded.resolve(&c.features))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LoadedRecord {
        name: r.name.clone(),
        mesh: load_mesh(&loaded.resolve(&r.mesh))?,
        gt: SkinWeights::load(loaded.resolve(weights))?,
        clip,
        cages,
    })
}

fn load_records(loaded: &LoadedManifest, cages: usize) -> Result<Vec<LoadedRecord>> {
    par_map(&loaded.manifest.records, |r| load_record(loaded, r, cages))
}

fn default_standardizer_path(head: &Path) -> PathBuf {
    head.with_extension("standardizer.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub meshes: usize,
    pub cages_per_mesh: usize,
    pub epochs: usize,
    pub parameters: usize,
    pub feature_channels: Vec<String>,
    pub symmetry_pairs: Vec<Vec<(usize, usize)>>,
    pub final_loss: Option<LossBreakdown>,
}

pub fn train(args: &TrainSkinArgs, seed: Option<u64>) -> Result<()> {
    let loaded = LoadedManifest::load(&args.manifest)?;
    loaded.verify(Stage::Features)?;
    let mut config: TrainConfig = read_json(&args.config)?;
    config.validate()?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if config.augmentation_offsets != loaded.manifest.config.offsets {
        return Err(CliError::Manifest(format!(
            "training offsets {:?} differ from the manifest offsets {:?}",
            config.augmentation_offsets, loaded.manifest.config.offsets
        )));
    }
    let records = load_records(&loaded, usize::MAX)?;
    let all_sets: Vec<&FeatureSet> = records.iter().flat_map(|r| r.cages.iter().map(|c| &c.features)).collect();
    let standardizer = Standardizer::fit(&all_sets)?;
    let data = par_map(&records, |r| {
        let cages = r
            .cages
            .iter()
            .map(|c| {
                let feats = standardizer.apply(&c.features)?;
                Ok(CageSample::new(&r.mesh, &c.cage, c.coords.clone(), &feats)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let symmetry = detect_symmetric_vertices(&r.mesh, SYMMETRY_TOLERANCE * r.mesh.bbox_diagonal());
        let pairs = build_symmetry_pairs(&r.gt, &symmetry, config.symmetry_delta, config.symmetry_epsilon)?;
        Ok(TrainingMesh {
            cages,
            target: Target::Skinning {
                gt: r.gt.clone(),
                symmetry,
                pairs,
            },
        })
    })?;
    let bones = records.first().map_or(0, |r| r.gt.bone_count());
    let head = PredictorHead::new(
        standardizer.labels.len(),
        config.hidden_dim,
        bones,
        config.smoothing_steps,
        config.smoothing_rate,
        config.seed,
    )?;
    let outcome = train_head(head, &data, &config)?;
    let summary = TrainSummary {
        meshes: data.len(),
        cages_per_mesh: loaded.manifest.config.offsets.len(),
        epochs: config.epochs,
        parameters: outcome.head.param_count(),
        feature_channels: standardizer.labels.clone(),
        symmetry_pairs: data
            .iter()
            .map(|m| match &m.target {
                Target::Skinning { pairs, .. } => pairs.clone(),
                Target::Segmentation { .. } => Vec::new(),
            })
            .collect(),
        final_loss: outcome.curve.last().map(|r| r.loss),
    };
    let std_path = args
        .standardizer
        .clone()
        .unwrap_or_else(|| default_standardizer_path(&args.out_head));
    write_atomic(&args.out_head, &outcome.head.to_bytes())?;
    write_json(&std_path, &standardizer)?;
    write_atomic(&args.curve, loss_curve_csv(&outcome.curve).as_bytes())?;
    if let Some(p) = &args.report {
        write_json(p, &summary)?;
    }
    if let Some(l) = summary.final_loss {
        log::info!("final training loss {:.6}", l.total);
    }
    Ok(())
}

/// One row of skinning metrics: L1 and distances unitless, precision,
/// recall and F1 in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SkinMetrics {
    pub avg_l1: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub avg_dist: f64,
    pub max_dist: f64,
}

impl SkinMetrics {
    pub fn compute(mesh: &TriangleMesh, pred: &SkinWeights, gt: &SkinWeights, clip: &AnimationClip) -> Result<Self> {
        let prf = metric_prf1(pred, gt, INFLUENCE_THRESHOLD)?;
        let (avg_dist, max_dist) = metric_vertex_distance(mesh, pred, gt, clip)?;
        Ok(Self {
            avg_l1: metric_avg_l1(pred, gt)?,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            avg_dist,
            max_dist,
        })
    }

    fn mean(rows: &[SkinMetrics]) -> Self {
        let k = rows.len().max(1) as f64;
        let sum = |f: fn(&SkinMetrics) -> f64| rows.iter().map(f).sum::<f64>() / k;
        Self {
            avg_l1: sum(|m| m.avg_l1),
            precision: sum(|m| m.precision),
            recall: sum(|m| m.recall),
            f1: sum(|m| m.f1),
            avg_dist: sum(|m| m.avg_dist),
            max_dist: sum(|m| m.max_dist),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshMetrics {
    pub name: String,
    #[serde(flatten)]
    pub metrics: SkinMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub variant: String,
    pub mean: SkinMetrics,
    pub meshes: Vec<MeshMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub influence_threshold: f64,
    pub sparsify_threshold: Option<f64>,
    pub variants: Vec<VariantMetrics>,
}

fn evaluate(
    items: &[EvalItem],
    sparsify: Option<f64>,
) -> Result<EvalReport> {
    let mut variants = Vec::new();
    let mut push = |variant: &str, rows: Vec<MeshMetrics>| {
        let metrics: Vec<SkinMetrics> = rows.iter().map(|r| r.metrics).collect();
        variants.push(VariantMetrics {
            variant: variant.into(),
            mean: SkinMetrics::mean(&metrics),
            meshes: rows,
        });
    };
    let rows = par_map(items, |(name, mesh, pred, gt, clip)| {
        Ok(MeshMetrics {
            name: name.clone(),
            metrics: SkinMetrics::compute(mesh, pred, gt, clip)?,
        })
    })?;
    push("ours", rows);
    if let Some(t) = sparsify {
        let rows = par_map(items, |(name, mesh, pred, gt, clip)| {
            let sparse = sparsify_weights(pred, t)?;
            Ok(MeshMetrics {
                name: name.clone(),
                metrics: SkinMetrics::compute(mesh, &sparse, gt, clip)?,
            })
        })?;
        push("ours_s", rows);
    }
    Ok(EvalReport {
        influence_threshold: INFLUENCE_THRESHOLD,
        sparsify_threshold: sparsify,
        variants,
    })
}

pub fn eval(args: &EvalSkinArgs) -> Result<()> {
    let items = match &args.manifest {
        Some(m) => predicted_items(args, m)?,
        None => {
            let mesh = load_mesh(required(&args.mesh, "--mesh")?)?;
            let pred = SkinWeights::load(required(&args.pred, "--pred")?)?;
            let gt = SkinWeights::load(required(&args.gt, "--gt")?)?;
            let clip = AnimationClip::load(required(&args.clip, "--clip")?)?;
            vec![("mesh".to_string(), mesh, pred, gt, clip)]
        }
    };
    let report = evaluate(&items, args.sparsify)?;
    write_json(&args.out, &report)?;
    for v in &report.variants {
        log::info!(
            "{}: avg L1 {:.4}, precision {:.2}, recall {:.2}",
            v.variant,
            v.mean.avg_l1,
            v.mean.precision,
            v.mean.recall
        );
    }
    Ok(())
}

type EvalItem = (String, TriangleMesh, SkinWeights, SkinWeights, AnimationClip);

fn predicted_items(args: &EvalSkinArgs, manifest: &Path) -> Result<Vec<EvalItem>> {
    let loaded = LoadedManifest::load(manifest)?;
    loaded.verify(Stage::Features)?;
    let head_path = required(&args.head, "--head")?;
    let head = PredictorHead::load(head_path)?;
    let std_path = args
        .standardizer
        .clone()
        .unwrap_or_else(|| default_standardizer_path(head_path));
    let standardizer: Standardizer = read_json(&std_path)?;
    let records = load_records(&loaded, 1)?;
    let items = par_map(&records, |r| {
        let c = r
            .cages
            .first()
            .ok_or_else(|| CliError::Manifest(format!("record {} lists no cage", r.name)))?;
        let feats = standardizer.apply(&c.features)?;
        let sample = CageSample::new(&r.mesh, &c.cage, c.coords.clone(), &feats)?;
        let pred = SkinWeights::new(predict_mesh(&head, &r.mesh, &c.cage, &sample, Task::Skinning)?)?;
        let clip = r
            .clip
            .clone()
            .ok_or_else(|| CliError::Manifest(format!("record {} has no animation clip", r.name)))?;
        Ok((r.name.clone(), r.mesh.clone(), pred, r.gt.clone(), clip))
    })?;
    if let Some(dir) = &args.pred_dir {
        for (name, _, pred, _, _) in &items {
            let mut text = pred.to_json_string();
            text.push('\n');
            write_atomic(&dir.join(format!("{name}.weights.json")), text.as_bytes())?;
        }
    }
    Ok(items)
}

pub fn lbs(args: &LbsArgs) -> Result<()> {
    let mesh = load_mesh(&args.mesh)?;
    let weights = SkinWeights::load(&args.weights)?;
    let clip = AnimationClip::load(&args.clip)?;
    let frame = clip.frames.get(args.frame).ok_or_else(|| {
        CliError::Usage(format!(
            "frame {} requested from a clip with {} frames",
            args.frame,
            clip.frames.len()
        ))
    })?;
    let deformed = lbs_deform(&mesh, &weights, frame)?;
    write_mesh(&args.out, &deformed)
}
