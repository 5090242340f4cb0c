use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Cages, generalized barycentric coordinates and caged learning on wild
/// triangle meshes.
#[derive(Debug, Parser)]
#[command(name = "cagekit", version)]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Only report errors.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a cage around a mesh, or every cage of a manifest.
    Cage(CageArgs),
    /// Compute the coordinate matrix of a mesh with respect to its cage.
    Coords(CoordsArgs),
    /// Carry per-cage-vertex values onto the mesh vertices.
    Map(MapArgs),
    /// Compute cage features.
    Features(FeaturesArgs),
    /// Fit free cage logits to per-vertex labels and report accuracy.
    Overfit(OverfitArgs),
    /// Train the skinning head on a manifest.
    TrainSkin(TrainSkinArgs),
    /// Skinning metrics for predicted weights.
    EvalSkin(EvalSkinArgs),
    /// Deform a mesh with linear blend skinning.
    Lbs(LbsArgs),
    /// Turn a mesh into a triangle soup.
    Soup(SoupArgs),
    /// Write the synthetic fixture corpus.
    Fixtures(FixturesArgs),
    /// Topology report of a mesh, or digest verification of a manifest.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mvc,
    Harmonic,
}

impl From<MethodArg> for cagekit::coords::CoordinateMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mvc => Self::Mvc,
            MethodArg::Harmonic => Self::Harmonic,
        }
    }
}

#[derive(Debug, Args)]
pub struct CageArgs {
    /// Input mesh (OBJ), expected inside the unit box.
    #[arg(long, visible_alias = "mesh", required_unless_present = "manifest")]
    pub input: Option<PathBuf>,
    /// Output cage (OBJ).
    #[arg(long, required_unless_present = "manifest")]
    pub out: Option<PathBuf>,
    /// JSON report; with a manifest, one entry per record and offset.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub offset: f64,
    #[arg(long, default_value_t = 2000)]
    pub target_faces: usize,
    #[arg(long, default_value_t = 4000)]
    pub max_faces: usize,
    /// Distance grid nodes per axis.
    #[arg(long, default_value_t = 96)]
    pub grid: usize,
    /// Require every input vertex to lie inside the cage.
    #[arg(long)]
    pub enclose: bool,
    /// Generate every cage listed in a manifest with its settings.
    #[arg(long, conflicts_with_all = ["input", "out"])]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoordsArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub mesh: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub cage: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Mvc)]
    pub method: MethodArg,
    /// Output coordinate matrix (GBC1).
    #[arg(long, required_unless_present = "manifest")]
    pub out: Option<PathBuf>,
    /// Voxel grid nodes per axis for harmonic coordinates.
    #[arg(long, default_value_t = 48)]
    pub grid: usize,
    #[arg(long, conflicts_with_all = ["mesh", "cage", "out"])]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub coords: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub cage: PathBuf,
    /// Per-cage-vertex values (FTS1).
    #[arg(long)]
    pub values: PathBuf,
    /// Per-mesh-vertex values (FTS1).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub cage: Option<PathBuf>,
    /// Output features (FTS1).
    #[arg(long, required_unless_present = "manifest")]
    pub out: Option<PathBuf>,
    /// Skeleton JSON; adds one volumetric geodesic channel per bone.
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
    /// Voxel grid nodes per axis for geodesic distances.
    #[arg(long, default_value_t = 40)]
    pub geodesic_grid: usize,
    /// Add heat kernel signature channels.
    #[arg(long)]
    pub hks: bool,
    /// Eigenpairs used by the heat kernel signature.
    #[arg(long, default_value_t = 128)]
    pub eigen: usize,
    #[arg(long, conflicts_with_all = ["cage", "out", "skeleton", "hks"])]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OverfitArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Labels JSON: `{"classes": k, "labels": [...]}`, one label per vertex.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub cage: PathBuf,
    #[arg(long)]
    pub coords: PathBuf,
    /// Accuracy report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainSkinArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Training configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Trained head (HED1).
    #[arg(long)]
    pub out_head: PathBuf,
    /// Loss curve (CSV).
    #[arg(long)]
    pub curve: PathBuf,
    /// Feature standardizer (JSON); defaults to the head path with a
    /// `.standardizer.json` extension.
    #[arg(long)]
    pub standardizer: Option<PathBuf>,
    /// Training summary (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalSkinArgs {
    /// Evaluate every record of a manifest with a trained head.
    #[arg(long, requires = "head", conflicts_with_all = ["pred", "gt", "mesh"])]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub head: Option<PathBuf>,
    /// Standardizer written by train-skin; defaults to the one next to the head.
    #[arg(long)]
    pub standardizer: Option<PathBuf>,
    /// Directory receiving the predicted weights of every record.
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// Predicted weights JSON (single-mesh mode).
    #[arg(long, requires_all = ["gt", "clip", "mesh"])]
    pub pred: Option<PathBuf>,
    /// Ground-truth weights JSON (single-mesh mode).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Animation clip JSON (single-mesh mode).
    #[arg(long)]
    pub clip: Option<PathBuf>,
    /// Rest-pose mesh (single-mesh mode).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Also report weights with entries below this threshold removed.
    #[arg(long)]
    pub sparsify: Option<f64>,
    /// Metrics report (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LbsArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub clip: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SoupArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Standard deviation of the Gaussian noise added to every vertex copy.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Fraction of faces whose orientation is reversed.
    #[arg(long, default_value_t = 0.5)]
    pub flip: f64,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub mesh: Option<PathBuf>,
    /// Cage of the mesh; adds its topology and the minimum winding number of
    /// the mesh vertices.
    #[arg(long)]
    pub cage: Option<PathBuf>,
    /// Verify every digest recorded in a manifest.
    #[arg(long, conflicts_with_all = ["mesh", "cage"])]
    pub manifest: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
