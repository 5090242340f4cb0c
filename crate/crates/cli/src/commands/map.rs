use cagekit::coords::{map_signal, CoordinateMatrix};
use cagekit::features::FeatureSet;

use super::load_mesh;
use crate::cli::MapArgs;
use crate::error::Result;
use crate::io::{read_bytes, write_atomic};

pub fn run(args: &MapArgs) -> Result<()> {
    let coords = CoordinateMatrix::from_bytes(&read_bytes(&args.coords)?)?;
    let mesh = load_mesh(&args.mesh)?;
    let cage = load_mesh(&args.cage)?;
    coords.check_digests(&mesh, &cage)?;
    let values = FeatureSet::from_bytes(&read_bytes(&args.values)?)?;
    let mapped = map_signal(&coords, &values.values)?;
    let out = FeatureSet::new(mapped, values.labels)?;
    write_atomic(&args.out, &out.to_bytes())
}
