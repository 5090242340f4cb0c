use cagekit::mesh::make_soup;

use super::{load_mesh, write_mesh};
use crate::cli::SoupArgs;
use crate::error::Result;

pub fn run(args: &SoupArgs, seed: u64) -> Result<()> {
    let mesh = load_mesh(&args.mesh)?;
    let soup = make_soup(&mesh, args.noise, args.flip, seed)?;
    write_mesh(&args.out, &soup)
}
