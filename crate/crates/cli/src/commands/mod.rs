pub mod cage;
pub mod coords;
pub mod features;
pub mod fixtures;
pub mod map;
pub mod overfit;
pub mod report;
pub mod skin;
pub mod soup;

use std::path::Path;

use cagekit::mesh::{load_obj, obj_string};
use cagekit::TriangleMesh;
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::io::{file_sha256, write_atomic};
use crate::manifest::FileRef;

pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    Ok(load_obj(path)?)
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write_atomic(path, obj_string(mesh).as_bytes())
}

pub fn digest_hex(d: u64) -> String {
    format!("{d:016x}")
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

/// Writes `bytes` atomically and records the file digest in `fref`.
pub fn write_ref(path: &Path, bytes: &[u8], fref: &mut FileRef) -> Result<()> {
    write_atomic(path, bytes)?;
    fref.sha256 = Some(file_sha256(path)?);
    Ok(())
}

/// Runs `f` on every item in parallel and returns the results in input
/// order, failing with the first error in that order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    items.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}
