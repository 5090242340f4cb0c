//! Learning on wild triangle meshes through cages.
//!
//! A wild mesh (triangle soup, several components, non-manifold fans,
//! interior parts) is wrapped in a closed manifold single-component *cage*.
//! Generalized barycentric coordinates of the mesh vertices with respect to
//! the cage give a fixed linear operator that carries any per-cage-vertex
//! signal onto the mesh, so a predictor that only understands nice meshes can
//! run on the cage while losses are evaluated on the original input.
//!
//! Module map:
//!
//! - [`mesh`]: triangle meshes, OBJ I/O, topology reports, soups.
//! - [`spatial`]: point/triangle distance, BVH, winding numbers, distance grids.
//! - [`cage`]: marching cubes, interior removal, offset growth, QEM, cage generation.
//! - [`coords`]: mean value and harmonic coordinates, the mapping operator.
//! - [`features`]: cotangent Laplacian, spectra, heat kernel signatures,
//!   volumetric geodesic distances to bones.
//! - [`skin`]: skeletons, linear blend skinning, weight metrics.
//! - [`learn`]: predictor head, losses with analytic gradients, training.
//! - [`fixtures`]: deterministic synthetic corpora.

pub mod binio;
pub mod cage;
pub mod coords;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod learn;
pub mod mesh;
pub mod skin;
pub mod spatial;

pub use error::{Error, Result};
pub use mesh::{TopologyReport, TriangleMesh};

pub type Vec3 = nalgebra::Vector3<f64>;
