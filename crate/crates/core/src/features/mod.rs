//! Input features on the cage: cotangent Laplacian and its spectrum, heat
//! kernel signatures, volumetric geodesic distances to bones.

mod geodesic;
mod laplacian;
mod set;
mod spectral;

pub use geodesic::{volumetric_geodesic_to_bones, DEFAULT_GEODESIC_DIMS};
pub use laplacian::{cotan_laplacian_mass, LaplaceOperator, SparseMatrix, COT_CLAMP};
pub use set::{position_features, FeatureSet, Standardizer, HKS_PREFIX};
pub use spectral::{
    default_hks_times, eigenbasis, hks_features, log_spaced_times, EigenSolver, SpectralBasis,
    DEFAULT_EIGEN_COUNT, DENSE_LIMIT, EIGEN_TOLERANCE,
};
