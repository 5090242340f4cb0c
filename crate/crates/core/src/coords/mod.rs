//! Generalized barycentric coordinates of mesh vertices with respect to a
//! cage, and the linear operator they define.

mod harmonic;
mod matrix;
mod mvc;

pub use harmonic::{compute_harmonic_matrix, HarmonicParams};
pub use matrix::{average_to_faces, map_signal, CoordinateMatrix, CoordinateMethod};
pub use mvc::{compute_mvc_matrix, mvc_weights};
