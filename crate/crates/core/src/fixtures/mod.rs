//! Deterministic synthetic fixtures: primitive shapes, a corpus of wild
//! meshes and rigged articulated tubes.

mod articulated;
mod corpus;
pub mod shapes;

pub use articulated::{articulated_corpus, articulated_tube, tube_weights_at, ArticulatedTube, TubeParams};
pub use corpus::{
    book, character, face_labels_from_vertices, finned_box, has_interior_component, interior_organ,
    nested_shells, observed_classes, two_spheres, wild_corpus, CorpusEntry, WildClass,
};
